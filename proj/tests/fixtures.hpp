#pragma once

#include <cmath>

#include "goodwill/diffusion.hpp"

namespace fixtures {

// b = 0, sigma = sqrt(2) x, r = 2, h = sqrt(x), k = 1.
inline goodwill::DiffusionModel gbm_canon_model() {
  goodwill::DiffusionModel m;
  m.b = goodwill::SmoothFn1D([](double) { return 0.0; }, [](double) { return 0.0; });
  m.sigma = goodwill::SmoothFn1D([](double x) { return std::sqrt(2.0) * x; },
                                 [](double) { return std::sqrt(2.0); },
                                 [](double) { return 0.0; });
  m.r = goodwill::SmoothFn1D::constant(2.0);
  m.c = 1.0;
  m.r0 = 2.0;
  return m;
}

inline goodwill::ControlProblem gbm_canon() {
  goodwill::ControlProblem p;
  p.model = gbm_canon_model();
  p.h = goodwill::SmoothFn1D([](double x) { return std::sqrt(x); },
                             [](double x) { return 0.5 / std::sqrt(x); },
                             [](double x) { return -0.25 / (x * std::sqrt(x)); });
  p.k = goodwill::SmoothFn1D::constant(1.0);
  p.big_k = goodwill::SmoothFn1D([](double x) { return x; }, [](double) { return 1.0; });
  return p;
}

inline goodwill::ControlProblem no_action() {
  auto p = gbm_canon();
  p.h = goodwill::SmoothFn1D::constant(0.0);
  return p;
}

// CIR(alpha, theta, sigma) with constant discount r1.
inline goodwill::DiffusionModel cir_model(double alpha, double theta, double sig, double r1) {
  goodwill::DiffusionModel m;
  m.b = goodwill::SmoothFn1D([=](double x) { return alpha * (theta - x); },
                             [=](double) { return -alpha; });
  m.sigma = goodwill::SmoothFn1D([=](double x) { return sig * std::sqrt(x); },
                                 [=](double x) { return 0.5 * sig / std::sqrt(x); });
  m.r = goodwill::SmoothFn1D::constant(r1);
  m.c = 1.0;
  m.r0 = r1;
  return m;
}

inline goodwill::GridSpec canon_grid() {
  goodwill::GridSpec g;
  g.x_min = 0.01;
  g.x_max = 100.0;
  g.n_points = 201;
  g.spacing = goodwill::Spacing::Logarithmic;
  return g;
}

}  // namespace fixtures
