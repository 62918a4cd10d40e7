#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <sstream>

#include "goodwill/errors.hpp"

namespace goodwill::ode {

struct Options {
  double rtol = 1e-12;
  double atol = 1e-13;
  double initial_step = 1e-3;
  double max_step = 0.0;  // 0: unbounded
  std::size_t max_steps = 2'000'000;
};

/// Adaptive Dormand-Prince 5(4) integrator for small fixed-size systems.
/// The step size carries over between successive advance() calls, so
/// stepping knot to knot costs the same as one long integration.
template <std::size_t N>
class DormandPrince {
 public:
  using State = std::array<double, N>;

  explicit DormandPrince(Options opt = {}) : opt_(opt), h_(opt.initial_step) {}

  /// Advances y from t to t_end (either direction). Throws NumericalFailure
  /// on step-size underflow, non-finite states or too many steps.
  template <class F>
  void advance(const F& rhs, double& t, State& y, double t_end) {
    const double dir = t_end >= t ? 1.0 : -1.0;
    if (t == t_end) return;
    while (dir * (t_end - t) > 0.0) {
      if (++steps_ > opt_.max_steps) fail("too many steps", t);
      if (opt_.max_step > 0.0) h_ = std::min(h_, opt_.max_step);
      double h = h_;
      bool last = false;
      if (h >= std::abs(t_end - t)) {
        h = std::abs(t_end - t);
        last = true;
      }
      State y5, err;
      step(rhs, t, y, dir * h, y5, err);
      double norm = 0.0;
      for (std::size_t i = 0; i < N; ++i) {
        const double sc = opt_.atol + opt_.rtol * std::max(std::abs(y[i]), std::abs(y5[i]));
        const double q = std::abs(err[i] / sc);
        // NaN must not be swallowed by max().
        norm = std::isfinite(y5[i]) && !std::isnan(q) ? std::max(norm, q) : HUGE_VAL;
      }
      if (!std::isfinite(norm)) {
        h_ = 0.2 * h;
        if (h_ < 1e-14 * std::max(1.0, std::abs(t))) fail("non-finite state", t);
        continue;
      }
      if (norm <= 1.0) {
        t = last ? t_end : t + dir * h;
        y = y5;
        const double grow = norm == 0.0 ? 5.0 : std::min(5.0, 0.9 * std::pow(norm, -0.2));
        // A step shortened to hit t_end says nothing about the natural size.
        if (!last || grow < 1.0) h_ = h * std::max(0.2, grow);
      } else {
        h_ = h * std::max(0.2, 0.9 * std::pow(norm, -0.2));
        if (h_ < 1e-14 * std::max(1.0, std::abs(t))) fail("step size underflow", t);
      }
    }
  }

  std::size_t steps() const { return steps_; }

 private:
  template <class F>
  static void step(const F& rhs, double t, const State& y, double h, State& y5, State& err) {
    // Dormand-Prince tableau.
    constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    constexpr double a21 = 1.0 / 5;
    constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                     a54 = -212.0 / 729;
    constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                     a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                     b6 = 11.0 / 84;
    constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                     e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
    State k1, k2, k3, k4, k5, k6, k7, tmp;
    k1 = rhs(t, y);
    for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + h * a21 * k1[i];
    k2 = rhs(t + c2 * h, tmp);
    for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
    k3 = rhs(t + c3 * h, tmp);
    for (std::size_t i = 0; i < N; ++i)
      tmp[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
    k4 = rhs(t + c4 * h, tmp);
    for (std::size_t i = 0; i < N; ++i)
      tmp[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
    k5 = rhs(t + c5 * h, tmp);
    for (std::size_t i = 0; i < N; ++i)
      tmp[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
    k6 = rhs(t + h, tmp);
    for (std::size_t i = 0; i < N; ++i)
      y5[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
    k7 = rhs(t + h, y5);
    for (std::size_t i = 0; i < N; ++i)
      err[i] = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
  }

  [[noreturn]] static void fail(const char* what, double t) {
    std::ostringstream msg;
    msg << "ODE integration failed: " << what << " at t = " << t;
    throw NumericalFailure(msg.str());
  }

  Options opt_;
  double h_;
  std::size_t steps_ = 0;
};

}  // namespace goodwill::ode
