#pragma once

#include <cmath>
#include <sstream>
#include <string>

#include "goodwill/diffusion.hpp"
#include "goodwill/errors.hpp"
#include "goodwill/numerics/quadrature.hpp"
#include "goodwill/numerics/roots.hpp"
#include "goodwill/smooth_fn.hpp"

namespace goodwill {

// ---------------------------------------------------------------------------
// Geometric Brownian motion: dX = bX dt + sigma X dW, r = r1, h = lambda x^nu,
// k = kappa.

struct GbmParams {
  double b_rate = 0.0;
  double sigma_rate = std::sqrt(2.0);
  double r1 = 2.0;
  double lambda = 1.0;
  double kappa = 1.0;
  double nu = 0.5;

  void validate() const {
    std::ostringstream msg;
    if (!(sigma_rate > 0.0)) msg << "gbm: sigma must be positive";
    else if (!(r1 > 0.0)) msg << "gbm: r1 must be positive";
    else if (!(r1 > b_rate)) msg << "gbm: r1 must exceed b (r1 = " << r1 << ", b = " << b_rate << ")";
    else if (!(lambda > 0.0) || !(kappa > 0.0)) msg << "gbm: lambda and kappa must be positive";
    else if (!(nu > 0.0 && nu < 1.0)) msg << "gbm: nu must lie in (0, 1)";
    if (!msg.str().empty()) throw ConfigError(msg.str());
  }
};

struct GbmExponents {
  double m, n;
};

/// Roots of ½σ²l² + (b − ½σ²)l − r1 = 0.
inline GbmExponents gbm_exponents(const GbmParams& p) {
  p.validate();
  const double A = 0.5 * p.sigma_rate * p.sigma_rate;
  const double B = p.b_rate - A;
  const double C = -p.r1;
  const double disc = std::sqrt(B * B - 4.0 * A * C);
  // Stable pairing: compute the larger-magnitude root first.
  const double q = -0.5 * (B + std::copysign(disc, B == 0.0 ? 1.0 : B));
  double l1 = q / A, l2 = C / q;
  if (l1 > l2) std::swap(l1, l2);
  return {l1, l2};
}

struct ClosedForms {
  SmoothFn1D phi, psi, p_prime;
};

inline ClosedForms gbm_closed_forms(const GbmParams& p) {
  const auto e = gbm_exponents(p);
  auto power = [](double k) {
    return SmoothFn1D([k](double x) { return std::pow(x, k); },
                      [k](double x) { return k * std::pow(x, k - 1.0); },
                      [k](double x) { return k * (k - 1.0) * std::pow(x, k - 2.0); });
  };
  return {power(e.m), power(e.n), power(e.n + e.m - 1.0)};
}

/// Closed-form free boundary; Case II always applies to this family.
inline double gbm_boundary(const GbmParams& p) {
  const auto e = gbm_exponents(p);
  const double bracket = p.lambda * p.nu * (e.n - 1.0) / (p.kappa * (p.r1 - p.b_rate) * (e.n - p.nu));
  return std::pow(bracket, 1.0 / (1.0 - p.nu));
}

inline DiffusionModel gbm_model(const GbmParams& p) {
  p.validate();
  DiffusionModel m;
  const double b = p.b_rate, s = p.sigma_rate;
  m.b = SmoothFn1D([b](double x) { return b * x; }, [b](double) { return b; },
                   [](double) { return 0.0; });
  m.sigma = SmoothFn1D([s](double x) { return s * x; }, [s](double) { return s; },
                       [](double) { return 0.0; });
  m.r = SmoothFn1D::constant(p.r1);
  m.c = 1.0;
  m.r0 = p.r1;
  return m;
}

namespace detail {

inline SmoothFn1D power_payoff(double lambda, double nu) {
  if (nu == 0.5) {
    return SmoothFn1D([=](double x) { return lambda * std::sqrt(x); },
                      [=](double x) { return 0.5 * lambda / std::sqrt(x); },
                      [=](double x) { return -0.25 * lambda / (x * std::sqrt(x)); });
  }
  return SmoothFn1D([=](double x) { return lambda * std::pow(x, nu); },
                    [=](double x) { return lambda * nu * std::pow(x, nu - 1.0); },
                    [=](double x) { return lambda * nu * (nu - 1.0) * std::pow(x, nu - 2.0); });
}

inline SmoothFn1D linear_cost(double kappa) {
  return SmoothFn1D([kappa](double x) { return kappa * x; }, [kappa](double) { return kappa; },
                    [](double) { return 0.0; });
}

}  // namespace detail

inline ControlProblem make_gbm_problem(const GbmParams& p) {
  ControlProblem cp;
  cp.model = gbm_model(p);
  cp.h = detail::power_payoff(p.lambda, p.nu);
  cp.k = SmoothFn1D::constant(p.kappa);
  cp.big_k = detail::linear_cost(p.kappa);
  return cp;
}

// ---------------------------------------------------------------------------
// Confluent hypergeometric functions.

// Above these arguments the asymptotic expansions take over (if they
// converge for the given parameters).
inline constexpr double kKummerMSwitch = 50.0;
inline constexpr double kKummerUSwitch = 30.0;

/// value = mantissa * exp(exponent).
struct ScaledValue {
  double mantissa = 0.0;
  double exponent = 0.0;
  double value() const { return mantissa * std::exp(exponent); }
  double log_abs() const { return std::log(std::abs(mantissa)) + exponent; }
};

namespace detail {

inline bool nonpositive_integer(double v) { return v <= 0.0 && v == std::floor(v); }

// Sign of Gamma(z) for z not a pole.
inline double gamma_sign(double z) {
  if (z > 0.0) return 1.0;
  return static_cast<long long>(std::floor(z)) % 2 == 0 ? 1.0 : -1.0;
}

// Power series, rescaled as it grows so large x cannot overflow.
inline ScaledValue kummer_m_series(double a, double b, double x) {
  constexpr double kBig = 1e200;
  double term = 1.0, sum = 1.0, scale = 0.0;
  for (int k = 0; k < 100000; ++k) {
    term *= (a + k) / (b + k) * x / (k + 1);
    sum += term;
    if (term == 0.0 || (std::abs(term) <= 1e-17 * std::abs(sum) && k > x)) return {sum, scale};
    if (std::abs(sum) > kBig) {
      sum /= kBig;
      term /= kBig;
      scale += std::log(kBig);
    }
  }
  throw NumericalFailure("kummer_m: series did not converge");
}

// Leading asymptotic sum for large positive x, the exponentially smaller
// branch dropped. False when the terms grow before reaching rounding level.
inline bool kummer_m_asymptotic(double a, double b, double x, ScaledValue& out) {
  double term = 1.0, sum = 1.0;
  bool converged = false;
  for (int k = 0; k < 400; ++k) {
    const double next = term * (b - a + k) * (1.0 - a + k) / ((k + 1) * x);
    if (std::abs(next) > std::abs(term) && k > 0) break;
    term = next;
    sum += term;
    if (std::abs(term) <= 1e-17 * std::abs(sum)) {
      converged = true;
      break;
    }
  }
  if (!converged) return false;
  out.mantissa = gamma_sign(b) * gamma_sign(a) * sum;
  out.exponent = x + (a - b) * std::log(x) + std::lgamma(b) - std::lgamma(a);
  return true;
}

}  // namespace detail

/// 1F1(a; b; x) in scaled form.
inline ScaledValue kummer_m_scaled(double a, double b, double x) {
  if (detail::nonpositive_integer(b)) {
    std::ostringstream msg;
    msg << "kummer_m: b = " << b << " is a pole";
    throw ConfigError(msg.str());
  }
  if (x < 0.0) {
    // Kummer's transformation keeps the series free of cancellation.
    auto s = kummer_m_scaled(b - a, b, -x);
    s.exponent += x;
    return s;
  }
  ScaledValue v;
  if (x > kKummerMSwitch && !detail::nonpositive_integer(a) && detail::kummer_m_asymptotic(a, b, x, v)) return v;
  return detail::kummer_m_series(a, b, x);
}

inline double kummer_m(double a, double b, double x) { return kummer_m_scaled(a, b, x).value(); }

namespace detail {

inline bool kummer_u_asymptotic(double a, double b, double x, double& out) {
  double term = 1.0, sum = 1.0;
  for (int k = 0; k < 400; ++k) {
    const double next = -term * (a + k) * (a - b + 1.0 + k) / ((k + 1) * x);
    if (std::abs(next) > std::abs(term) && k > 0) return false;
    term = next;
    sum += term;
    if (std::abs(term) <= 1e-17 * std::abs(sum)) {
      out = std::pow(x, -a) * sum;
      return true;
    }
  }
  return false;
}

// Gamma(a) U(a, b; x) = ∫ e^{-xt} t^{a-1} (1+t)^{b-a-1} dt. For a < 1 the
// substitution t = v^{1/a} removes the endpoint singularity.
inline double kummer_u_integral(double a, double b, double x) {
  quad::Tolerance tol;
  tol.rel = 1e-13;
  tol.abs = 1e-300;
  quad::TailOptions topt;
  topt.rel = 1e-13;
  topt.cutoff = 1e-16;
  const double t1 = 1.0 / x;
  double total = 0.0;
  if (a < 1.0) {
    auto f = [=](double v) {
      if (v <= 0.0) return 1.0;
      const double t = std::pow(v, 1.0 / a);
      return std::exp(-x * t + (b - a - 1.0) * std::log1p(t));
    };
    const double v1 = std::pow(t1, a);
    const auto head = quad::integrate(f, 0.0, v1, tol);
    const auto tail = quad::integrate_upper_tail(f, v1, 1e300, topt);
    if (!head.converged || !tail.converged) throw NumericalFailure("kummer_u: quadrature did not converge");
    total = (head.value + tail.value) / a;
  } else {
    auto f = [=](double t) {
      if (t <= 0.0) return a == 1.0 ? 1.0 : 0.0;
      return std::exp(-x * t + (a - 1.0) * std::log(t) + (b - a - 1.0) * std::log1p(t));
    };
    const auto head = quad::integrate(f, 0.0, t1, tol);
    const auto tail = quad::integrate_upper_tail(f, t1, 1e300, topt);
    if (!head.converged || !tail.converged) throw NumericalFailure("kummer_u: quadrature did not converge");
    total = head.value + tail.value;
  }
  return total / std::tgamma(a);
}

}  // namespace detail

/// Tricomi U(a, b; x) for a > 0 and x > 0.
inline double kummer_u(double a, double b, double x) {
  if (!(x > 0.0)) throw ConfigError("kummer_u: x must be positive");
  if (!(a > 0.0)) {
    std::ostringstream msg;
    msg << "kummer_u: a = " << a << " is outside the supported range a > 0";
    throw ConfigError(msg.str());
  }
  double v;
  if (x >= kKummerUSwitch && detail::kummer_u_asymptotic(a, b, x, v)) return v;
  return detail::kummer_u_integral(a, b, x);
}

// ---------------------------------------------------------------------------
// Mean-reverting square-root process: dX = alpha(theta - X) dt + sigma sqrt(X) dW.

struct CirParams {
  double alpha = 1.0;
  double theta = 1.0;
  double sigma_cir = 1.0;
  double r1 = 0.1;
  double lambda = 1.0;
  double kappa = 1.0;
  double nu = 0.5;

  void validate() const {
    std::ostringstream msg;
    if (!(alpha > 0.0) || !(theta > 0.0) || !(sigma_cir > 0.0)) msg << "cir: alpha, theta, sigma must be positive";
    else if (!(r1 > 0.0) || !(lambda > 0.0) || !(kappa > 0.0)) msg << "cir: r1, lambda, kappa must be positive";
    else if (!(nu > 0.0 && nu < 1.0)) msg << "cir: nu must lie in (0, 1)";
    else if (!(alpha * theta - 0.5 * sigma_cir * sigma_cir > 0.0))
      msg << "cir: alpha*theta - sigma^2/2 must be positive (got " << alpha * theta - 0.5 * sigma_cir * sigma_cir
          << ")";
    if (!msg.str().empty()) throw ConfigError(msg.str());
  }

  double yscale() const { return 2.0 * alpha / (sigma_cir * sigma_cir); }
  double b_par() const { return 2.0 * alpha * theta / (sigma_cir * sigma_cir); }
  double a_par() const { return r1 / alpha; }
  /// D_rQ(x) = λν x^{ν-1} − κ(α + r1).
  double drq(double x) const { return lambda * nu * std::pow(x, nu - 1.0) - kappa * (alpha + r1); }
  double x_star() const { return std::pow(lambda * nu / (kappa * (alpha + r1)), 1.0 / (1.0 - nu)); }
};

inline DiffusionModel cir_model(const CirParams& p) {
  p.validate();
  DiffusionModel m;
  const double al = p.alpha, th = p.theta, s = p.sigma_cir;
  m.b = SmoothFn1D([=](double x) { return al * (th - x); }, [=](double) { return -al; },
                   [](double) { return 0.0; });
  m.sigma = SmoothFn1D([=](double x) { return s * std::sqrt(x); },
                       [=](double x) { return 0.5 * s / std::sqrt(x); },
                       [=](double x) { return -0.25 * s / (x * std::sqrt(x)); });
  m.r = SmoothFn1D::constant(p.r1);
  m.c = 1.0;
  m.r0 = p.r1;
  return m;
}

inline ControlProblem make_cir_problem(const CirParams& p) {
  ControlProblem cp;
  cp.model = cir_model(p);
  cp.h = detail::power_payoff(p.lambda, p.nu);
  cp.k = SmoothFn1D::constant(p.kappa);
  cp.big_k = detail::linear_cost(p.kappa);
  return cp;
}

/// φ and ψ as normalised Tricomi/Kummer ratios with c = 1.
inline ClosedForms cir_closed_forms(const CirParams& p) {
  p.validate();
  const double a = p.a_par(), b = p.b_par(), y = p.yscale();
  const double u1 = kummer_u(a, b, y);
  const auto m1 = kummer_m_scaled(a, b, y);
  auto m_ratio = [=](double aa, double bb, double x) {
    const auto v = kummer_m_scaled(aa, bb, y * x);
    return v.mantissa / m1.mantissa * std::exp(v.exponent - m1.exponent);
  };
  ClosedForms cf;
  cf.phi = SmoothFn1D([=](double x) { return kummer_u(a, b, y * x) / u1; },
                      [=](double x) { return -a * y * kummer_u(a + 1, b + 1, y * x) / u1; },
                      [=](double x) { return a * (a + 1) * y * y * kummer_u(a + 2, b + 2, y * x) / u1; });
  cf.psi = SmoothFn1D([=](double x) { return m_ratio(a, b, x); },
                      [=](double x) { return a / b * y * m_ratio(a + 1, b + 1, x); },
                      [=](double x) { return a * (a + 1) / (b * (b + 1)) * y * y * m_ratio(a + 2, b + 2, x); });
  cf.p_prime = SmoothFn1D([=](double x) { return std::exp(-b * std::log(x) + y * (x - 1.0)); },
                          [=](double x) { return (y - b / x) * std::exp(-b * std::log(x) + y * (x - 1.0)); });
  return cf;
}

/// g(x) = ∫_x^∞ D_rQ φ'/(r p') ds written with the Tricomi derivative rule:
/// −(2e^y/(σ²U(a,b;y))) ∫_x^∞ D_rQ(s) s^b e^{−ys} U(a+1, b+1; ys) ds.
inline double cir_g(const CirParams& p, double x) {
  p.validate();
  if (!(x > 0.0)) throw ConfigError("cir_g: x must be positive");
  const double a = p.a_par(), b = p.b_par(), y = p.yscale();
  const double pref = -2.0 * std::exp(y) / (p.sigma_cir * p.sigma_cir * kummer_u(a, b, y));
  auto f = [&](double s) {
    const double w = std::exp(b * std::log(s) - y * s);
    return w == 0.0 ? 0.0 : p.drq(s) * w * kummer_u(a + 1, b + 1, y * s);
  };
  quad::TailOptions opt;
  opt.rel = 1e-12;
  const auto r = quad::integrate_upper_tail(f, x, 1e300, opt);
  if (!r.converged || r.truncated) throw NumericalFailure("cir_g: tail quadrature failed");
  return pref * r.value;
}

/// Root of cir_g below x*: the Kummer-based free boundary.
inline double cir_boundary(const CirParams& p, double rel_tol = 1e-12) {
  const double xs = p.x_star();
  auto g = [&](double t) { return cir_g(p, std::exp(t)); };
  double hi = std::log(xs);
  double ghi = g(hi);
  if (!(ghi > 0.0)) throw NumericalFailure("cir_boundary: g(x*) is not positive");
  double lo = hi;
  for (int j = 0; j < 60; ++j) {
    lo -= std::log(2.0);
    if (g(lo) < 0.0) {
      const auto r = roots::brent(g, lo, lo + std::log(2.0), rel_tol);
      return std::exp(r.x);
    }
  }
  std::ostringstream msg;
  msg << "cir_boundary: g stays positive on (0, x*] (g(" << std::exp(lo) << ") = " << g(lo)
      << "); Case I, no free boundary";
  throw AssumptionViolation(msg.str());
}

}  // namespace goodwill
