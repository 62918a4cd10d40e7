#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "goodwill/errors.hpp"
#include "goodwill/numerics/ode.hpp"
#include "goodwill/numerics/quadrature.hpp"
#include "goodwill/numerics/roots.hpp"
#include "goodwill/smooth_fn.hpp"

namespace goodwill {

enum class Spacing { Uniform, Logarithmic };

struct GridSpec {
  double x_min = 0.01;
  double x_max = 100.0;
  int n_points = 201;
  Spacing spacing = Spacing::Logarithmic;

  void validate(double c) const {
    std::ostringstream msg;
    if (!(x_min > 0.0) || !std::isfinite(x_min)) msg << "grid: x_min must be positive";
    else if (!(x_max > x_min) || !std::isfinite(x_max)) msg << "grid: x_max must exceed x_min";
    else if (n_points < 16) msg << "grid: n_points must be at least 16";
    else if (!(x_min < c && c < x_max))
      msg << "grid: [" << x_min << ", " << x_max << "] must bracket c = " << c;
    if (!msg.str().empty()) throw ConfigError(msg.str());
  }

  std::vector<double> points() const {
    std::vector<double> xs(static_cast<std::size_t>(n_points));
    const double n1 = static_cast<double>(n_points - 1);
    for (int i = 0; i < n_points; ++i) {
      const double s = static_cast<double>(i) / n1;
      xs[static_cast<std::size_t>(i)] =
          spacing == Spacing::Uniform ? x_min + s * (x_max - x_min)
                                      : x_min * std::pow(x_max / x_min, s);
    }
    xs.front() = x_min;
    xs.back() = x_max;
    return xs;
  }
};

/// Coefficients of dX = b(X) dt + sigma(X) dW discounted at rate r(X).
struct DiffusionModel {
  SmoothFn1D b;
  SmoothFn1D sigma;
  SmoothFn1D r;
  double c = 1.0;
  double r0 = 0.0;

  void validate() const {
    if (!b || !sigma || !r) throw ConfigError("model: b, sigma and r must all be given");
    if (!(c > 0.0) || !std::isfinite(c)) throw ConfigError("model: c must be positive");
    if (!(r0 > 0.0) || !std::isfinite(r0)) throw ConfigError("model: r0 must be positive");
  }

  double sigma2(double x) const {
    const double s = sigma(x);
    return s * s;
  }
};

/// Model plus running payoff h and proportional control cost k. When the
/// antiderivative K of k is not supplied it is obtained by quadrature.
struct ControlProblem {
  DiffusionModel model;
  SmoothFn1D h;
  SmoothFn1D k;
  SmoothFn1D big_k;

  void validate() const {
    model.validate();
    if (!h || !k) throw ConfigError("problem: h and k must both be given");
  }
};

enum class Verdict { Pass, Fail, Inconclusive };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "PASS";
    case Verdict::Fail: return "FAIL";
    case Verdict::Inconclusive: return "INCONCLUSIVE";
  }
  return "?";
}

struct Diagnostic {
  std::string name;
  Verdict verdict = Verdict::Pass;
  double witness = std::numeric_limits<double>::quiet_NaN();
  std::string detail;
};

inline bool any_failed(const std::vector<Diagnostic>& ds) {
  return std::any_of(ds.begin(), ds.end(), [](const Diagnostic& d) { return d.verdict == Verdict::Fail; });
}

inline double generator_apply(const DiffusionModel& m, double w, double w1, double w2, double x) {
  if (!std::isfinite(w) || !std::isfinite(w1) || !std::isfinite(w2) || !(x > 0.0) ||
      !std::isfinite(x))
    throw ConfigError("generator_apply: non-finite input");
  return 0.5 * m.sigma2(x) * w2 + m.b(x) * w1 - m.r(x) * w;
}

namespace detail {
inline quad::Tolerance scale_tolerance() {
  quad::Tolerance t;
  t.abs = 1e-13;
  t.rel = 1e-12;
  return t;
}
}  // namespace detail

/// log p'(x) = -2 * int_c^x b/sigma^2, integrated in log s.
inline double log_scale_density(const DiffusionModel& m, double x) {
  if (x == m.c) return 0.0;
  auto f = [&m](double s) { return m.b(s) / m.sigma2(s); };
  const auto res = quad::integrate_log(f, m.c, x, detail::scale_tolerance());
  quad::require_converged(res, "scale_density");
  return -2.0 * res.value;
}

inline double scale_density(const DiffusionModel& m, double x) {
  return std::exp(log_scale_density(m, x));
}

inline double speed_density(const DiffusionModel& m, double x) {
  return 2.0 * std::exp(-log_scale_density(m, x)) / m.sigma2(x);
}

namespace detail {

// Decides whether a sequence sampled while approaching a boundary looks
// convergent: the last three increments shrink geometrically.
inline bool increments_shrink(const std::vector<double>& v) {
  if (v.size() < 4) return false;
  const std::size_t n = v.size();
  const double d1 = std::abs(v[n - 3] - v[n - 4]);
  const double d2 = std::abs(v[n - 2] - v[n - 3]);
  const double d3 = std::abs(v[n - 1] - v[n - 2]);
  const double tiny = 1e-14 * (1.0 + std::abs(v[n - 1]));
  if (d3 <= tiny) return true;
  return d2 <= 0.9 * d1 && d3 <= 0.9 * d2;
}

}  // namespace detail

struct FellerReport {
  std::vector<double> x_left, l_left;
  std::vector<double> x_right, l_right;
  Verdict verdict = Verdict::Inconclusive;
};

/// Evaluates l(x) = int_c^x (p(x) - p(s)) m(ds) at points marching from c
/// to each grid end. Written as l' = p' M with M = int_c^x m and integrated
/// in t = log x together with log p'.
inline FellerReport feller_diagnostic(const DiffusionModel& m, const GridSpec& grid,
                                      double threshold = 1.0, int n_probe = 8) {
  grid.validate(m.c);
  FellerReport out;
  auto rhs = [&m](double t, const std::array<double, 3>& y) {
    const double x = std::exp(t);
    const double s2 = m.sigma2(x);
    // y = (log p', M, l)
    return std::array<double, 3>{-2.0 * x * m.b(x) / s2, x * 2.0 * std::exp(-y[0]) / s2,
                                 x * std::exp(y[0]) * y[1]};
  };
  auto sweep = [&](double x_end, std::vector<double>& xs, std::vector<double>& ls) {
    ode::Options opt;
    opt.rtol = 1e-10;
    opt.atol = 1e-14;
    ode::DormandPrince<3> solver(opt);
    double t = std::log(m.c);
    std::array<double, 3> y{0.0, 0.0, 0.0};
    bool blown = false;
    for (int j = 1; j <= n_probe; ++j) {
      const double x = m.c * std::pow(x_end / m.c, static_cast<double>(j) / n_probe);
      xs.push_back(x);
      if (!blown) {
        try {
          solver.advance(rhs, t, y, std::log(x));
        } catch (const NumericalFailure&) {
          blown = true;
        }
        if (!std::isfinite(y[2]) || std::abs(y[2]) > 1e250) blown = true;
      }
      ls.push_back(blown ? std::numeric_limits<double>::infinity() : y[2]);
    }
  };
  sweep(grid.x_min, out.x_left, out.l_left);
  sweep(grid.x_max, out.x_right, out.l_right);
  // A limit of l that visibly settles means the boundary is reached in finite time.
  auto side = [threshold](const std::vector<double>& ls) {
    for (std::size_t i = 1; i < ls.size(); ++i)
      if (!(ls[i] > ls[i - 1] || std::isinf(ls[i]))) return Verdict::Inconclusive;
    if (std::isinf(ls.back())) return Verdict::Pass;
    if (detail::increments_shrink(ls)) return Verdict::Fail;
    return ls.back() > threshold ? Verdict::Pass : Verdict::Inconclusive;
  };
  const Verdict left = side(out.l_left), right = side(out.l_right);
  if (left == Verdict::Fail || right == Verdict::Fail) out.verdict = Verdict::Fail;
  else if (left == Verdict::Pass && right == Verdict::Pass) out.verdict = Verdict::Pass;
  else out.verdict = Verdict::Inconclusive;
  return out;
}

inline double mu(const DiffusionModel& m, double x) {
  const double s = m.sigma(x);
  return m.b(x) + s * m.sigma.d1(x) - 0.5 * s * s * m.r.d1(x) / m.r(x);
}

inline double rho(const DiffusionModel& m, double x) {
  const double rx = m.r(x);
  return (rx * rx - rx * m.b.d1(x) + m.r.d1(x) * m.b(x)) / rx;
}

/// int_lo^hi k, preferring the supplied antiderivative.
inline double k_integral(const ControlProblem& p, double lo, double hi) {
  if (lo == hi) return 0.0;
  if (p.big_k) return p.big_k(hi) - p.big_k(lo);
  quad::Tolerance tol;
  tol.abs = 1e-14;
  tol.rel = 1e-13;
  const auto res = quad::integrate(p.k.value_fn(), lo, hi, tol);
  quad::require_converged(res, "k integral");
  return res.value;
}

inline double big_k(const ControlProblem& p, double x) {
  if (p.big_k) return p.big_k(x);
  quad::TailOptions opt;
  const auto res = quad::integrate_lower_tail(p.k.value_fn(), x, x * 1e-80, opt);
  if (!res.converged || res.truncated) {
    std::ostringstream msg;
    msg << "K(x) = int_0^x k diverges or fails to converge near 0 (x = " << x
        << "); k must be integrable at 0";
    throw AssumptionViolation(msg.str());
  }
  return res.value;
}

inline double q_func(const ControlProblem& p, double x) {
  const auto& m = p.model;
  return p.h(x) + 0.5 * m.sigma2(x) * p.k.d1(x) + m.b(x) * p.k(x) - m.r(x) * big_k(p, x);
}

inline bool has_analytic_q_prime(const ControlProblem& p) {
  const auto& m = p.model;
  return p.h.has_d1() && p.k.has_d1() && p.k.has_d2() && m.b.has_d1() && m.sigma.has_d1() &&
         m.r.has_d1();
}

inline double q_prime_numeric(const ControlProblem& p, double x) {
  return central_difference([&p](double s) { return q_func(p, s); }, x);
}

inline double q_prime(const ControlProblem& p, double x) {
  if (!has_analytic_q_prime(p)) return q_prime_numeric(p, x);
  const auto& m = p.model;
  const double s = m.sigma(x);
  const double kx = p.k(x), k1 = p.k.d1(x);
  return p.h.d1(x) + s * m.sigma.d1(x) * k1 + 0.5 * s * s * p.k.d2(x) + m.b.d1(x) * kx +
         m.b(x) * k1 - m.r.d1(x) * big_k(p, x) - m.r(x) * kx;
}

/// D_r Q = Q' - r' Q / r.
inline double drq(const ControlProblem& p, double x) {
  const auto& m = p.model;
  return q_prime(p, x) - m.r.d1(x) * q_func(p, x) / m.r(x);
}

inline double drq_numeric(const ControlProblem& p, double x) {
  const auto& m = p.model;
  return q_prime_numeric(p, x) - m.r.d1(x) * q_func(p, x) / m.r(x);
}

/// Number of halvings below x_min probed for sign information.
inline constexpr int kLeftProbes = 10;

/// The point where D_r Q changes sign from + to -, or 0 when it is negative
/// everywhere that was sampled (the grid plus x_min·2^-j, j <= 10).
inline double x_star(const ControlProblem& p, const GridSpec& grid) {
  grid.validate(p.model.c);
  std::vector<double> xs;
  for (int j = kLeftProbes; j >= 1; --j) xs.push_back(grid.x_min * std::ldexp(1.0, -j));
  for (double x : grid.points()) xs.push_back(x);
  std::vector<double> vs(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    vs[i] = drq(p, xs[i]);
    if (!std::isfinite(vs[i])) {
      std::ostringstream msg;
      msg << "D_rQ is not finite at x = " << xs[i];
      throw NumericalFailure(msg.str());
    }
  }
  std::size_t first_neg = xs.size();
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (vs[i] < 0.0) {
      first_neg = i;
      break;
    }
  if (first_neg == xs.size()) {
    throw NonMonotoneSignPattern(
        "D_rQ is nonnegative on the whole sampled range; no crossing to negative values");
  }
  for (std::size_t i = first_neg; i < xs.size(); ++i)
    if (vs[i] > 0.0) {
      std::ostringstream msg;
      msg << "D_rQ changes sign more than once: negative at x = " << xs[first_neg]
          << ", positive again at x = " << xs[i];
      throw NonMonotoneSignPattern(msg.str());
    }
  if (first_neg == 0) return 0.0;
  std::size_t last_nonneg = first_neg - 1;
  if (vs[last_nonneg] == 0.0) {
    // The zero may extend over several samples; take its right end.
    return xs[last_nonneg];
  }
  const auto root = roots::bisect([&p](double x) { return drq(p, x); }, xs[last_nonneg],
                                  xs[first_neg], 1e-15 * xs[first_neg], 200);
  return root.x;
}

namespace detail {

inline std::vector<double> diagnostic_points(const GridSpec& grid, int extra = 6) {
  std::vector<double> xs;
  for (int j = extra; j >= 1; --j) xs.push_back(grid.x_min * std::ldexp(1.0, -j));
  for (double x : grid.points()) xs.push_back(x);
  for (int j = 1; j <= extra; ++j) xs.push_back(grid.x_max * std::ldexp(1.0, j));
  return xs;
}

}  // namespace detail

/// Checks that a supplied analytic derivative matches central differences.
inline Diagnostic derivative_consistency(const SmoothFn1D& f, const std::string& name,
                                         const GridSpec& grid, double rel_tol = 1e-5) {
  Diagnostic d{name + " derivative consistency", Verdict::Pass, std::numeric_limits<double>::quiet_NaN(), ""};
  if (!f.has_d1() && !f.has_d2()) {
    d.detail = "no analytic derivatives supplied";
    return d;
  }
  double worst = 0.0;
  for (double x : grid.points()) {
    const double fx = std::abs(f(x));
    if (f.has_d1()) {
      const double a = f.d1(x);
      const double n = central_difference(f.value_fn(), x);
      const double scale = std::max({std::abs(a), std::abs(n), 1e-3 * fx / x, 1e-300});
      const double dev = std::abs(a - n) / scale;
      if (dev > worst) {
        worst = dev;
        d.witness = x;
      }
    }
    if (f.has_d2() && f.has_d1()) {
      const double a = f.d2(x);
      const double n = central_difference([&f](double s) { return f.d1(s); }, x);
      const double scale = std::max({std::abs(a), std::abs(n), 1e-3 * std::abs(f.d1(x)) / x,
                                     1e-3 * fx / (x * x), 1e-300});
      const double dev = std::abs(a - n) / scale;
      if (dev > worst) {
        worst = dev;
        d.witness = x;
      }
    }
  }
  std::ostringstream msg;
  msg << "max relative deviation " << worst;
  d.detail = msg.str();
  if (worst > rel_tol) d.verdict = Verdict::Fail;
  return d;
}

/// Sampled checks of the standing assumptions on the model alone.
inline std::vector<Diagnostic> check_model(const DiffusionModel& m, const GridSpec& grid) {
  m.validate();
  grid.validate(m.c);
  std::vector<Diagnostic> out;
  const auto xs = grid.points();
  auto sampled = [&](const std::string& name, auto&& bad, const char* what) {
    Diagnostic d{name, Verdict::Pass, std::numeric_limits<double>::quiet_NaN(), ""};
    for (double x : xs) {
      if (bad(x)) {
        d.verdict = Verdict::Fail;
        d.witness = x;
        std::ostringstream msg;
        msg << what << " at x = " << x;
        d.detail = msg.str();
        break;
      }
    }
    out.push_back(d);
  };
  sampled("sigma^2 > 0", [&](double x) { return !(m.sigma2(x) > 0.0); }, "sigma^2 is not positive");
  sampled("r >= r0", [&](double x) { return !(m.r(x) >= m.r0); }, "r falls below r0");
  sampled("rho >= r0", [&](double x) { return !(rho(m, x) >= m.r0 * (1.0 - 1e-12)); },
          "rho falls below r0");
  const auto feller = feller_diagnostic(m, grid);
  Diagnostic f{"Feller test (no explosion, boundaries unattainable)", feller.verdict,
               std::numeric_limits<double>::quiet_NaN(), ""};
  std::ostringstream msg;
  msg << "l(x_min) = " << feller.l_left.back() << ", l(x_max) = " << feller.l_right.back();
  f.detail = msg.str();
  out.push_back(f);
  out.push_back(derivative_consistency(m.b, "b", grid));
  out.push_back(derivative_consistency(m.sigma, "sigma", grid));
  out.push_back(derivative_consistency(m.r, "r", grid));
  return out;
}

/// All sampled assumption checks for a control problem.
inline std::vector<Diagnostic> check_assumptions(const ControlProblem& p, const GridSpec& grid) {
  p.validate();
  auto out = check_model(p.model, grid);
  const auto& m = p.model;
  const auto xs = grid.points();

  Diagnostic kd{"k >= 0", Verdict::Pass, std::numeric_limits<double>::quiet_NaN(), ""};
  for (double x : xs)
    if (!(p.k(x) >= 0.0)) {
      kd.verdict = Verdict::Fail;
      kd.witness = x;
      kd.detail = "k is negative";
      break;
    }
  out.push_back(kd);

  // h/r bounded below: a finite sample can only refute it or watch the trend.
  {
    Diagnostic d{"h/r bounded below", Verdict::Pass, std::numeric_limits<double>::quiet_NaN(), ""};
    const auto pts = detail::diagnostic_points(grid);
    std::vector<double> v(pts.size());
    std::size_t imin = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      v[i] = p.h(pts[i]) / m.r(pts[i]);
      if (!std::isfinite(v[i])) {
        d.verdict = Verdict::Fail;
        d.witness = pts[i];
        d.detail = "h/r is not finite";
        break;
      }
      if (v[i] < v[imin]) imin = i;
    }
    if (d.verdict == Verdict::Pass) {
      d.witness = pts[imin];
      const bool at_left = imin == 0;
      const bool at_right = imin + 1 == pts.size();
      if (at_left || at_right) {
        std::vector<double> tail;
        if (at_left)
          for (std::size_t i = 6; i-- > 0;) tail.push_back(v[i]);
        else
          for (std::size_t i = pts.size() - 6; i < pts.size(); ++i) tail.push_back(v[i]);
        if (!detail::increments_shrink(tail)) {
          d.verdict = Verdict::Inconclusive;
          d.detail = "sampled minimum keeps decreasing toward a boundary";
        } else {
          d.detail = "minimum at a boundary probe, increments shrink geometrically";
        }
      }
      if (d.detail.empty()) {
        std::ostringstream msg;
        msg << "sampled minimum " << v[imin];
        d.detail = msg.str();
      }
    }
    out.push_back(d);
  }

  // Single crossing of D_r Q and, when x* = 0, the behaviour of Q/r at 0.
  double xs_star = std::numeric_limits<double>::quiet_NaN();
  {
    Diagnostic d{"D_rQ single crossing", Verdict::Pass, std::numeric_limits<double>::quiet_NaN(), ""};
    try {
      xs_star = x_star(p, grid);
      d.witness = xs_star;
      std::ostringstream msg;
      msg << "x* = " << xs_star;
      d.detail = msg.str();
    } catch (const NonMonotoneSignPattern& e) {
      d.verdict = Verdict::Fail;
      d.detail = e.what();
    }
    out.push_back(d);
  }
  if (xs_star == 0.0) {
    Diagnostic d{"Q/r finite limit at 0 (x* = 0)", Verdict::Pass, grid.x_min, ""};
    std::vector<double> v;
    for (int j = 0; j <= 10; ++j) {
      const double x = grid.x_min * std::ldexp(1.0, -j);
      v.push_back(q_func(p, x) / m.r(x));
    }
    const bool rising = v.back() > v[v.size() - 2];
    if (!std::isfinite(v.back())) d.verdict = Verdict::Fail;
    else if (rising && !detail::increments_shrink(v)) d.verdict = Verdict::Inconclusive;
    std::ostringstream msg;
    msg << "Q/r at x_min*2^-10 = " << v.back();
    d.detail = msg.str();
    out.push_back(d);
  }

  out.push_back(derivative_consistency(p.h, "h", grid));
  out.push_back(derivative_consistency(p.k, "k", grid));
  if (p.big_k) {
    // A supplied antiderivative replaces quadrature of k below the boundary.
    Diagnostic d{"K' = k", Verdict::Pass, std::numeric_limits<double>::quiet_NaN(), ""};
    double worst = 0.0;
    for (double x : grid.points()) {
      const double kx = p.k(x);
      const double dev = std::abs(p.big_k.d1(x) - kx) / std::max(std::abs(kx), 1e-300);
      if (dev > worst) {
        worst = dev;
        d.witness = x;
      }
    }
    if (worst > 1e-5) {
      d.verdict = Verdict::Fail;
      std::ostringstream msg;
      msg << "K' differs from k by " << worst << " (relative) at x = " << d.witness;
      d.detail = msg.str();
    }
    out.push_back(d);
  }
  return out;
}

}  // namespace goodwill
