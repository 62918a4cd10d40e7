#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "goodwill/diffusion.hpp"
#include "goodwill/fundamental.hpp"
#include "goodwill/io.hpp"
#include "goodwill/numerics/roots.hpp"
#include "goodwill/resolvent.hpp"
#include "json.hpp"

namespace goodwill {

enum class Regime { CaseI, CaseII };

inline const char* to_string(Regime r) { return r == Regime::CaseI ? "CaseI" : "CaseII"; }

/// g(x) = ∫_x^∞ D_rQ φ'/(r p') ds by a monitored tail sweep.
inline double g_func(const ControlProblem& p, const FundamentalPair& pair, double x) {
  const auto& m = p.model;
  const double e = pair.log_phi(x) - pair.log_p_prime(x);
  auto f = [&](double s) {
    const auto q = pair.at(s);
    const double d = drq(p, s);
    return d == 0.0 ? 0.0 : d * q.u_phi / m.r(s) * std::exp(q.log_phi - q.log_pp - e);
  };
  const double cap = pair.x_hi();
  const auto res = quad::integrate_upper_tail(f, x, cap);
  if (!std::isfinite(res.value))
    throw AssumptionViolation("g: the tail integral of D_rQ phi'/(r p') diverges");
  double closure = 0.0;
  if (res.truncated) {
    // Power-law decay beyond the table: s f(s) ~ s^-k adds s f(s)/k at the cap.
    const double h = 0.5;
    const double g0 = f(cap) * cap, g1 = f(cap * std::exp(-h)) * cap * std::exp(-h),
                 g2 = f(cap * std::exp(-2.0 * h)) * cap * std::exp(-2.0 * h);
    if (g0 * g1 > 0.0 && g1 * g2 > 0.0) {
      const double k1 = std::log(g1 / g0) / h, k2 = std::log(g2 / g1) / h;
      if (k1 > 0.0 && k2 > 0.0 && std::abs(k1 - k2) <= 0.05 * k1) closure = g0 / k1;
    }
  }
  return std::exp(e) * (res.value + closure);
}

/// g from the cached tables of R_{X,Q}; gs() has the same sign and never
/// overflows.
class GFunction {
 public:
  explicit GFunction(std::shared_ptr<const ResolventTable> q_table) : q_(std::move(q_table)) {}
  double operator()(double x) const { return q_->phi_prime_tail(x); }
  double scaled(double x) const { return q_->phi_prime_tail_scaled(x); }
  /// g'(x) = -D_rQ φ'/(r p').
  double d1(double x) const {
    const auto& pair = q_->pair();
    const auto& m = pair.model();
    const auto p = pair.at(x);
    return -dr_of(q_->spec(), m, x) * p.u_phi / m.r(x) * std::exp(p.log_phi - p.log_pp);
  }

 private:
  std::shared_ptr<const ResolventTable> q_;
};

struct CaseDecision {
  Regime regime = Regime::CaseI;
  double x_star = 0.0;
  std::vector<double> probe_x, probe_g;
  /// Which part of "x* > 0 and lim g(0+) < 0" decided the case.
  std::string clause;
};

/// Case II iff x* > 0 and g, sampled at x_min·2^-j (j = 0..10), ends with
/// three negative, strictly decreasing values. Case I if x* = 0 or the last
/// three are nonnegative. Anything else is inconclusive and throws.
inline CaseDecision case_selector(const GFunction& g, double x_star_value, const GridSpec& grid) {
  CaseDecision out;
  out.x_star = x_star_value;
  if (x_star_value == 0.0) {
    out.regime = Regime::CaseI;
    out.clause = "x* = 0";
    return out;
  }
  for (int j = 0; j <= kLeftProbes; ++j) {
    const double x = grid.x_min * std::ldexp(1.0, -j);
    out.probe_x.push_back(x);
    out.probe_g.push_back(g(x));
  }
  const std::size_t n = out.probe_g.size();
  const double g8 = out.probe_g[n - 3], g9 = out.probe_g[n - 2], g10 = out.probe_g[n - 1];
  if (g8 < 0.0 && g9 < 0.0 && g10 < 0.0 && g8 > g9 && g9 > g10) {
    out.regime = Regime::CaseII;
    out.clause = "x* > 0 and lim g(0+) < 0";
  } else if (g8 >= 0.0 && g9 >= 0.0 && g10 >= 0.0) {
    out.regime = Regime::CaseI;
    out.clause = "x* > 0 but lim g(0+) >= 0";
  } else {
    std::ostringstream msg;
    msg << "INCONCLUSIVE: g does not settle near 0 (g = " << g8 << ", " << g9 << ", " << g10
        << " at the last three probes); the data probably violate the single-crossing condition";
    throw AssumptionViolation(msg.str());
  }
  return out;
}

/// The root a of g in (0, x*): bracketed by halving down from x*, then Brent
/// in log x. Checks g'(a) > 0 afterwards.
inline double solve_boundary(const GFunction& g, double x_star_value, const FundamentalPair& pair,
                             double rel_tol = 1e-13) {
  if (!(x_star_value > 0.0)) throw NumericalFailure("solve_boundary: x* must be positive in Case II");
  const double hi = x_star_value;
  if (!(g.scaled(hi) > 0.0)) {
    std::ostringstream msg;
    msg << "solve_boundary: g(x*) = " << g(hi) << " is not positive; regime misclassified";
    throw NumericalFailure(msg.str());
  }
  double lo = hi;
  bool found = false;
  for (int j = 0; j < 200; ++j) {
    lo *= 0.5;
    if (!pair.covers(lo)) break;
    if (g.scaled(lo) < 0.0) {
      found = true;
      break;
    }
  }
  if (!found) throw NumericalFailure("solve_boundary: no bracket found below x*; regime misclassified");
  auto f = [&g](double u) { return g.scaled(std::exp(u)); };
  const auto root = roots::brent(f, std::log(lo), std::log(hi), rel_tol);
  if (!root.converged) throw NumericalFailure("solve_boundary: Brent iteration did not converge");
  const double a = std::exp(root.x);
  if (!(g.d1(a) > 0.0)) {
    std::ostringstream msg;
    msg << "solve_boundary: g'(a) = " << g.d1(a) << " is not positive at a = " << a;
    throw NumericalFailure(msg.str());
  }
  return a;
}

struct CoefficientA {
  double A = 0.0;
  double A_second = 0.0;  // (k'(a) - R''(a))/φ''(a)
  double deviation = 0.0;
  double A_phi_a = 0.0;   // A·φ(a), kept for overflow-free assembly
};

/// A = (k(a) - R'_h(a))/φ'(a), cross-checked against the second-derivative
/// expression.
inline CoefficientA coefficient_A(const ControlProblem& p, const ResolventTable& rh, double a) {
  const auto& pair = rh.pair();
  const auto pa = pair.at(a);
  const auto v = rh.at(a);
  CoefficientA out;
  out.A_phi_a = (p.k(a) - v.R1) / pa.u_phi;
  out.A = out.A_phi_a * std::exp(-pa.log_phi);
  out.A_second = (p.k.d1(a) - v.R2) / pa.phi2_rel * std::exp(-pa.log_phi);
  out.deviation = std::abs(out.A - out.A_second) / std::max({std::abs(out.A), std::abs(out.A_second), 1e-300});
  const double tol = 1e-10 * (1.0 + std::abs(v.R));
  if (out.A_phi_a < -tol) {
    std::ostringstream msg;
    msg << "coefficient A = " << out.A << " is negative beyond tolerance at a = " << a;
    throw NumericalFailure(msg.str());
  }
  return out;
}

/// The value function: Case II pastes Aφ + R_h above a onto w(a) - ∫_x^a k
/// below; Case I is R_h throughout.
class HJBSolution {
 public:
  struct Value {
    double w, w1, w2;
  };

  HJBSolution(ControlProblem problem, std::shared_ptr<const ResolventTable> rh, Regime regime,
              double x_star_value, std::optional<double> a, std::optional<CoefficientA> coef)
      : problem_(std::move(problem)), rh_(std::move(rh)), regime_(regime), x_star_(x_star_value) {
    if (regime_ == Regime::CaseII) {
      if (!a || !coef) throw ConfigError("Case II solution needs a and A");
      a_ = *a;
      coef_ = *coef;
      log_phi_a_ = rh_->pair().log_phi(a_);
      wa_ = coef_.A_phi_a + rh_->R(a_);
    }
  }

  Regime regime() const { return regime_; }
  double a() const { return regime_ == Regime::CaseII ? a_ : std::numeric_limits<double>::quiet_NaN(); }
  double A() const { return regime_ == Regime::CaseII ? coef_.A : 0.0; }
  const CoefficientA& coefficient() const { return coef_; }
  double x_star() const { return x_star_; }
  double C() const { return rh_->pair().C(); }
  const FundamentalPair& pair() const { return rh_->pair(); }
  const ResolventTable& resolvent_h() const { return *rh_; }
  const ControlProblem& problem() const { return problem_; }

  Value at(double x) const {
    if (regime_ == Regime::CaseI) {
      const auto v = rh_->at(x);
      return {v.R, v.R1, v.R2};
    }
    if (x >= a_) return upper(x);
    quad::Tolerance tol;
    tol.abs = 1e-15;
    tol.rel = 1e-13;
    const auto kint = quad::integrate(problem_.k.value_fn(), x, a_, tol);
    return {wa_ - kint.value, problem_.k(x), problem_.k.d1(x)};
  }

  /// The φ/R_h expression evaluated at x (meaningful for x near or above a).
  Value upper(double x) const {
    const auto v = rh_->at(x);
    if (regime_ == Regime::CaseI) return {v.R, v.R1, v.R2};
    const auto p = rh_->pair().at(x);
    const double aphi = coef_.A_phi_a * std::exp(p.log_phi - log_phi_a_);
    return {aphi + v.R, aphi * p.u_phi + v.R1, aphi * p.phi2_rel + v.R2};
  }

  double w(double x) const { return at(x).w; }
  double w1(double x) const { return at(x).w1; }
  double w2(double x) const { return at(x).w2; }

 private:
  ControlProblem problem_;
  std::shared_ptr<const ResolventTable> rh_;
  Regime regime_;
  double x_star_ = 0.0;
  double a_ = 0.0;
  CoefficientA coef_{};
  double log_phi_a_ = 0.0;
  double wa_ = 0.0;
};

inline HJBSolution build_value(const ControlProblem& p, std::shared_ptr<const ResolventTable> rh,
                               Regime regime, double x_star_value, std::optional<double> a = {},
                               std::optional<CoefficientA> coef = {}) {
  return HJBSolution(p, std::move(rh), regime, x_star_value, a, coef);
}

struct HjbPoint {
  double x, r1, r2, scale;
};

struct HjbReport {
  std::vector<HjbPoint> points;
  double residual_max = 0.0;     // max |max(r1, r2)| / scale
  double worst_x = 0.0;
  double pasting1 = 0.0;         // |w'(a) - k(a)| / (1 + |k(a)|)
  double pasting2 = 0.0;         // |w''(a) - k'(a)| / (1 + |k'(a)| + |R''(a)|)
  double q_chain_violation = 0.0;
  double w2_fd_max = 0.0;        // informational: w'' against differenced w'
  double w_min = 0.0;
  Verdict verdict = Verdict::Pass;
  std::vector<std::string> failures;
};

struct HjbTolerances {
  double eq = 1e-6;
  double ineq = 1e-8;
  double pasting = 1e-6;
};

/// max{L_X w + h, w' - k} = 0 on xs, plus smooth pasting at a and, below
/// a, Q(x)/r(x) <= Q(a)/r(a).
inline HjbReport verify_hjb(const HJBSolution& sol, const std::vector<double>& xs,
                            const HjbTolerances& tol = {}) {
  HjbReport rep;
  const auto& p = sol.problem();
  const auto& m = p.model;
  rep.w_min = std::numeric_limits<double>::infinity();
  bool ineq_bad = false, eq_bad = false;
  for (double x : xs) {
    const auto v = sol.at(x);
    const double hx = p.h(x), rx = m.r(x);
    const double r1 = 0.5 * m.sigma2(x) * v.w2 + m.b(x) * v.w1 - rx * v.w + hx;
    const double r2 = v.w1 - p.k(x);
    const double scale = 1.0 + std::abs(hx) + rx * std::abs(v.w);
    rep.points.push_back({x, r1, r2, scale});
    rep.w_min = std::min(rep.w_min, v.w);
    const double top = std::max(r1, r2) / scale;
    if (!(std::abs(top) <= rep.residual_max)) {
      rep.residual_max = std::isnan(top) ? std::numeric_limits<double>::infinity() : std::abs(top);
      rep.worst_x = x;
    }
    if (!(r1 <= tol.ineq * scale && r2 <= tol.ineq * scale)) {
      if (!ineq_bad) {
        std::ostringstream msg;
        msg << "inequality branch violated at x = " << x << " (r1 = " << r1 << ", r2 = " << r2 << ")";
        rep.failures.push_back(msg.str());
      }
      ineq_bad = true;
    }
    if (!(std::max(r1, r2) >= -tol.eq * scale)) {
      if (!eq_bad) {
        std::ostringstream msg;
        msg << "neither branch active at x = " << x << " (r1 = " << r1 << ", r2 = " << r2 << ")";
        rep.failures.push_back(msg.str());
      }
      eq_bad = true;
    }
    const double hstep = 1e-5 * x;
    const double fd = (sol.w1(x + hstep) - sol.w1(x - hstep)) / (2.0 * hstep);
    const bool straddles = sol.regime() == Regime::CaseII && std::abs(x - sol.a()) <= hstep;
    if (!straddles)
      rep.w2_fd_max = std::max(rep.w2_fd_max, std::abs(fd - v.w2) / (1.0 + std::abs(v.w2)));
  }
  if (sol.regime() == Regime::CaseII) {
    const double a = sol.a();
    const auto up = sol.upper(a);
    const double ka = p.k(a), k1a = p.k.d1(a);
    const double r2a = sol.resolvent_h().R2(a);
    rep.pasting1 = std::abs(up.w1 - ka) / (1.0 + std::abs(ka));
    rep.pasting2 = std::abs(up.w2 - k1a) / (1.0 + std::abs(k1a) + std::abs(r2a));
    if (!(rep.pasting1 <= tol.pasting && rep.pasting2 <= tol.pasting)) {
      std::ostringstream msg;
      msg << "smooth pasting fails at a = " << a << " (w' - k: " << up.w1 - ka << ", w'' - k': " << up.w2 - k1a
          << ")";
      rep.failures.push_back(msg.str());
    }
    const double qa = q_func(p, a) / m.r(a);
    for (double x : xs) {
      if (x >= a) break;
      const double qx = q_func(p, x) / m.r(x);
      const double excess = (qx - qa) / (1.0 + std::abs(qa));
      rep.q_chain_violation = std::max(rep.q_chain_violation, excess);
    }
    if (rep.q_chain_violation > tol.ineq) {
      std::ostringstream msg;
      msg << "Q/r exceeds Q(a)/r(a) below a by " << rep.q_chain_violation;
      rep.failures.push_back(msg.str());
    }
  }
  rep.verdict = rep.failures.empty() ? Verdict::Pass : Verdict::Fail;
  return rep;
}

struct SolveOptions {
  FundamentalOptions fundamental;
  /// Replace the computed a by a·(1 + perturb_a) before building w; only
  /// for negative controls.
  double perturb_a = 0.0;
  bool run_diagnostics = true;
};

struct SolveOutput {
  std::shared_ptr<const FundamentalPair> pair;
  std::shared_ptr<const ResolventTable> rh, rq;
  std::vector<Diagnostic> diagnostics;
  CaseDecision decision;
  std::optional<HJBSolution> solution;
};

/// Diagnostics, fundamental pair, regime, boundary and value function.
inline SolveOutput solve(const ControlProblem& p, const GridSpec& grid, const SolveOptions& opt = {}) {
  p.validate();
  grid.validate(p.model.c);
  SolveOutput out;
  if (opt.run_diagnostics) {
    out.diagnostics = check_assumptions(p, grid);
    if (any_failed(out.diagnostics)) return out;
  }
  out.pair = std::make_shared<const FundamentalPair>(solve_fundamental(p.model, grid, opt.fundamental));
  out.rh = std::make_shared<const ResolventTable>(out.pair, payoff_h(p));
  out.rq = std::make_shared<const ResolventTable>(out.pair, payoff_q(p));
  const GFunction g(out.rq);
  const double xs = x_star(p, grid);
  out.decision = case_selector(g, xs, grid);
  if (out.decision.regime == Regime::CaseI) {
    out.solution.emplace(build_value(p, out.rh, Regime::CaseI, xs));
    return out;
  }
  double a = solve_boundary(g, xs, *out.pair);
  if (opt.perturb_a != 0.0) a *= 1.0 + opt.perturb_a;
  const auto coef = coefficient_A(p, *out.rh, a);
  out.solution.emplace(build_value(p, out.rh, Regime::CaseII, xs, a, coef));
  return out;
}

inline void write_solution_csv(std::ostream& os, const HJBSolution& sol, const HjbReport& rep) {
  io::csv_header(os, {"x", "w", "w1", "w2", "hjb_r1", "hjb_r2"});
  for (const auto& pt : rep.points) {
    const auto v = sol.at(pt.x);
    io::csv_row(os, {pt.x, v.w, v.w1, v.w2, pt.r1, pt.r2});
  }
}

inline constexpr int kSchemaVersion = 1;

inline nlohmann::ordered_json summary_json(const HJBSolution& sol, const HjbReport& rep) {
  nlohmann::ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["regime"] = to_string(sol.regime());
  if (sol.regime() == Regime::CaseII) {
    j["a"] = sol.a();
    j["A"] = sol.A();
  }
  j["x_star"] = sol.x_star();
  j["C"] = sol.C();
  j["residual_max"] = rep.residual_max;
  return j;
}

}  // namespace goodwill
