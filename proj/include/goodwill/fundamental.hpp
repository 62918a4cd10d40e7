#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "goodwill/diffusion.hpp"
#include "goodwill/errors.hpp"
#include "goodwill/io.hpp"
#include "goodwill/numerics/hermite.hpp"
#include "goodwill/numerics/ode.hpp"

namespace goodwill {

struct FundamentalOptions {
  /// Knot spacing in t = log x.
  double knot_spacing = 0.02;
  /// Table extends this far (in log x) below x_min.
  double left_extension = 23.0;
  /// Past x_max the table grows until the resolvent tail weight has fallen
  /// by tail_drop nats, within [right_extension_min, right_extension_max].
  double right_extension_min = 0.2;
  double right_extension_max = 23.0;
  double tail_drop = 60.0;
  /// Extension also stops once the Riccati equation becomes this stiff.
  double stiffness_limit = 1e3;
  ode::Options ode{1e-12, 1e-13, 1e-3, 0.0, 2'000'000};
};

/// Everything about φ, ψ and p' at one point, in log form.
struct PairPoint {
  double x;
  double log_phi, log_psi, log_pp;
  double u_phi, u_psi;      // φ'/φ, ψ'/ψ
  double phi2_rel, psi2_rel;  // φ''/φ, ψ''/ψ (from the ODE)
};

/// Derivatives recovered from the interpolation tables alone (no use of the
/// ODE), for residual checks.
struct TableDerivs {
  double u;       // w'/w
  double w2_rel;  // w''/w
  double w3_rel;  // w'''/w
};

/// φ (decreasing) and ψ (increasing) spanning the solutions of
/// ½σ²w'' + bw' - rw = 0, normalised to 1 at c.
///
/// Internally both are stored as L = log w and v = x w'/w on a uniform
/// grid in t = log x, together with log p'. Quintic Hermite interpolation
/// in t uses v and the Riccati right-hand side at the knots, so values far
/// outside double range (e^±700) remain usable through the log accessors.
class FundamentalPair {
 public:
  const DiffusionModel& model() const { return model_; }
  const GridSpec& grid() const { return grid_; }
  double c() const { return model_.c; }
  double C() const { return C_; }
  double x_lo() const { return std::exp(lphi_.t_min()); }
  double x_hi() const { return std::exp(lphi_.t_max()); }
  double t_lo() const { return lphi_.t_min(); }
  double t_hi() const { return lphi_.t_max(); }
  double knot_spacing() const { return h_; }
  std::size_t knots() const { return lphi_.size(); }

  bool covers(double x) const {
    const double t = std::log(x);
    return t >= t_lo() - 1e-12 && t <= t_hi() + 1e-12;
  }

  PairPoint at(double x) const {
    const double t = log_arg(x);
    PairPoint p;
    p.x = x;
    p.log_phi = lphi_(t).value;
    p.log_psi = lpsi_(t).value;
    p.log_pp = lpp_(t).value;
    p.u_phi = vphi_(t).value / x;
    p.u_psi = vpsi_(t).value / x;
    const double s2 = model_.sigma2(x), rx = model_.r(x), bx = model_.b(x);
    p.phi2_rel = 2.0 * (rx - bx * p.u_phi) / s2;
    p.psi2_rel = 2.0 * (rx - bx * p.u_psi) / s2;
    return p;
  }

  double log_phi(double x) const { return lphi_(log_arg(x)).value; }
  double log_psi(double x) const { return lpsi_(log_arg(x)).value; }
  double log_p_prime(double x) const { return lpp_(log_arg(x)).value; }
  double u_phi(double x) const { return vphi_(log_arg(x)).value / x; }
  double u_psi(double x) const { return vpsi_(log_arg(x)).value / x; }

  double phi(double x) const { return std::exp(log_phi(x)); }
  double psi(double x) const { return std::exp(log_psi(x)); }
  double p_prime(double x) const { return std::exp(log_p_prime(x)); }
  double phi1(double x) const { return phi(x) * u_phi(x); }
  double psi1(double x) const { return psi(x) * u_psi(x); }
  double phi2(double x) const { const auto p = at(x); return std::exp(p.log_phi) * p.phi2_rel; }
  double psi2(double x) const { const auto p = at(x); return std::exp(p.log_psi) * p.psi2_rel; }

  TableDerivs phi_table_derivs(double x) const { return table_derivs(vphi_, x); }
  TableDerivs psi_table_derivs(double x) const { return table_derivs(vpsi_, x); }

  /// Multiplicative normalisation removed from the raw integrations, in
  /// log form (the raw solutions at c).
  double log_offset_phi() const { return off_phi_; }
  double log_offset_psi() const { return off_psi_; }

 private:
  friend FundamentalPair solve_fundamental(const DiffusionModel&, const GridSpec&,
                                           const FundamentalOptions&);

  double log_arg(double x) const {
    if (!(x > 0.0)) throw ConfigError("fundamental pair evaluated at non-positive x");
    const double t = std::log(x);
    if (t < t_lo() - 1e-12 || t > t_hi() + 1e-12) {
      std::ostringstream msg;
      msg << "fundamental pair queried at x = " << x << " outside its table [" << x_lo()
          << ", " << x_hi() << "]";
      throw NumericalFailure(msg.str());
    }
    return t;
  }

  static TableDerivs table_derivs(const QuinticTable& v, double x) {
    const auto s = v(std::log(x));
    const double q = s.d1 - s.value + s.value * s.value;
    const double qt = s.d2 - s.d1 + 2.0 * s.value * s.d1;
    return {s.value / x, q / (x * x), (s.value * q + qt - 2.0 * q) / (x * x * x)};
  }

  DiffusionModel model_;
  GridSpec grid_;
  double C_ = 0.0;
  double h_ = 0.0;
  double off_phi_ = 0.0, off_psi_ = 0.0;
  QuinticTable lphi_, vphi_, lpsi_, vpsi_, lpp_;
};

namespace detail {

struct Coeffs {
  double A, B, At, Bt;
};

// A = 2x²r/σ², B = 2xb/σ² and their t-derivatives.
inline Coeffs riccati_coeffs(const DiffusionModel& m, double x, bool with_derivs) {
  const double s = m.sigma(x), s2 = s * s;
  const double rx = m.r(x), bx = m.b(x);
  Coeffs c{2.0 * x * x * rx / s2, 2.0 * x * bx / s2, 0.0, 0.0};
  if (with_derivs) {
    const double ss1 = s * m.sigma.d1(x);
    const double s4 = s2 * s2;
    const double dA = 4.0 * x * rx / s2 + 2.0 * x * x * m.r.d1(x) / s2 - 4.0 * x * x * rx * ss1 / s4;
    const double dB = 2.0 * bx / s2 + 2.0 * x * m.b.d1(x) / s2 - 4.0 * x * bx * ss1 / s4;
    c.At = x * dA;
    c.Bt = x * dB;
  }
  return c;
}

inline double riccati_rhs(double v, const Coeffs& k) { return v + k.A - k.B * v - v * v; }

// Roots of v² - (1-B)v - A = 0 (the constant-coefficient log-derivatives).
inline std::array<double, 2> frozen_roots(const Coeffs& k) {
  const double p = 1.0 - k.B;
  const double disc = std::sqrt(p * p + 4.0 * k.A);
  double lo, hi;
  if (p >= 0.0) {
    hi = 0.5 * (p + disc);
    lo = -k.A / hi;
  } else {
    lo = 0.5 * (p - disc);
    hi = -k.A / lo;
  }
  return {lo, hi};
}

// Log-derivative of the solution recessive at the far side of t_target,
// obtained by integrating the Riccati equation toward t_target from ever
// farther starting points until the result stops moving.
inline double shoot_seed(const DiffusionModel& m, double t_target, double dir, bool increasing) {
  auto frozen = [&](double t) {
    const auto r = frozen_roots(riccati_coeffs(m, std::exp(t), false));
    return increasing ? r[1] : r[0];
  };
  auto rhs = [&m](double t, const std::array<double, 1>& y) {
    return std::array<double, 1>{riccati_rhs(y[0], riccati_coeffs(m, std::exp(t), false))};
  };
  double prev = frozen(t_target);
  for (double span : {0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0}) {
    ode::Options opt;
    opt.max_steps = 50'000;
    ode::DormandPrince<1> solver(opt);
    double t = t_target - dir * span;
    std::array<double, 1> y{0.0};
    try {
      y[0] = frozen(t);
      if (!std::isfinite(y[0])) break;
      solver.advance(rhs, t, y, t_target);
    } catch (const Error&) {
      break;
    }
    if (!std::isfinite(y[0])) break;
    const bool settled = std::abs(y[0] - prev) <= 1e-12 * (1.0 + std::abs(y[0]));
    prev = y[0];
    if (settled) break;
  }
  return prev;
}

}  // namespace detail

/// Builds the fundamental pair: ψ by integrating rightward from well below
/// x_min, φ leftward from beyond x_max, each seeded with the recessive
/// Riccati solution. Throws NumericalFailure if the identities
/// φψ' - φ'ψ = C p' and its differentiated form fail on the grid.
inline FundamentalPair solve_fundamental(const DiffusionModel& model, const GridSpec& grid,
                                         const FundamentalOptions& opt = {});

struct PairCheck {
  double wronskian_max = 0.0, wronskian_x = 0.0;
  double wronskian2_max = 0.0, wronskian2_x = 0.0;
  double residual_max = 0.0, residual_x = 0.0;  // |Lw| / (1 + r max(φ, ψ)), worst of φ, ψ
  double phi_err_max = 0.0;                     // normalisation |φ(c) - 1| + |ψ(c) - 1|
  bool signs_ok = true;
  bool convex_ok = true;
  std::string detail;
};

/// Wronskian, second-Wronskian, residual, sign and convexity checks at xs.
inline PairCheck check_pair(const FundamentalPair& pair, const std::vector<double>& xs) {
  PairCheck out;
  const auto& m = pair.model();
  const double C = pair.C();
  std::ostringstream why;
  for (double x : xs) {
    const auto p = pair.at(x);
    const double s2 = m.sigma2(x), rx = m.r(x), bx = m.b(x);
    // φψ(uψ - uφ) = C p'  <=>  exp(Lφ + Lψ - P)(uψ - uφ)/C = 1
    const double w1 = std::exp(p.log_phi + p.log_psi - p.log_pp) * (p.u_psi - p.u_phi) / C;
    const double d1 = std::abs(w1 - 1.0);
    if (!(d1 <= out.wronskian_max)) {
      out.wronskian_max = std::isnan(d1) ? std::numeric_limits<double>::infinity() : d1;
      out.wronskian_x = x;
    }
    // φ''ψ' - φ'ψ'' = 2 C r p'/σ²
    const double lhs = std::exp(p.log_phi + p.log_psi - p.log_pp) *
                       (p.phi2_rel * p.u_psi - p.u_phi * p.psi2_rel);
    const double rhs = 2.0 * C * rx / s2;
    const double d2 = std::abs(lhs / rhs - 1.0);
    if (!(d2 <= out.wronskian2_max)) {
      out.wronskian2_max = std::isnan(d2) ? std::numeric_limits<double>::infinity() : d2;
      out.wronskian2_x = x;
    }
    // Residuals from the tables' own derivatives, in the scaled form,
    // divided through by w to stay in range.
    for (int which = 0; which < 2; ++which) {
      const auto td = which == 0 ? pair.phi_table_derivs(x) : pair.psi_table_derivs(x);
      const double lw = which == 0 ? p.log_phi : p.log_psi;
      const double res = std::abs(0.5 * s2 * td.w2_rel + bx * td.u - rx);
      const double bound = std::exp(-lw) + rx * std::exp(std::max(p.log_phi, p.log_psi) - lw);
      const double scaled = res / bound;
      if (!(scaled <= out.residual_max)) {
        out.residual_max = std::isnan(scaled) ? std::numeric_limits<double>::infinity() : scaled;
        out.residual_x = x;
      }
    }
    if (out.signs_ok && !(p.u_phi < 0.0 && p.u_psi > 0.0)) {
      out.signs_ok = false;
      why << "monotonicity fails at x = " << x << " (phi'/phi = " << p.u_phi
          << ", psi'/psi = " << p.u_psi << "); ";
    }
    const double ctol = 1e-8 * (rx / s2 + std::abs(bx * p.u_phi) / s2 + std::abs(bx * p.u_psi) / s2);
    if (out.convex_ok && (p.phi2_rel < -ctol || p.psi2_rel < -ctol)) {
      out.convex_ok = false;
      why << "convexity fails at x = " << x << "; ";
    }
  }
  out.phi_err_max = std::abs(pair.phi(pair.c()) - 1.0) + std::abs(pair.psi(pair.c()) - 1.0);
  out.detail = why.str();
  return out;
}

inline FundamentalPair solve_fundamental(const DiffusionModel& model, const GridSpec& grid,
                                         const FundamentalOptions& opt) {
  model.validate();
  grid.validate(model.c);
  const double h = opt.knot_spacing;
  const double tc = std::log(model.c);
  const double tmin = std::log(grid.x_min), tmax = std::log(grid.x_max);
  const long j_lo = static_cast<long>(std::floor((tmin - opt.left_extension - tc) / h));
  const long j_top = static_cast<long>(std::ceil((tmax - tc) / h));
  auto knot_t = [&](long j) { return tc + h * static_cast<double>(j); };

  // ψ pass, rightward with state (log ψ, v, log p').
  auto rhs3 = [&model](double t, const std::array<double, 3>& y) {
    const auto k = detail::riccati_coeffs(model, std::exp(t), false);
    return std::array<double, 3>{y[1], detail::riccati_rhs(y[1], k), -k.B};
  };
  std::vector<double> Lpsi, vpsi, P;
  {
    ode::DormandPrince<3> solver(opt.ode);
    double t = knot_t(j_lo);
    std::array<double, 3> y{0.0, detail::shoot_seed(model, t, +1.0, true), 0.0};
    Lpsi.push_back(y[0]);
    vpsi.push_back(y[1]);
    P.push_back(y[2]);
    double tail0 = 0.0;
    auto tail_weight = [&model](double x, const std::array<double, 3>& s) {
      const double sig2 = model.sigma2(x);
      const double u = std::max(s[1], 1e-300) / x;
      return -s[0] - std::min(std::log(model.r(x)), std::log(u * sig2));
    };
    for (long j = j_lo + 1;; ++j) {
      const double tj = knot_t(j);
      const bool extending = j > j_top;
      try {
        solver.advance(rhs3, t, y, tj);
      } catch (const NumericalFailure&) {
        if (!extending || tj - h - tmax < opt.right_extension_min) throw;
        break;
      }
      if (!std::isfinite(y[0]) || !std::isfinite(y[1]) || !std::isfinite(y[2])) {
        if (!extending) throw NumericalFailure("psi integration produced a non-finite state");
        break;
      }
      Lpsi.push_back(y[0]);
      vpsi.push_back(y[1]);
      P.push_back(y[2]);
      const double x = std::exp(tj);
      if (j == j_top) tail0 = tail_weight(x, y);
      if (extending) {
        const double ext = tj - tmax;
        if (ext < opt.right_extension_min) continue;
        const auto k = detail::riccati_coeffs(model, x, false);
        const double stiff = std::abs(1.0 - k.B - 2.0 * y[1]);
        if (tail_weight(x, y) <= tail0 - opt.tail_drop || ext >= opt.right_extension_max ||
            stiff > opt.stiffness_limit)
          break;
      }
    }
  }
  const std::size_t n = Lpsi.size();
  const long j_hi = j_lo + static_cast<long>(n) - 1;

  // φ pass, leftward with state (log φ, v).
  std::vector<double> Lphi(n), vphi(n);
  {
    auto rhs2 = [&model](double t, const std::array<double, 2>& y) {
      const auto k = detail::riccati_coeffs(model, std::exp(t), false);
      return std::array<double, 2>{y[1], detail::riccati_rhs(y[1], k)};
    };
    ode::DormandPrince<2> solver(opt.ode);
    double t = knot_t(j_hi);
    std::array<double, 2> y{0.0, detail::shoot_seed(model, t, -1.0, false)};
    Lphi[n - 1] = y[0];
    vphi[n - 1] = y[1];
    for (std::size_t i = n - 1; i-- > 0;) {
      solver.advance(rhs2, t, y, knot_t(j_lo + static_cast<long>(i)));
      if (!std::isfinite(y[0]) || !std::isfinite(y[1]))
        throw NumericalFailure("phi integration produced a non-finite state");
      Lphi[i] = y[0];
      vphi[i] = y[1];
    }
  }

  const std::size_t ic = static_cast<std::size_t>(-j_lo);
  FundamentalPair pair;
  pair.model_ = model;
  pair.grid_ = grid;
  pair.h_ = h;
  pair.off_phi_ = Lphi[ic];
  pair.off_psi_ = Lpsi[ic];
  const double off_p = P[ic];
  std::vector<double> Fphi(n), Fpsi(n), ttphi(n), ttpsi(n), Pt(n), Ptt(n);
  for (std::size_t i = 0; i < n; ++i) {
    Lphi[i] -= pair.off_phi_;
    Lpsi[i] -= pair.off_psi_;
    P[i] -= off_p;
    const double x = std::exp(knot_t(j_lo + static_cast<long>(i)));
    const auto k = detail::riccati_coeffs(model, x, true);
    auto second = [&k](double v, double F) { return (k.At - k.Bt * v) + (1.0 - k.B - 2.0 * v) * F; };
    Fphi[i] = detail::riccati_rhs(vphi[i], k);
    Fpsi[i] = detail::riccati_rhs(vpsi[i], k);
    ttphi[i] = second(vphi[i], Fphi[i]);
    ttpsi[i] = second(vpsi[i], Fpsi[i]);
    Pt[i] = -k.B;
    Ptt[i] = -k.Bt;
  }
  // The knot at c carries exact zeros after normalisation.
  Lphi[ic] = Lpsi[ic] = P[ic] = 0.0;
  const double t0 = knot_t(j_lo);
  pair.lphi_ = QuinticTable(t0, h, Lphi, vphi, Fphi);
  pair.vphi_ = QuinticTable(t0, h, vphi, Fphi, ttphi);
  pair.lpsi_ = QuinticTable(t0, h, Lpsi, vpsi, Fpsi);
  pair.vpsi_ = QuinticTable(t0, h, vpsi, Fpsi, ttpsi);
  pair.lpp_ = QuinticTable(t0, h, P, Pt, Ptt);
  pair.C_ = (vpsi[ic] - vphi[ic]) / model.c;

  const auto chk = check_pair(pair, grid.points());
  std::ostringstream msg;
  if (!(pair.C_ > 0.0)) msg << "Wronskian constant C = " << pair.C_ << " is not positive";
  else if (!chk.signs_ok) msg << "fundamental pair sign invariant broken: " << chk.detail;
  else if (!(chk.wronskian_max <= 1e-6))
    msg << "Wronskian identity off by " << chk.wronskian_max << " at x = " << chk.wronskian_x;
  else if (!(chk.wronskian2_max <= 1e-6))
    msg << "second Wronskian identity off by " << chk.wronskian2_max << " at x = "
        << chk.wronskian2_x;
  if (!msg.str().empty()) throw NumericalFailure(msg.str());
  if (!chk.convex_ok)
    throw AssumptionViolation("fundamental solutions are not convex: " + chk.detail);
  return pair;
}

struct WronskianReport {
  double C = 0.0;
  double max_deviation = 0.0;
  std::vector<double> sample_x;
};

/// C = ψ'(c) - φ'(c), cross-checked as (φψ' - φ'ψ)/p' at five grid points
/// drawn with a fixed seed.
inline WronskianReport wronskian_constant(const FundamentalPair& pair, std::uint64_t seed = 20240601) {
  WronskianReport out;
  out.C = pair.psi1(pair.c()) - pair.phi1(pair.c());
  const auto xs = pair.grid().points();
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<std::size_t> pick(0, xs.size() - 1);
  for (int i = 0; i < 5; ++i) {
    const double x = xs[pick(gen)];
    const auto p = pair.at(x);
    const double w = std::exp(p.log_phi + p.log_psi - p.log_pp) * (p.u_psi - p.u_phi);
    out.sample_x.push_back(x);
    out.max_deviation = std::max(out.max_deviation, std::abs(w - out.C) / out.C);
  }
  if (!(out.max_deviation <= 1e-5)) {
    std::ostringstream msg;
    msg << "Wronskian constant not constant: relative deviation " << out.max_deviation;
    throw NumericalFailure(msg.str());
  }
  return out;
}

/// φ̃ = φ'/φ'(c) and ψ̃ = ψ'/ψ'(c), the fundamental pair of the auxiliary
/// diffusion with generator ½σ²u'' + μu' - ρu.
class TildePair {
 public:
  explicit TildePair(std::shared_ptr<const FundamentalPair> pair) : pair_(std::move(pair)) {
    const double c = pair_->c();
    phi1c_ = pair_->phi1(c);
    psi1c_ = pair_->psi1(c);
    const auto tphi = pair_->phi_table_derivs(c);
    const auto tpsi = pair_->psi_table_derivs(c);
    // C̃ = ψ̃'(c) - φ̃'(c) = ψ''(c)/ψ'(c) - φ''(c)/φ'(c), from the tables.
    C_tilde_ = tpsi.w2_rel / tpsi.u - tphi.w2_rel / tphi.u;
    const auto& m = pair_->model();
    C_formula_ = -(2.0 * m.r(c) / m.sigma2(c)) * pair_->C() / (phi1c_ * psi1c_);
  }

  double C_tilde() const { return C_tilde_; }
  /// -(2r(c)/σ²(c))·C/(φ'(c)ψ'(c)).
  double C_tilde_formula() const { return C_formula_; }

  double phi_tilde(double x) const { return pair_->phi1(x) / phi1c_; }
  double psi_tilde(double x) const { return pair_->psi1(x) / psi1c_; }
  double phi_tilde1(double x) const { return pair_->phi2(x) / phi1c_; }
  double psi_tilde1(double x) const { return pair_->psi2(x) / psi1c_; }

  struct Sample {
    double value, d1, d2;
  };
  /// φ̃, φ̃', φ̃'' from the tables (third derivative of φ included).
  Sample phi_tilde_all(double x) const { return sample(x, true); }
  Sample psi_tilde_all(double x) const { return sample(x, false); }

  const FundamentalPair& pair() const { return *pair_; }

 private:
  Sample sample(double x, bool phi) const {
    const auto td = phi ? pair_->phi_table_derivs(x) : pair_->psi_table_derivs(x);
    const double w = phi ? pair_->phi(x) : pair_->psi(x);
    const double norm = phi ? phi1c_ : psi1c_;
    return {w * td.u / norm, w * td.w2_rel / norm, w * td.w3_rel / norm};
  }

  std::shared_ptr<const FundamentalPair> pair_;
  double phi1c_ = 0.0, psi1c_ = 0.0, C_tilde_ = 0.0, C_formula_ = 0.0;
};

struct TildeReport {
  double C_tilde_deviation = 0.0;  // relative
  double residual_max = 0.0;       // scaled ODE residual of both tilde functions
  double residual_x = 0.0;
  bool signs_ok = true;
  std::string detail;
};

inline TildeReport check_tilde(const TildePair& tp, const std::vector<double>& xs) {
  TildeReport out;
  const auto& m = tp.pair().model();
  out.C_tilde_deviation = std::abs(tp.C_tilde() / tp.C_tilde_formula() - 1.0);
  std::ostringstream why;
  for (double x : xs) {
    const double s2 = m.sigma2(x), mux = mu(m, x), rhox = rho(m, x);
    for (int which = 0; which < 2; ++which) {
      const auto s = which == 0 ? tp.phi_tilde_all(x) : tp.psi_tilde_all(x);
      const double terms[3] = {0.5 * s2 * s.d2, mux * s.d1, -rhox * s.value};
      const double res = std::abs(terms[0] + terms[1] + terms[2]);
      const double scale = std::abs(terms[0]) + std::abs(terms[1]) + std::abs(terms[2]);
      const double scaled = scale > 0.0 ? res / scale : 0.0;
      if (!(scaled <= out.residual_max)) {
        out.residual_max = std::isnan(scaled) ? std::numeric_limits<double>::infinity() : scaled;
        out.residual_x = x;
      }
      const bool ok = s.value > 0.0 && (which == 0 ? s.d1 < 0.0 : s.d1 > 0.0);
      if (!ok && out.signs_ok) {
        out.signs_ok = false;
        why << (which == 0 ? "phi~" : "psi~") << " loses positivity or monotonicity at x = " << x;
      }
    }
  }
  out.detail = why.str();
  return out;
}

/// Builds the tilde pair and enforces its invariants: signs (an
/// AssumptionViolation, pointing at rho >= r0) and the C̃ identity.
inline TildePair tilde_pair(std::shared_ptr<const FundamentalPair> pair) {
  TildePair tp(std::move(pair));
  const auto rep = check_tilde(tp, tp.pair().grid().points());
  if (!rep.signs_ok)
    throw AssumptionViolation(rep.detail + "; the data probably violate rho >= r0");
  if (!(rep.C_tilde_deviation <= 1e-8)) {
    std::ostringstream msg;
    msg << "C~ identity off by " << rep.C_tilde_deviation;
    throw NumericalFailure(msg.str());
  }
  return tp;
}

struct GuardReport {
  bool warning = false;
  double min_rho = std::numeric_limits<double>::infinity();
  double witness = 0.0;
  std::string message;
};

/// Warns when rho drops below r0 anywhere on the grid: the tilde pair may
/// then lose monotonicity.
inline GuardReport verify_counterexample_guard(const DiffusionModel& m, const GridSpec& grid) {
  GuardReport out;
  for (double x : grid.points()) {
    const double v = rho(m, x);
    if (v < out.min_rho) {
      out.min_rho = v;
      out.witness = x;
    }
  }
  if (out.min_rho < m.r0) {
    out.warning = true;
    std::ostringstream msg;
    msg << "rho = " << out.min_rho << " < r0 = " << m.r0 << " at x = " << out.witness
        << ": phi~, psi~ may fail to be monotone";
    out.message = msg.str();
  }
  return out;
}

inline void write_pair_csv(std::ostream& os, const FundamentalPair& pair, const std::vector<double>& xs) {
  io::csv_header(os, {"x", "phi", "phi1", "phi2", "psi", "psi1", "psi2", "p_prime"});
  for (double x : xs) {
    const auto p = pair.at(x);
    const double phi = std::exp(p.log_phi), psi = std::exp(p.log_psi);
    io::csv_row(os, {x, phi, phi * p.u_phi, phi * p.phi2_rel, psi, psi * p.u_psi,
                     psi * p.psi2_rel, std::exp(p.log_pp)});
  }
}

}  // namespace goodwill
