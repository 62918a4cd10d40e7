#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "goodwill/diffusion.hpp"
#include "goodwill/fundamental.hpp"
#include "goodwill/io.hpp"
#include "goodwill/numerics/quadrature.hpp"

namespace goodwill {

enum class TailSign { Nonneg, Nonpos, Unknown };

/// A running payoff G with, optionally, D_r G = G' - r'G/r and the
/// declared signs of D_r G near 0 and near infinity.
struct PayoffSpec {
  SmoothFn1D G;
  SmoothFn1D drG;
  TailSign sign_left = TailSign::Unknown;
  TailSign sign_right = TailSign::Unknown;
};

inline double dr_of(const PayoffSpec& s, const DiffusionModel& m, double x) {
  if (s.drG) return s.drG(x);
  return s.G.d1(x) - m.r.d1(x) * s.G(x) / m.r(x);
}

inline PayoffSpec payoff_h(const ControlProblem& p) {
  PayoffSpec s;
  s.G = p.h;
  const auto m = p.model;
  const auto h = p.h;
  s.drG = SmoothFn1D([m, h](double x) { return h.d1(x) - m.r.d1(x) * h(x) / m.r(x); });
  return s;
}

inline PayoffSpec payoff_q(const ControlProblem& p) {
  PayoffSpec s;
  s.G = SmoothFn1D([p](double x) { return q_func(p, x); });
  s.drG = SmoothFn1D([p](double x) { return drq(p, x); });
  return s;
}

/// G = -L_X K, whose resolvent should reproduce K.
inline PayoffSpec payoff_minus_lk(const ControlProblem& p) {
  PayoffSpec s;
  s.G = SmoothFn1D([p](double x) {
    const auto& m = p.model;
    return -(0.5 * m.sigma2(x) * p.k.d1(x) + m.b(x) * p.k(x) - m.r(x) * big_k(p, x));
  });
  return s;
}

enum class Weight { Psi, Phi };  // exponent log ψ - log p'  or  log φ - log p'

namespace detail {

inline double weight_exponent(const PairPoint& p, Weight w) {
  return (w == Weight::Psi ? p.log_psi : p.log_phi) - p.log_pp;
}

inline quad::Tolerance segment_tolerance() {
  quad::Tolerance t;
  t.abs = 1e-300;
  t.rel = 1e-13;
  t.max_intervals = 64;
  return t;
}

}  // namespace detail

/// Cumulative integral of f(s)·exp(E(s)) over (0, x] or [x, ∞), where E is
/// one of the two pair weights. Stored on the pair's knots divided by
/// exp(E(x_i)), so the stored numbers stay O(1) even when exp(E) does not.
class CumulativeIntegral {
 public:
  enum class Side { Left, Right };

  CumulativeIntegral() = default;
  CumulativeIntegral(std::shared_ptr<const FundamentalPair> pair, std::function<double(double)> f,
                     Side side, Weight weight)
      : pair_(std::move(pair)), f_(std::move(f)), side_(side), weight_(weight) {
    const std::size_t n = pair_->knots();
    const double h = pair_->knot_spacing();
    t0_ = pair_->t_lo();
    h_ = h;
    E_.resize(n);
    J_.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) E_[i] = exponent(std::exp(knot(i)));
    if (side_ == Side::Left) {
      J_[0] = geometric_tail(0, 1, 2);
      for (std::size_t i = 1; i < n; ++i)
        J_[i] = J_[i - 1] * std::exp(E_[i - 1] - E_[i]) + segment(knot(i - 1), knot(i), E_[i]);
    } else {
      J_[n - 1] = geometric_tail(n - 1, n - 2, n - 3);
      for (std::size_t i = n - 1; i-- > 0;)
        J_[i] = J_[i + 1] * std::exp(E_[i + 1] - E_[i]) + segment(knot(i), knot(i + 1), E_[i]);
    }
  }

  /// Integral divided by exp(E(x)).
  double scaled(double x) const {
    const double t = std::log(x);
    const double e = exponent(x);
    std::size_t i = locate(t);
    if (side_ == Side::Left)
      return J_[i] * std::exp(E_[i] - e) + segment(knot(i), t, e);
    return J_[i + 1] * std::exp(E_[i + 1] - e) + segment(t, knot(i + 1), e);
  }

  double exponent(double x) const { return detail::weight_exponent(pair_->at(x), weight_); }

  /// Integrand per unit log s at the truncated end, relative to the
  /// accumulated integral at the nearer grid end; a measure of what the
  /// finite table leaves out.
  double truncation_estimate() const {
    const std::size_t n = J_.size();
    const std::size_t far = side_ == Side::Left ? 0 : n - 1;
    const double x = std::exp(knot(far));
    const double tail = std::abs(f_(x)) * x;  // times exp(E_far)
    const double xg = side_ == Side::Left ? pair_->grid().x_min : pair_->grid().x_max;
    const double ref = std::abs(scaled(xg));  // times exp(E(xg))
    if (ref == 0.0) return tail == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return tail / ref * std::exp(E_[far] - exponent(xg));
  }

 private:
  double knot(std::size_t i) const { return t0_ + h_ * static_cast<double>(i); }

  std::size_t locate(double t) const {
    const double pos = (t - t0_) / h_;
    const std::size_t last = J_.size() - 2;
    if (pos <= 0.0) return 0;
    return std::min(static_cast<std::size_t>(pos), last);
  }

  // Beyond the table the integrand per unit log s is closed off as a
  // geometric tail when the last three knots show a steady decay rate; this
  // is what keeps power-law tails from being truncated. Scaled by exp(E_i0).
  double geometric_tail(std::size_t i0, std::size_t i1, std::size_t i2) const {
    auto g = [this, i0](std::size_t i) {
      const double s = std::exp(knot(i));
      return f_(s) * s * std::exp(E_[i] - E_[i0]);
    };
    const double g0 = g(i0), g1 = g(i1), g2 = g(i2);
    if (g0 == 0.0 || !(g0 * g1 > 0.0) || !(g1 * g2 > 0.0)) return 0.0;
    const double k1 = std::log(g1 / g0) / h_, k2 = std::log(g2 / g1) / h_;
    if (!(k1 > 0.0) || !(k2 > 0.0) || std::abs(k1 - k2) > 0.05 * k1) return 0.0;
    return g0 / k1;
  }

  // ∫_{e^ta}^{e^tb} f(s) exp(E(s) - e_ref) ds in the variable u = log s.
  double segment(double ta, double tb, double e_ref) const {
    if (ta == tb) return 0.0;
    auto g = [this, e_ref](double u) {
      const double s = std::exp(u);
      const double fx = f_(s);
      if (fx == 0.0) return 0.0;
      return fx * s * std::exp(exponent(s) - e_ref);
    };
    return quad::integrate(g, ta, tb, detail::segment_tolerance()).value;
  }

  std::shared_ptr<const FundamentalPair> pair_;
  std::function<double(double)> f_;
  Side side_ = Side::Left;
  Weight weight_ = Weight::Psi;
  double t0_ = 0.0, h_ = 1.0;
  std::vector<double> E_, J_;
};

enum class Finiteness { Finite, Divergent, Inconclusive };

inline const char* to_string(Finiteness f) {
  switch (f) {
    case Finiteness::Finite: return "FINITE";
    case Finiteness::Divergent: return "DIVERGENT";
    case Finiteness::Inconclusive: return "INCONCLUSIVE";
  }
  return "?";
}

struct IntegrabilityReport {
  Finiteness left = Finiteness::Inconclusive;
  Finiteness right = Finiteness::Inconclusive;
  std::vector<double> left_partials, right_partials;  // log of truncated integrals
};

namespace detail {

// Nested truncations of ∫ |G| w/(σ² p') from c outward in doubling steps,
// tracked in log form. Finite once three successive extensions change the
// value by less than 1e-6 relative; divergent once it has grown by more
// than e^200 over its first segment or stopped being finite.
inline Finiteness nested_truncations(const PayoffSpec& spec, const FundamentalPair& pair,
                                     Weight w, bool leftward, std::vector<double>& partials) {
  const auto& m = pair.model();
  const double c = pair.c();
  const double limit = leftward ? pair.x_lo() : pair.x_hi();
  const double ln2 = std::log(2.0);
  const double ue = std::log(limit);
  double u = std::log(c);
  double log_total = -std::numeric_limits<double>::infinity();
  double log_first = log_total;
  int quiet = 0;
  while (leftward ? u > ue : u < ue) {
    const double next = leftward ? std::max(u - ln2, ue) : std::min(u + ln2, ue);
    const double e_ref = weight_exponent(pair.at(std::exp(u)), w);
    auto g = [&](double v) {
      const double s = std::exp(v);
      const double Gs = std::abs(spec.G(s));
      if (Gs == 0.0) return 0.0;
      return Gs * s / m.sigma2(s) * std::exp(weight_exponent(pair.at(s), w) - e_ref);
    };
    const double seg = quad::integrate(g, std::min(u, next), std::max(u, next), segment_tolerance()).value;
    u = next;
    if (!std::isfinite(seg)) return Finiteness::Divergent;
    if (seg == 0.0) {
      partials.push_back(log_total);
      if (++quiet >= 3) return Finiteness::Finite;
      continue;
    }
    const double ls = std::log(seg) + e_ref;
    if (!std::isfinite(log_first)) log_first = ls;
    const double hi = std::max(log_total, ls);
    log_total = hi + std::log(std::exp(log_total - hi) + std::exp(ls - hi));
    partials.push_back(log_total);
    if (!std::isfinite(log_total) || log_total - log_first > 200.0) return Finiteness::Divergent;
    if (ls - log_total < std::log(1e-6)) {
      if (++quiet >= 3) return Finiteness::Finite;
    } else {
      quiet = 0;
    }
  }
  return Finiteness::Inconclusive;
}

}  // namespace detail

/// Whether ∫_0 |G|ψ/(σ²p') and ∫^∞ |G|φ/(σ²p') are finite.
inline IntegrabilityReport integrability_check(const PayoffSpec& spec, const FundamentalPair& pair) {
  IntegrabilityReport out;
  out.left = detail::nested_truncations(spec, pair, Weight::Psi, true, out.left_partials);
  out.right = detail::nested_truncations(spec, pair, Weight::Phi, false, out.right_partials);
  return out;
}

namespace detail {

struct Sides {
  double left = 0.0, right = 0.0;  // scaled by exp(E_left(x)), exp(E_right(x))
  bool truncated = false;
  bool converged = true;
};

// Direct evaluation at one point: ∫_0^x fl·e^{El(s)-El(x)} and
// ∫_x^∞ fr·e^{Er(s)-Er(x)} by monitored tail sweeps inside the table.
template <class FL, class FR>
Sides sweep_sides(const FundamentalPair& pair, double x, const FL& fl, Weight wl, const FR& fr,
                  Weight wr) {
  const auto px = pair.at(x);
  const double el = weight_exponent(px, wl), er = weight_exponent(px, wr);
  auto gl = [&](double s) {
    const double f = fl(s);
    return f == 0.0 ? 0.0 : f * std::exp(weight_exponent(pair.at(s), wl) - el);
  };
  auto gr = [&](double s) {
    const double f = fr(s);
    return f == 0.0 ? 0.0 : f * std::exp(weight_exponent(pair.at(s), wr) - er);
  };
  quad::TailOptions opt;
  Sides out;
  const auto L = quad::integrate_lower_tail(gl, x, pair.x_lo(), opt);
  const auto R = quad::integrate_upper_tail(gr, x, pair.x_hi(), opt);
  out.left = L.value;
  out.right = R.value;
  out.truncated = (L.truncated && L.value != 0.0) || (R.truncated && R.value != 0.0);
  out.converged = L.converged && R.converged;
  return out;
}

inline void require_finite_sides(const Sides& s, const char* what) {
  if (!std::isfinite(s.left) || !std::isfinite(s.right)) {
    throw NumericalFailure(std::string(what) + ": integral is not finite (payoff not integrable?)");
  }
}

}  // namespace detail

/// R_{X,G}(x) by direct quadrature.
inline double resolvent(const PayoffSpec& spec, const FundamentalPair& pair, double x) {
  const auto& m = pair.model();
  auto f = [&](double s) { return spec.G(s) / m.sigma2(s); };
  const auto sd = detail::sweep_sides(pair, x, f, Weight::Psi, f, Weight::Phi);
  detail::require_finite_sides(sd, "resolvent");
  const auto p = pair.at(x);
  return 2.0 / pair.C() * std::exp(p.log_phi + p.log_psi - p.log_pp) * (sd.left + sd.right);
}

inline double resolvent_prime(const PayoffSpec& spec, const FundamentalPair& pair, double x) {
  const auto& m = pair.model();
  auto f = [&](double s) { return spec.G(s) / m.sigma2(s); };
  const auto sd = detail::sweep_sides(pair, x, f, Weight::Psi, f, Weight::Phi);
  detail::require_finite_sides(sd, "resolvent_prime");
  const auto p = pair.at(x);
  return 2.0 / pair.C() * std::exp(p.log_phi + p.log_psi - p.log_pp) *
         (p.u_phi * sd.left + p.u_psi * sd.right);
}

struct ResolventY {
  double value = 0.0;
  std::string warning;  // non-empty when a declared tail sign was contradicted
};

namespace detail {

inline std::string check_tail_signs(const PayoffSpec& spec, const FundamentalPair& pair) {
  const auto& m = pair.model();
  std::ostringstream msg;
  auto scan = [&](TailSign decl, bool left) {
    if (decl == TailSign::Unknown) return;
    for (int j = 0; j <= 8; ++j) {
      const double x = left ? pair.grid().x_min * std::ldexp(1.0, -j) : pair.grid().x_max * std::ldexp(1.0, j);
      if (!pair.covers(x)) continue;
      const double d = dr_of(spec, m, x);
      const bool bad = decl == TailSign::Nonneg ? d < 0.0 : d > 0.0;
      if (bad) {
        msg << "declared sign of D_rG near " << (left ? "0" : "infinity")
            << " is contradicted at x = " << x << " (D_rG = " << d << "); ";
        return;
      }
    }
  };
  scan(spec.sign_left, true);
  scan(spec.sign_right, false);
  return msg.str();
}

}  // namespace detail

/// R_{Y,D_rG}(x) by direct quadrature; equals R'_{X,G} under the tail-sign
/// hypotheses.
inline ResolventY resolvent_y(const PayoffSpec& spec, const FundamentalPair& pair, double x) {
  const auto& m = pair.model();
  auto fl = [&](double s) { return dr_of(spec, m, s) * pair.u_psi(s) / m.r(s); };
  auto fr = [&](double s) { return -dr_of(spec, m, s) * pair.u_phi(s) / m.r(s); };
  const auto sd = detail::sweep_sides(pair, x, fl, Weight::Psi, fr, Weight::Phi);
  detail::require_finite_sides(sd, "resolvent_y");
  const auto p = pair.at(x);
  ResolventY out;
  out.value = std::exp(p.log_phi + p.log_psi - p.log_pp) / pair.C() *
              (-p.u_phi * sd.left + p.u_psi * sd.right);
  out.warning = detail::check_tail_signs(spec, pair);
  return out;
}

/// Grid-cached R, R', R'' (and R_Y) built from cumulative integrals on the
/// pair's knots; point evaluation costs one short quadrature per side.
class ResolventTable {
 public:
  struct Value {
    double R, R1, R2;
  };

  ResolventTable(std::shared_ptr<const FundamentalPair> pair, PayoffSpec spec)
      : pair_(std::move(pair)), spec_(std::move(spec)) {
    const auto& m = pair_->model();
    const auto G = spec_.G;
    auto f = [G, m](double s) { return G(s) / m.sigma2(s); };
    left_ = CumulativeIntegral(pair_, f, CumulativeIntegral::Side::Left, Weight::Psi);
    right_ = CumulativeIntegral(pair_, f, CumulativeIntegral::Side::Right, Weight::Phi);
    const auto sp = spec_;
    const auto pr = pair_;
    auto fl = [sp, m, pr](double s) { return dr_of(sp, m, s) * pr->u_psi(s) / m.r(s); };
    auto fr = [sp, m, pr](double s) { return -dr_of(sp, m, s) * pr->u_phi(s) / m.r(s); };
    y_left_ = CumulativeIntegral(pair_, fl, CumulativeIntegral::Side::Left, Weight::Psi);
    y_right_ = CumulativeIntegral(pair_, fr, CumulativeIntegral::Side::Right, Weight::Phi);
  }

  Value at(double x) const {
    const auto p = pair_->at(x);
    const double jl = left_.scaled(x), jr = right_.scaled(x);
    const double pre = 2.0 / pair_->C() * std::exp(p.log_phi + p.log_psi - p.log_pp);
    const double s2 = pair_->model().sigma2(x);
    return {pre * (jl + jr), pre * (p.u_phi * jl + p.u_psi * jr),
            pre * (p.phi2_rel * jl + p.psi2_rel * jr) - 2.0 * spec_.G(x) / s2};
  }

  double R(double x) const { return at(x).R; }
  double R1(double x) const { return at(x).R1; }
  double R2(double x) const { return at(x).R2; }

  /// R_{Y, D_rG}(x) from its own cumulative integrals.
  double RY(double x) const {
    const auto p = pair_->at(x);
    return std::exp(p.log_phi + p.log_psi - p.log_pp) / pair_->C() *
           (-p.u_phi * y_left_.scaled(x) + p.u_psi * y_right_.scaled(x));
  }

  /// ∫_x^∞ D_rG φ'/(r p'), from the same cache (g of the free boundary).
  double phi_prime_tail(double x) const {
    return -std::exp(right_exponent(x)) * y_right_.scaled(x);
  }
  /// The same divided by exp(log φ(x) - log p'(x)); same sign, never overflows.
  double phi_prime_tail_scaled(double x) const { return -y_right_.scaled(x); }

  /// Residual of L_X R + G with R'' taken from the φ, ψ tables' own
  /// derivatives, scaled by the size of the terms.
  double scaled_residual(double x) const {
    const auto& m = pair_->model();
    const auto p = pair_->at(x);
    const auto tp = pair_->phi_table_derivs(x), ts = pair_->psi_table_derivs(x);
    const double jl = left_.scaled(x), jr = right_.scaled(x);
    const double pre = 2.0 / pair_->C() * std::exp(p.log_phi + p.log_psi - p.log_pp);
    const double s2 = m.sigma2(x);
    const double Gx = spec_.G(x);
    const double R = pre * (jl + jr);
    const double R1 = pre * (tp.u * jl + ts.u * jr);
    const double R2 = pre * (tp.w2_rel * jl + ts.w2_rel * jr) - 2.0 * Gx / s2;
    const double t1 = 0.5 * s2 * R2, t2 = m.b(x) * R1, t3 = -m.r(x) * R;
    const double scale = std::abs(t1) + std::abs(t2) + std::abs(t3) + std::abs(Gx);
    return scale > 0.0 ? std::abs(t1 + t2 + t3 + Gx) / scale : 0.0;
  }

  double truncation_estimate() const {
    return std::max(left_.truncation_estimate(), right_.truncation_estimate());
  }

  const PayoffSpec& spec() const { return spec_; }
  const FundamentalPair& pair() const { return *pair_; }
  std::shared_ptr<const FundamentalPair> pair_ptr() const { return pair_; }

 private:
  double right_exponent(double x) const { return y_right_.exponent(x); }

  std::shared_ptr<const FundamentalPair> pair_;
  PayoffSpec spec_;
  CumulativeIntegral left_, right_;
  CumulativeIntegral y_left_, y_right_;
};

struct IdentityReport {
  double max_deviation = 0.0;
  double worst_x = 0.0;
  Verdict verdict = Verdict::Pass;
  std::string warning;
};

/// max over xs of |R'_{X,G} - R_{Y,D_rG}| relative to the larger side,
/// floored at 1e-6 of max|R'| so zeros of R' do not blow up the ratio.
inline IdentityReport derivative_identity_check(const ResolventTable& t, const std::vector<double>& xs,
                                                double tol = 1e-5) {
  IdentityReport out;
  std::vector<double> a(xs.size()), b(xs.size());
  double amax = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    a[i] = t.R1(xs[i]);
    b[i] = t.RY(xs[i]);
    amax = std::max(amax, std::abs(a[i]));
  }
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), 1e-6 * amax});
    const double dev = scale > 0.0 ? std::abs(a[i] - b[i]) / scale : 0.0;
    if (!(dev <= out.max_deviation)) {
      out.max_deviation = std::isnan(dev) ? std::numeric_limits<double>::infinity() : dev;
      out.worst_x = xs[i];
    }
  }
  out.verdict = out.max_deviation <= tol ? Verdict::Pass : Verdict::Fail;
  out.warning = detail::check_tail_signs(t.spec(), t.pair());
  return out;
}

/// U_{X^a,G}(x) = -R'(a)/φ'(a)·φ(x) + R(x) for x >= a, with U'(a) = 0.
class ReflectedResolvent {
 public:
  ReflectedResolvent(const ResolventTable& table, double a) : table_(&table), a_(a) {
    if (!(a > 0.0)) throw ConfigError("reflected resolvent: a must be positive");
    const auto& pair = table.pair();
    log_phi_a_ = pair.log_phi(a);
    u_phi_a_ = pair.u_phi(a);
    R1a_ = table.R1(a);
  }

  double a() const { return a_; }

  /// -R'(a)/φ'(a); the coefficient of φ.
  double coefficient_at(double x) const {
    return -R1a_ / u_phi_a_ * std::exp(table_->pair().log_phi(x) - log_phi_a_);
  }

  double operator()(double x) const {
    check(x);
    return coefficient_at(x) + table_->R(x);
  }
  double d1(double x) const {
    check(x);
    return coefficient_at(x) * table_->pair().u_phi(x) + table_->R1(x);
  }
  double d2(double x) const {
    check(x);
    const auto p = table_->pair().at(x);
    return coefficient_at(x) * p.phi2_rel + table_->R2(x);
  }

 private:
  void check(double x) const {
    if (x < a_ * (1.0 - 1e-14)) {
      std::ostringstream msg;
      msg << "reflected resolvent evaluated at x = " << x << " below a = " << a_;
      throw ConfigError(msg.str());
    }
  }

  const ResolventTable* table_;
  double a_;
  double log_phi_a_ = 0.0, u_phi_a_ = -1.0, R1a_ = 0.0;
};

inline double reflected_resolvent(const ResolventTable& table, double a, double x) {
  return ReflectedResolvent(table, a)(x);
}

/// Checks K = R_{X, -L_X K} on xs; a deviation means the transversality
/// condition behind that identity is doubtful for these data.
inline Diagnostic check_k_identity(const ControlProblem& p, std::shared_ptr<const FundamentalPair> pair,
                                   const std::vector<double>& xs, double tol = 1e-6) {
  Diagnostic d{"K = R(-L K)", Verdict::Pass, std::numeric_limits<double>::quiet_NaN(), ""};
  const ResolventTable t(std::move(pair), payoff_minus_lk(p));
  double worst = 0.0;
  for (double x : xs) {
    const double K = big_k(p, x);
    const double R = t.R(x);
    const double dev = std::abs(R - K) / std::max({std::abs(K), std::abs(R), 1e-300});
    if (!(dev <= worst)) {
      worst = std::isnan(dev) ? std::numeric_limits<double>::infinity() : dev;
      d.witness = x;
    }
  }
  std::ostringstream msg;
  msg << "max relative deviation " << worst;
  d.detail = msg.str();
  if (worst > tol) d.verdict = Verdict::Inconclusive;
  return d;
}

/// Columns x, R, R1, g_integrand (= D_rG φ'/(r p')).
inline void write_resolvent_csv(std::ostream& os, const ResolventTable& t, const std::vector<double>& xs) {
  io::csv_header(os, {"x", "R", "R1", "g_integrand"});
  const auto& m = t.pair().model();
  for (double x : xs) {
    const auto v = t.at(x);
    const auto p = t.pair().at(x);
    const double gi = dr_of(t.spec(), m, x) * p.u_phi / m.r(x) * std::exp(p.log_phi - p.log_pp);
    io::csv_row(os, {x, v.R, v.R1, gi});
  }
}

}  // namespace goodwill
