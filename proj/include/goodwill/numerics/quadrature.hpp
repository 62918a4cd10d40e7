#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <queue>
#include <sstream>
#include <vector>

#include "goodwill/errors.hpp"

namespace goodwill::quad {

struct Tolerance {
  double abs = 1e-10;
  double rel = 1e-8;
  std::size_t max_intervals = 4000;
};

struct Result {
  double value = 0.0;
  double abs_error = 0.0;
  std::size_t evaluations = 0;
  bool converged = true;
  /// Subinterval with the largest remaining error estimate.
  double worst_lo = 0.0;
  double worst_hi = 0.0;
};

namespace detail {

// 15-point Kronrod nodes on [0, 1] (symmetric), with the embedded 7-point
// Gauss rule on the odd-indexed nodes.
inline constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
  double lo, hi, value, error;
  bool operator<(const Panel& o) const { return error < o.error; }
};

template <class F>
Panel gauss_kronrod(const F& f, double lo, double hi) {
  const double center = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  const double fc = f(center);
  double kronrod = fc * kWgk[7];
  double gauss = fc * kWg[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kXgk[j];
    const double fsum = f(center - dx) + f(center + dx);
    kronrod += kWgk[j] * fsum;
    if (j % 2 == 1) gauss += kWg[j / 2] * fsum;
  }
  return {lo, hi, kronrod * half, std::abs((kronrod - gauss) * half)};
}

}  // namespace detail

/// Globally adaptive 7/15-point Gauss-Kronrod quadrature on [lo, hi].
/// Never throws on non-convergence; inspect Result::converged.
template <class F>
Result integrate(const F& f, double lo, double hi, const Tolerance& tol = {}) {
  Result out;
  if (lo == hi) return out;
  const double sign = hi > lo ? 1.0 : -1.0;
  if (sign < 0) std::swap(lo, hi);

  std::priority_queue<detail::Panel> work;
  work.push(detail::gauss_kronrod(f, lo, hi));
  out.evaluations = 15;
  double total = work.top().value;
  double error = work.top().error;
  std::size_t panels = 1;

  while (error > std::max(tol.abs, tol.rel * std::abs(total))) {
    if (panels >= tol.max_intervals || !std::isfinite(total)) {
      out.converged = false;
      break;
    }
    const detail::Panel worst = work.top();
    const double mid = 0.5 * (worst.lo + worst.hi);
    if (!(mid > worst.lo && mid < worst.hi)) {
      out.converged = false;
      break;
    }
    work.pop();
    const detail::Panel left = detail::gauss_kronrod(f, worst.lo, mid);
    const detail::Panel right = detail::gauss_kronrod(f, mid, worst.hi);
    out.evaluations += 30;
    ++panels;
    total += left.value + right.value - worst.value;
    error += left.error + right.error - worst.error;
    work.push(left);
    work.push(right);
  }
  // Re-sum to shed the drift of the incremental updates.
  total = 0.0;
  error = 0.0;
  double worst_err = -1.0;
  while (!work.empty()) {
    const auto& p = work.top();
    total += p.value;
    error += p.error;
    if (p.error > worst_err) {
      worst_err = p.error;
      out.worst_lo = p.lo;
      out.worst_hi = p.hi;
    }
    work.pop();
  }
  out.value = sign * total;
  out.abs_error = error;
  if (!std::isfinite(out.value)) out.converged = false;
  return out;
}

/// Throws NumericalFailure naming the offending subinterval.
inline const Result& require_converged(const Result& r, const char* what) {
  if (!r.converged) {
    std::ostringstream msg;
    msg.precision(6);
    msg << what << ": quadrature did not converge (worst subinterval ["
        << r.worst_lo << ", " << r.worst_hi << "], error estimate "
        << r.abs_error << ")";
    throw NumericalFailure(msg.str());
  }
  return r;
}

/// Integral over [lo, hi] (0 < lo < hi) in the variable u = log s.
template <class F>
Result integrate_log(const F& f, double lo, double hi, const Tolerance& tol = {}) {
  auto g = [&f](double u) {
    const double s = std::exp(u);
    return f(s) * s;
  };
  return integrate(g, std::log(lo), std::log(hi), tol);
}

struct TailOptions {
  /// Segment width in log-space (ln 2: each segment doubles s).
  double segment = 0.6931471805599453;
  /// A segment is negligible when |segment| <= cutoff * |running sum|.
  double cutoff = 1e-14;
  /// Stop after this many successive negligible segments.
  int patience = 3;
  double rel = 1e-12;
};

struct TailResult {
  double value = 0.0;
  double abs_error = 0.0;
  bool converged = true;   // every segment quadrature converged
  bool truncated = false;  // ran into the hard limit before the tail died out
  double reached = 0.0;    // where integration stopped
  std::size_t evaluations = 0;
};

namespace detail {

template <class F>
TailResult tail_sweep(const F& f, double from, double limit, const TailOptions& opt) {
  TailResult out;
  const double u_from = std::log(from);
  const double u_limit = std::log(limit);
  const double dir = u_limit > u_from ? 1.0 : -1.0;
  double u = u_from;
  int quiet = 0;
  auto g = [&f](double v) {
    const double s = std::exp(v);
    return f(s) * s;
  };
  while (dir * (u_limit - u) > 0.0) {
    double next = u + dir * opt.segment;
    if (dir * (next - u_limit) > 0.0) next = u_limit;
    Tolerance tol;
    tol.rel = opt.rel;
    tol.abs = std::max(1e-300, 1e-3 * opt.cutoff * std::abs(out.value));
    const Result seg = integrate(g, std::min(u, next), std::max(u, next), tol);
    out.evaluations += seg.evaluations;
    out.converged = out.converged && seg.converged;
    out.value += seg.value;
    out.abs_error += seg.abs_error;
    u = next;
    if (!std::isfinite(out.value)) {
      out.converged = false;
      break;
    }
    if (std::abs(seg.value) <= opt.cutoff * std::abs(out.value) ||
        (seg.value == 0.0 && out.value == 0.0)) {
      if (++quiet >= opt.patience) break;
    } else {
      quiet = 0;
    }
  }
  out.reached = std::exp(u);
  out.truncated = quiet < opt.patience;
  return out;
}

}  // namespace detail

/// Integral of f over [x, inf), truncated once the doubling segments become
/// negligible, or at `cap` (then TailResult::truncated is set).
template <class F>
TailResult integrate_upper_tail(const F& f, double x, double cap, const TailOptions& opt = {}) {
  if (!(cap > x)) return {0.0, 0.0, true, true, x, 0};
  return detail::tail_sweep(f, x, cap, opt);
}

/// Integral of f over (0, x], handled as a sweep toward `floor`.
template <class F>
TailResult integrate_lower_tail(const F& f, double x, double floor, const TailOptions& opt = {}) {
  if (!(floor < x)) return {0.0, 0.0, true, true, x, 0};
  return detail::tail_sweep(f, x, floor, opt);
}

}  // namespace goodwill::quad
