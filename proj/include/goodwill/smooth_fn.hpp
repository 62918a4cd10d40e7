#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <type_traits>
#include <utility>

namespace goodwill {

/// Relative step for central-difference fallbacks of first derivatives.
inline constexpr double kFdStep1 = 1e-6;
/// Relative step for the three-point second-difference fallback.
inline constexpr double kFdStep2 = 1e-4;

/// A real function on (0, inf) with optional analytic first and second
/// derivatives. Missing derivatives fall back to central differences with
/// a step proportional to x, so the stencil never leaves the half-line.
///
/// Construction from a concrete callable also builds a batch evaluator that
/// calls the callable directly, which the path simulator uses to avoid one
/// indirect call per state.
class SmoothFn1D {
 public:
  using Scalar = std::function<double(double)>;
  using Batch = std::function<void(std::span<const double>, std::span<double>)>;

  SmoothFn1D() = default;

  template <class F>
    requires(std::is_invocable_r_v<double, F, double> &&
             !std::is_same_v<std::decay_t<F>, SmoothFn1D>)
  SmoothFn1D(F f)  // NOLINT(google-explicit-constructor)
      : value_(f), batch_(make_batch(std::move(f))) {}

  template <class F, class D1>
  SmoothFn1D(F f, D1 d1) : SmoothFn1D(std::move(f)) {
    d1_ = Scalar(std::move(d1));
  }

  template <class F, class D1, class D2>
  SmoothFn1D(F f, D1 d1, D2 d2) : SmoothFn1D(std::move(f), std::move(d1)) {
    d2_ = Scalar(std::move(d2));
  }

  static SmoothFn1D constant(double v) {
    return {[v](double) { return v; }, [](double) { return 0.0; },
            [](double) { return 0.0; }};
  }

  explicit operator bool() const { return static_cast<bool>(value_); }

  double operator()(double x) const { return value_(x); }

  bool has_d1() const { return static_cast<bool>(d1_); }
  bool has_d2() const { return static_cast<bool>(d2_); }

  double d1(double x) const {
    if (d1_) return d1_(x);
    const double h = kFdStep1 * x;
    return (value_(x + h) - value_(x - h)) / (2.0 * h);
  }

  double d2(double x) const {
    if (d2_) return d2_(x);
    if (d1_) {
      const double h = kFdStep1 * x;
      return (d1_(x + h) - d1_(x - h)) / (2.0 * h);
    }
    const double h = kFdStep2 * x;
    return (value_(x + h) - 2.0 * value_(x) + value_(x - h)) / (h * h);
  }

  void eval(std::span<const double> x, std::span<double> out) const {
    if (batch_) {
      batch_(x, out);
      return;
    }
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = value_(x[i]);
  }

  const Scalar& value_fn() const { return value_; }

 private:
  template <class F>
  static Batch make_batch(F f) {
    return [f](std::span<const double> x, std::span<double> out) {
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
    };
  }

  Scalar value_;
  Batch batch_;
  Scalar d1_;
  Scalar d2_;
};

/// Central difference of an arbitrary callable with the library step rule.
template <class F>
double central_difference(const F& f, double x) {
  const double h = kFdStep1 * x;
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

}  // namespace goodwill
