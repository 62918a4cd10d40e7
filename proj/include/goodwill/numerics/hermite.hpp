#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

namespace goodwill {

// Quintic Hermite interpolation on a uniform knot sequence t_i = t0 + i*dt,
// from values, first and second derivatives at the knots. C2 across knots.
class QuinticTable {
 public:
  struct Sample {
    double value, d1, d2;
  };

  QuinticTable() = default;
  QuinticTable(double t0, double dt, std::vector<double> y, std::vector<double> dy,
               std::vector<double> ddy)
      : t0_(t0), dt_(dt), y_(std::move(y)), dy_(std::move(dy)), ddy_(std::move(ddy)) {}

  double t_min() const { return t0_; }
  double t_max() const { return t0_ + dt_ * static_cast<double>(y_.size() - 1); }
  std::size_t size() const { return y_.size(); }
  double knot(std::size_t i) const { return t0_ + dt_ * static_cast<double>(i); }
  double at_knot(std::size_t i) const { return y_[i]; }
  double d1_at_knot(std::size_t i) const { return dy_[i]; }
  double d2_at_knot(std::size_t i) const { return ddy_[i]; }

  Sample operator()(double t) const {
    const double pos = (t - t0_) / dt_;
    const std::size_t last = y_.size() - 2;
    std::size_t i = pos <= 0.0 ? 0 : std::min(static_cast<std::size_t>(pos), last);
    const double s = pos - static_cast<double>(i);
    const double h = dt_;
    const double c0 = y_[i];
    const double c1 = h * dy_[i];
    const double c2 = 0.5 * h * h * ddy_[i];
    const double d = y_[i + 1] - (c0 + c1 + c2);
    const double e = h * dy_[i + 1] - (c1 + 2.0 * c2);
    const double f = h * h * ddy_[i + 1] - 2.0 * c2;
    const double c3 = 10.0 * d - 4.0 * e + 0.5 * f;
    const double c4 = -15.0 * d + 7.0 * e - f;
    const double c5 = 6.0 * d - 3.0 * e + 0.5 * f;
    const double v = c0 + s * (c1 + s * (c2 + s * (c3 + s * (c4 + s * c5))));
    const double v1 = c1 + s * (2.0 * c2 + s * (3.0 * c3 + s * (4.0 * c4 + s * 5.0 * c5)));
    const double v2 = 2.0 * c2 + s * (6.0 * c3 + s * (12.0 * c4 + s * 20.0 * c5));
    return {v, v1 / h, v2 / (h * h)};
  }

 private:
  double t0_ = 0.0;
  double dt_ = 1.0;
  std::vector<double> y_, dy_, ddy_;
};

}  // namespace goodwill
