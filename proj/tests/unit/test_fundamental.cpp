#include <gtest/gtest.h>

#include <boost/math/special_functions/hypergeometric_1F1.hpp>
#include <cmath>
#include <sstream>

#include "fixtures.hpp"
#include "goodwill/fundamental.hpp"

using namespace goodwill;

namespace {

double rel(double a, double b) { return std::abs(a / b - 1.0); }

// Roots of s^2/2 m(m-1) + b m - r = 0 for dX = b X dt + s X dW.
std::pair<double, double> power_roots(double b, double s, double r) {
  const double A = 0.5 * s * s, B = b - 0.5 * s * s;
  const double d = std::sqrt(B * B + 4.0 * A * r);
  return {(-B - d) / (2.0 * A), (-B + d) / (2.0 * A)};
}

DiffusionModel gbm(double b, double s, double r) {
  DiffusionModel m;
  m.b = SmoothFn1D([b](double x) { return b * x; }, [b](double) { return b; }, [](double) { return 0.0; });
  m.sigma = SmoothFn1D([s](double x) { return s * x; }, [s](double) { return s; }, [](double) { return 0.0; });
  m.r = SmoothFn1D::constant(r);
  m.r0 = r;
  return m;
}

}  // namespace

TEST(Fundamental, GbmCanonMatchesPowers) {
  const auto pair = solve_fundamental(fixtures::gbm_canon_model(), fixtures::canon_grid());
  EXPECT_NEAR(pair.C(), 3.0, 1e-10);
  for (double x : fixtures::canon_grid().points()) {
    EXPECT_LT(rel(pair.phi(x), 1.0 / x), 1e-9) << x;
    EXPECT_LT(rel(pair.psi(x), x * x), 1e-9) << x;
    EXPECT_LT(rel(pair.phi1(x), -1.0 / (x * x)), 1e-9) << x;
    EXPECT_LT(rel(pair.psi1(x), 2.0 * x), 1e-9) << x;
    EXPECT_LT(rel(pair.phi2(x), 2.0 / (x * x * x)), 1e-9) << x;
    EXPECT_LT(rel(pair.psi2(x), 2.0), 1e-9) << x;
    EXPECT_NEAR(pair.p_prime(x), 1.0, 1e-12);
  }
}

TEST(Fundamental, GbmWithDriftMatchesPowers) {
  const double b = 0.3, s = 0.5, r = 1.0;
  const auto [mn, mp] = power_roots(b, s, r);
  const auto pair = solve_fundamental(gbm(b, s, r), fixtures::canon_grid());
  for (double x : fixtures::canon_grid().points()) {
    EXPECT_LT(rel(pair.phi(x), std::pow(x, mn)), 1e-8) << x;
    EXPECT_LT(rel(pair.psi(x), std::pow(x, mp)), 1e-8) << x;
    EXPECT_LT(rel(pair.p_prime(x), std::pow(x, -2.0 * b / (s * s))), 1e-10) << x;
  }
  // C = psi'(c) - phi'(c) with p'(c) = 1.
  EXPECT_NEAR(pair.C(), mp - mn, 1e-9);
}

TEST(Fundamental, AttainableOriginIsFlagged) {
  // Constant coefficients on (0, inf): 0 is reached, the pair is not unique.
  DiffusionModel m;
  m.b = SmoothFn1D::constant(0.2);
  m.sigma = SmoothFn1D::constant(0.8);
  m.r = SmoothFn1D::constant(0.5);
  m.r0 = 0.5;
  GridSpec g{0.05, 8.0, 161, Spacing::Logarithmic};
  EXPECT_EQ(feller_diagnostic(m, g).verdict, Verdict::Fail);
}

TEST(Fundamental, CirIncreasingSolutionIsKummerM) {
  // psi(x) = M(r1/alpha, 2 alpha theta / s^2, 2 alpha x / s^2) / M(..., 2 alpha / s^2).
  const double alpha = 1.0, theta = 1.0, s = 1.0, r1 = 0.1;
  const auto pair = solve_fundamental(fixtures::cir_model(alpha, theta, s, r1), fixtures::canon_grid());
  const double a = r1 / alpha, bb = 2.0 * alpha * theta / (s * s), y = 2.0 * alpha / (s * s);
  const double den = boost::math::hypergeometric_1F1(a, bb, y);
  for (double x : fixtures::canon_grid().points()) {
    if (x > 30.0) break;  // 1F1 itself loses digits beyond this
    EXPECT_LT(rel(pair.psi(x), boost::math::hypergeometric_1F1(a, bb, y * x) / den), 1e-8) << x;
  }
}

TEST(Fundamental, ShapeProperties) {
  for (const auto& m : {fixtures::gbm_canon_model(), fixtures::cir_model(1, 1, 1, 0.1), gbm(-0.4, 0.3, 0.2)}) {
    const auto pair = solve_fundamental(m, fixtures::canon_grid());
    EXPECT_NEAR(pair.phi(1.0), 1.0, 1e-12);
    EXPECT_NEAR(pair.psi(1.0), 1.0, 1e-12);
    const auto xs = fixtures::canon_grid().points();
    for (std::size_t i = 1; i < xs.size(); ++i) {
      EXPECT_LT(pair.phi(xs[i]), pair.phi(xs[i - 1]));
      EXPECT_GT(pair.psi(xs[i]), pair.psi(xs[i - 1]));
    }
    const auto chk = check_pair(pair, xs);
    EXPECT_TRUE(chk.signs_ok) << chk.detail;
    EXPECT_TRUE(chk.convex_ok) << chk.detail;
    EXPECT_LT(chk.wronskian_max, 1e-9);
    EXPECT_LT(chk.wronskian2_max, 1e-8);
    EXPECT_LT(chk.residual_max, 1e-8);
  }
}

TEST(Fundamental, TableCoversGridWithMargin) {
  const auto pair = solve_fundamental(fixtures::gbm_canon_model(), fixtures::canon_grid());
  EXPECT_LT(pair.x_lo(), 0.01);
  EXPECT_GT(pair.x_hi(), 100.0);
  EXPECT_TRUE(pair.covers(0.01));
  EXPECT_THROW(pair.phi(-1.0), ConfigError);
  EXPECT_THROW(pair.phi(pair.x_hi() * 4.0), NumericalFailure);
}

TEST(Wronskian, SampledConstantIsReproducible) {
  const auto pair = solve_fundamental(fixtures::gbm_canon_model(), fixtures::canon_grid());
  const auto a = wronskian_constant(pair);
  const auto b = wronskian_constant(pair);
  EXPECT_EQ(a.sample_x, b.sample_x);
  EXPECT_EQ(a.sample_x.size(), 5u);
  EXPECT_NEAR(a.C, 3.0, 1e-10);
  EXPECT_LT(a.max_deviation, 1e-10);
  EXPECT_NE(wronskian_constant(pair, 99).sample_x, a.sample_x);
}

TEST(Tilde, DerivativePairIdentity) {
  // For the canonical fixture phi~ = x^-2 and psi~ = x.
  auto pair = std::make_shared<const FundamentalPair>(solve_fundamental(fixtures::gbm_canon_model(), fixtures::canon_grid()));
  const auto tp = tilde_pair(pair);
  EXPECT_LT(rel(tp.C_tilde(), tp.C_tilde_formula()), 1e-9);
  EXPECT_NEAR(tp.C_tilde(), 3.0, 1e-8);  // psi~'(1) - phi~'(1) = 1 + 2
  for (double x : {0.05, 0.5, 5.0}) {
    EXPECT_LT(rel(tp.phi_tilde(x), 1.0 / (x * x)), 1e-9);
    EXPECT_LT(rel(tp.psi_tilde(x), x), 1e-9);
    const auto s = tp.phi_tilde_all(x);
    EXPECT_LT(rel(s.d1, -2.0 / (x * x * x)), 1e-7);
    EXPECT_LT(rel(s.d2, 6.0 / (x * x * x * x)), 1e-6);
  }
}

TEST(Guard, WarnsWhenRhoBelowFloor) {
  EXPECT_FALSE(verify_counterexample_guard(fixtures::gbm_canon_model(), fixtures::canon_grid()).warning);
  auto m = gbm(0.5, std::sqrt(2.0), 2.0);  // rho = r - b' = 1.5 < r0 = 2
  const auto g = verify_counterexample_guard(m, fixtures::canon_grid());
  EXPECT_TRUE(g.warning);
  EXPECT_NEAR(g.min_rho, 1.5, 1e-14);
}

TEST(Output, PairCsvLayout) {
  const auto pair = solve_fundamental(fixtures::gbm_canon_model(), fixtures::canon_grid());
  std::ostringstream os;
  write_pair_csv(os, pair, {0.5, 1.0, 2.0});
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "x,phi,phi1,phi2,psi,psi1,psi2,p_prime");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 7);
  }
  EXPECT_EQ(rows, 3);
}

TEST(Output, DeterministicTables) {
  const auto a = solve_fundamental(fixtures::cir_model(1, 1, 1, 0.1), fixtures::canon_grid());
  const auto b = solve_fundamental(fixtures::cir_model(1, 1, 1, 0.1), fixtures::canon_grid());
  std::ostringstream sa, sb;
  write_pair_csv(sa, a, fixtures::canon_grid().points());
  write_pair_csv(sb, b, fixtures::canon_grid().points());
  EXPECT_EQ(sa.str(), sb.str());
}
