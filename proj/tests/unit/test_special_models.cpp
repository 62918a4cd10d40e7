#include <gtest/gtest.h>

#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/hypergeometric_1F1.hpp>
#include <cmath>

#include "fixtures.hpp"
#include "goodwill/free_boundary.hpp"
#include "goodwill/special_models.hpp"

using namespace goodwill;

namespace {

double rel(double a, double b) { return std::abs(a / b - 1.0); }

// Connection formula, valid for non-integer b.
double u_reference(double a, double b, double x) {
  using boost::math::hypergeometric_1F1;
  using boost::math::tgamma;
  return tgamma(1.0 - b) / tgamma(a - b + 1.0) * hypergeometric_1F1(a, b, x) +
         tgamma(b - 1.0) / tgamma(a) * std::pow(x, 1.0 - b) * hypergeometric_1F1(a - b + 1.0, 2.0 - b, x);
}

GridSpec cir_grid() { return {1e-3, 60.0, 241, Spacing::Logarithmic}; }

}  // namespace

TEST(KummerM, MatchesBoostAcrossSwitch) {
  for (double a : {0.1, 0.75, 2.5})
    for (double x : {0.5, 10.0, 49.0, 51.0, 60.0, 200.0})
      EXPECT_LT(rel(kummer_m(a, 2.0, x), boost::math::hypergeometric_1F1(a, 2.0, x)), 1e-10) << a << " " << x;
  const double lo = kummer_m(0.1, 2.0, kKummerMSwitch * (1.0 - 1e-12));
  const double hi = kummer_m(0.1, 2.0, kKummerMSwitch * (1.0 + 1e-12));
  EXPECT_LT(rel(lo, hi), 1e-10);
}

TEST(KummerM, ScaledAvoidsOverflow) {
  const auto v = kummer_m_scaled(0.1, 2.0, 5000.0);
  EXPECT_TRUE(std::isfinite(v.log_abs()));
  // M ~ Gamma(b)/Gamma(a) e^x x^(a-b).
  const double lead = std::lgamma(2.0) - std::lgamma(0.1) + 5000.0 + (0.1 - 2.0) * std::log(5000.0);
  EXPECT_NEAR(v.log_abs(), lead, 1e-3);
  const auto m = kummer_m_scaled(0.1, 2.0, 600.0);
  EXPECT_NEAR(m.log_abs(), std::log(boost::math::hypergeometric_1F1(0.1, 2.0, 600.0)), 1e-11);
}

TEST(KummerU, PowerSpecialCase) {
  // U(a, a + 1, x) = x^-a.
  for (double a : {0.3, 1.7})
    for (double x : {0.05, 1.0, 12.0, 29.0, 31.0, 80.0})
      EXPECT_LT(rel(kummer_u(a, a + 1.0, x), std::pow(x, -a)), 1e-10) << a << " " << x;
}

TEST(KummerU, ConnectionFormula) {
  for (double a : {0.1, 1.1})
    for (double x : {0.1, 0.7, 2.0, 6.0}) EXPECT_LT(rel(kummer_u(a, 2.3, x), u_reference(a, 2.3, x)), 1e-9) << a << " " << x;
}

TEST(KummerU, SolvesKummerEquation) {
  // x U'' + (b - x) U' - a U = 0 with U' = -a U(a+1, b+1), U'' = a(a+1) U(a+2, b+2).
  const double a = 0.1, b = 2.0;
  for (double x : {0.1, 1.0, 10.0, 29.9, 30.1, 60.0}) {
    const double u = kummer_u(a, b, x);
    const double u1 = -a * kummer_u(a + 1, b + 1, x);
    const double u2 = a * (a + 1) * kummer_u(a + 2, b + 2, x);
    EXPECT_LT(std::abs(x * u2 + (b - x) * u1 - a * u), 1e-9 * (std::abs(a * u) + std::abs(x * u1))) << x;
  }
  const double lo = kummer_u(1.1, 3.0, kKummerUSwitch * (1.0 - 1e-12));
  const double hi = kummer_u(1.1, 3.0, kKummerUSwitch * (1.0 + 1e-12));
  EXPECT_LT(rel(lo, hi), 1e-9);
  EXPECT_THROW(kummer_u(-0.5, 2.0, 1.0), ConfigError);
  EXPECT_THROW(kummer_u(0.5, 2.0, 0.0), ConfigError);
}

TEST(Cir, ClosedFormsMatchGenericPair) {
  const CirParams c;
  const auto cf = cir_closed_forms(c);
  const auto pair = solve_fundamental(cir_model(c), fixtures::canon_grid());
  for (double x : {0.01, 0.05, 0.5, 1.0, 3.0, 10.0, 25.0}) {
    EXPECT_LT(rel(cf.phi(x), pair.phi(x)), 1e-8) << x;
    EXPECT_LT(rel(cf.psi(x), pair.psi(x)), 1e-8) << x;
    EXPECT_LT(rel(cf.phi.d1(x), pair.phi1(x)), 1e-7) << x;
    EXPECT_LT(rel(cf.psi.d1(x), pair.psi1(x)), 1e-7) << x;
    EXPECT_LT(rel(cf.p_prime(x), pair.p_prime(x)), 1e-10) << x;
  }
}

TEST(Cir, DefaultParametersHaveNoBoundary) {
  const CirParams c;
  EXPECT_NEAR(c.x_star(), 1.0 / (4.0 * 1.1 * 1.1), 1e-15);
  EXPECT_THROW(cir_boundary(c), AssumptionViolation);
  const auto out = solve(make_cir_problem(c), cir_grid());
  ASSERT_TRUE(out.solution);
  EXPECT_EQ(out.solution->regime(), Regime::CaseI);
  // Both representations of g agree on the sign near zero.
  EXPECT_GT(cir_g(c, 1e-4), 0.0);
}

TEST(Cir, KummerAndGenericBoundariesAgree) {
  for (double lambda : {1.5, 2.0, 3.0}) {
    CirParams c;
    c.lambda = lambda;
    const double ak = cir_boundary(c);
    const auto out = solve(make_cir_problem(c), cir_grid());
    ASSERT_TRUE(out.solution);
    ASSERT_EQ(out.solution->regime(), Regime::CaseII) << lambda;
    EXPECT_LT(rel(out.solution->a(), ak), 1e-6) << lambda;
    EXPECT_LT(ak, c.x_star());
  }
}

TEST(Cir, GClosedFormMatchesGFunction) {
  CirParams c;
  c.lambda = 2.0;
  const auto out = solve(make_cir_problem(c), cir_grid());
  const GFunction g(out.rq);
  for (double x : {0.01, 0.1, 0.37, 2.0, 10.0}) EXPECT_NEAR(cir_g(c, x), g(x), 1e-7 * std::abs(g(x)) + 1e-12) << x;
}

TEST(Gbm, ExponentsAndBoundary) {
  const GbmParams canon;
  const auto e = gbm_exponents(canon);
  EXPECT_NEAR(e.m, -1.0, 1e-15);
  EXPECT_NEAR(e.n, 2.0, 1e-15);
  EXPECT_NEAR(gbm_boundary(canon), 1.0 / 36.0, 1e-16);
  GbmParams p{0.05, 0.3, 0.1, 2.0, 0.5, 0.3};
  const auto f = gbm_exponents(p);
  for (double l : {f.m, f.n}) EXPECT_NEAR(0.045 * l * l + 0.005 * l - 0.1, 0.0, 1e-15);
  const auto out = solve(make_gbm_problem(canon), fixtures::canon_grid());
  EXPECT_LT(rel(out.solution->a(), 1.0 / 36.0), 1e-10);
  const auto cf = gbm_closed_forms(canon);
  EXPECT_NEAR(cf.phi(4.0), 0.25, 1e-15);
  EXPECT_NEAR(cf.psi.d1(3.0), 6.0, 1e-14);
  EXPECT_NEAR(cf.p_prime(7.0), 1.0, 1e-15);
}

TEST(Params, Validation) {
  GbmParams g;
  g.nu = 1.0;
  EXPECT_THROW(g.validate(), ConfigError);
  g = GbmParams{};
  g.b_rate = 2.5;
  EXPECT_THROW(gbm_model(g), ConfigError);
  CirParams c;
  c.theta = 0.1;  // 2 alpha theta < sigma^2
  EXPECT_THROW(cir_model(c), ConfigError);
  c = CirParams{};
  c.sigma_cir = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}
