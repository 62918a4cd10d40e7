#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fixtures.hpp"
#include "goodwill/free_boundary.hpp"

using namespace goodwill;

namespace {

double rel(double a, double b) { return std::abs(a / b - 1.0); }

struct Gbm {
  double b, s, r1, lambda, kappa, nu;

  ControlProblem problem() const {
    ControlProblem p;
    const double bb = b, ss = s, l = lambda, v = nu, k = kappa;
    p.model.b = SmoothFn1D([bb](double x) { return bb * x; }, [bb](double) { return bb; }, [](double) { return 0.0; });
    p.model.sigma =
        SmoothFn1D([ss](double x) { return ss * x; }, [ss](double) { return ss; }, [](double) { return 0.0; });
    p.model.r = SmoothFn1D::constant(r1);
    p.model.r0 = std::min(r1, r1 - b);
    p.h = SmoothFn1D([l, v](double x) { return l * std::pow(x, v); },
                     [l, v](double x) { return l * v * std::pow(x, v - 1.0); },
                     [l, v](double x) { return l * v * (v - 1.0) * std::pow(x, v - 2.0); });
    p.k = SmoothFn1D::constant(k);
    p.big_k = SmoothFn1D([k](double x) { return k * x; }, [k](double) { return k; });
    return p;
  }

  // phi = x^m, psi = x^n with m < 0 < n.
  std::pair<double, double> exponents() const {
    const double A = 0.5 * s * s, B = b - 0.5 * s * s;
    const double d = std::sqrt(B * B + 4.0 * A * r1);
    return {(-B - d) / (2.0 * A), (-B + d) / (2.0 * A)};
  }

  double boundary() const {
    const double n = exponents().second;
    return std::pow(lambda * nu * (n - 1.0) / (kappa * (r1 - b) * (n - nu)), 1.0 / (1.0 - nu));
  }

  // R_h = lambda x^nu / D.
  double D() const { return r1 - b * nu - 0.5 * s * s * nu * (nu - 1.0); }

  double coefficient() const {
    const double a = boundary(), m = exponents().first;
    return (kappa - lambda * nu * std::pow(a, nu - 1.0) / D()) / (m * std::pow(a, m - 1.0));
  }

  // The closed form of g, including the 1/r1 of its definition.
  double g(double x) const {
    const auto [m, n] = exponents();
    return (m * lambda * nu / (n - nu) * std::pow(x, nu - n) - m * kappa * (r1 - b) / (n - 1.0) * std::pow(x, 1.0 - n)) /
           r1;
  }
};

const Gbm kFamily[] = {
    {0.0, std::sqrt(2.0), 2.0, 1.0, 1.0, 0.5},
    {0.05, 0.3, 0.1, 2.0, 0.5, 0.3},
    {-0.1, 0.6, 0.5, 1.0, 3.0, 0.7},
};

}  // namespace

TEST(FreeBoundary, CanonClosedForm) {
  const auto out = solve(fixtures::gbm_canon(), fixtures::canon_grid());
  ASSERT_TRUE(out.solution);
  const auto& s = *out.solution;
  EXPECT_EQ(s.regime(), Regime::CaseII);
  EXPECT_LT(rel(s.a(), 1.0 / 36.0), 1e-10);
  EXPECT_LT(rel(s.A(), 1.0 / 3888.0), 1e-8);
  EXPECT_LT(s.coefficient().deviation, 1e-6);
  EXPECT_NEAR(s.x_star(), 1.0 / 16.0, 1e-15);
  EXPECT_NEAR(s.w(1.0), 4.0 / 9.0 + 1.0 / 3888.0, 1e-10);
  EXPECT_NEAR(s.w(s.a()), 1.0 / 12.0, 1e-11);
  // Below a the value is w(a) minus the cost of jumping up.
  EXPECT_NEAR(s.w(0.02), 1.0 / 12.0 - (1.0 / 36.0 - 0.02), 1e-11);
  EXPECT_NEAR(s.w1(0.015), 1.0, 1e-14);
}

TEST(FreeBoundary, GbmFamilyMatchesClosedForms) {
  for (const auto& f : kFamily) {
    const auto out = solve(f.problem(), fixtures::canon_grid());
    for (const auto& d : out.diagnostics)
      if (d.verdict == Verdict::Fail) ADD_FAILURE() << d.name << ": " << d.detail;
    ASSERT_TRUE(out.solution);
    const auto& s = *out.solution;
    ASSERT_EQ(s.regime(), Regime::CaseII);
    EXPECT_LT(rel(s.a(), f.boundary()), 1e-8) << f.b << " " << f.s;
    EXPECT_LT(rel(s.A(), f.coefficient()), 1e-7) << f.b << " " << f.s;
    EXPECT_EQ(verify_hjb(s, fixtures::canon_grid().points()).verdict, Verdict::Pass);
  }
}

TEST(GFunction, MatchesClosedFormAndDirectQuadrature) {
  for (const auto& f : kFamily) {
    const auto p = f.problem();
    const auto out = solve(p, fixtures::canon_grid());
    const GFunction g(out.rq);
    for (double x : {0.012, 0.05, 0.4, 3.0, 30.0}) {
      const double ref = f.g(x);
      EXPECT_NEAR(g(x), ref, 1e-8 * std::abs(ref) + 1e-14) << x;
      EXPECT_NEAR(g_func(p, *out.pair, x), ref, 1e-8 * std::abs(ref) + 1e-14) << x;
      EXPECT_EQ(std::signbit(g.scaled(x)), std::signbit(g(x)));
    }
    // g' = -D_rQ phi'/(r p') by central difference.
    const double x = 0.3, h = 1e-5;
    EXPECT_NEAR(g.d1(x), (g(x + h) - g(x - h)) / (2.0 * h), 1e-6 * std::abs(g.d1(x)));
  }
}

TEST(CaseSelector, NoActionIsCaseI) {
  const auto out = solve(fixtures::no_action(), fixtures::canon_grid());
  EXPECT_EQ(out.solution->regime(), Regime::CaseI);
  EXPECT_EQ(out.decision.clause, "x* = 0");
  EXPECT_TRUE(std::isnan(out.solution->a()));
  EXPECT_EQ(out.solution->w(3.0), 0.0);
}

TEST(CaseSelector, PositiveLimitIsCaseI) {
  // CIR(1, 1, 1), r = 0.1, h = sqrt x, k = 1: D_rQ crosses zero but g(0+) > 0.
  ControlProblem p;
  p.model = fixtures::cir_model(1.0, 1.0, 1.0, 0.1);
  p.h = SmoothFn1D([](double x) { return std::sqrt(x); }, [](double x) { return 0.5 / std::sqrt(x); },
                   [](double x) { return -0.25 / (x * std::sqrt(x)); });
  p.k = SmoothFn1D::constant(1.0);
  p.big_k = SmoothFn1D([](double x) { return x; }, [](double) { return 1.0; });
  GridSpec grid{1e-3, 60.0, 241, Spacing::Logarithmic};
  const auto out = solve(p, grid);
  ASSERT_TRUE(out.solution);
  EXPECT_EQ(out.decision.regime, Regime::CaseI);
  EXPECT_EQ(out.decision.clause, "x* > 0 but lim g(0+) >= 0");
  EXPECT_NEAR(out.decision.x_star, 1.0 / (4.0 * 1.1 * 1.1), 1e-12);
  for (double v : out.decision.probe_g) EXPECT_GT(v, 0.0);
  EXPECT_EQ(verify_hjb(*out.solution, grid.points()).verdict, Verdict::Pass);
}

TEST(Hjb, CaseIInactiveGradientBranch) {
  const auto out = solve(fixtures::no_action(), fixtures::canon_grid());
  const auto rep = verify_hjb(*out.solution, fixtures::canon_grid().points());
  EXPECT_EQ(rep.verdict, Verdict::Pass);
  for (const auto& pt : rep.points) {
    EXPECT_EQ(pt.r1, 0.0);
    EXPECT_EQ(pt.r2, -1.0);
  }
}

TEST(Hjb, PerturbedBoundaryFails) {
  for (double eps : {0.1, -0.1}) {
    SolveOptions opt;
    opt.perturb_a = eps;
    const auto out = solve(fixtures::gbm_canon(), fixtures::canon_grid(), opt);
    const auto rep = verify_hjb(*out.solution, fixtures::canon_grid().points());
    EXPECT_EQ(rep.verdict, Verdict::Fail) << eps;
    EXPECT_FALSE(rep.failures.empty());
    EXPECT_GT(rep.pasting2, 1e-3);
  }
}

TEST(Hjb, CanonResidualsAndPasting) {
  const auto out = solve(fixtures::gbm_canon(), fixtures::canon_grid());
  const auto rep = verify_hjb(*out.solution, fixtures::canon_grid().points());
  EXPECT_EQ(rep.verdict, Verdict::Pass);
  EXPECT_LT(rep.residual_max, 1e-9);
  EXPECT_LT(rep.pasting1, 1e-10);
  EXPECT_LT(rep.pasting2, 1e-8);
  EXPECT_LT(rep.w2_fd_max, 1e-4);
  EXPECT_GT(rep.w_min, 0.0);
}

TEST(Solve, FailedDiagnosticStopsPipeline) {
  auto p = fixtures::gbm_canon();
  p.model.r0 = 5.0;
  const auto out = solve(p, fixtures::canon_grid());
  EXPECT_FALSE(out.solution);
  EXPECT_TRUE(any_failed(out.diagnostics));
  EXPECT_FALSE(out.pair);
}

TEST(Solve, ComparativeStatics) {
  // a increases with lambda and decreases with kappa.
  double prev = 0.0;
  for (double lambda : {0.5, 1.0, 2.0}) {
    Gbm f = kFamily[0];
    f.lambda = lambda;
    const double a = solve(f.problem(), fixtures::canon_grid()).solution->a();
    EXPECT_GT(a, prev);
    prev = a;
  }
  prev = 1e9;
  for (double kappa : {0.5, 1.0, 2.0}) {
    Gbm f = kFamily[0];
    f.kappa = kappa;
    const double a = solve(f.problem(), fixtures::canon_grid()).solution->a();
    EXPECT_LT(a, prev);
    prev = a;
  }
}

TEST(Output, SummaryJson) {
  const auto two = solve(fixtures::gbm_canon(), fixtures::canon_grid());
  const auto j2 = summary_json(*two.solution, verify_hjb(*two.solution, fixtures::canon_grid().points()));
  EXPECT_EQ(j2["schema_version"], kSchemaVersion);
  EXPECT_EQ(j2["regime"], "CaseII");
  EXPECT_NEAR(j2["a"].get<double>(), 1.0 / 36.0, 1e-12);
  EXPECT_NEAR(j2["A"].get<double>(), 1.0 / 3888.0, 1e-12);
  const auto one = solve(fixtures::no_action(), fixtures::canon_grid());
  const auto j1 = summary_json(*one.solution, verify_hjb(*one.solution, fixtures::canon_grid().points()));
  EXPECT_EQ(j1["regime"], "CaseI");
  EXPECT_FALSE(j1.contains("a"));
  EXPECT_FALSE(j1.contains("A"));
}

TEST(Output, SolutionCsv) {
  const auto out = solve(fixtures::gbm_canon(), fixtures::canon_grid());
  const auto rep = verify_hjb(*out.solution, fixtures::canon_grid().points());
  std::ostringstream a, b;
  write_solution_csv(a, *out.solution, rep);
  write_solution_csv(b, *out.solution, rep);
  const std::string text = a.str();
  EXPECT_EQ(text, b.str());
  EXPECT_EQ(text.substr(0, text.find('\n')), "x,w,w1,w2,hjb_r1,hjb_r2");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 202);
}
