#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "goodwill/expr.hpp"

using namespace goodwill;

namespace {

double at(const std::string& s, double x) { return expr::eval(expr::parse(s), x); }

std::string error_of(const std::string& s) {
  try {
    expr::parse(s);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Expr, Precedence) {
  EXPECT_DOUBLE_EQ(at("1 + 2 * x", 3.0), 7.0);
  EXPECT_DOUBLE_EQ(at("(1 + 2) * x", 3.0), 9.0);
  EXPECT_DOUBLE_EQ(at("-x^2", 3.0), -9.0);
  EXPECT_DOUBLE_EQ(at("2^3^2", 0.0), 512.0);
  EXPECT_DOUBLE_EQ(at("x^-1", 4.0), 0.25);
  EXPECT_DOUBLE_EQ(at("8 / 4 / 2", 0.0), 1.0);
  EXPECT_DOUBLE_EQ(at("x - 1 - 1", 5.0), 3.0);
  EXPECT_DOUBLE_EQ(at("--x", 2.0), 2.0);
}

TEST(Expr, FunctionsAndLiterals) {
  EXPECT_DOUBLE_EQ(at("sqrt(2) * x", 1.0), std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(at("exp(log(x))", 3.5), std::exp(std::log(3.5)));
  EXPECT_DOUBLE_EQ(at("pow(x, 1.5)", 4.0), 8.0);
  EXPECT_DOUBLE_EQ(at("1e-2 * x", 3.0), 0.03);
  EXPECT_DOUBLE_EQ(at(".5", 0.0), 0.5);
  EXPECT_NEAR(at("pi", 0.0), 3.14159265358979, 1e-14);
}

TEST(Expr, ErrorsCarryColumn) {
  EXPECT_NE(error_of("x +").find("unexpected end of input at column 4"), std::string::npos);
  EXPECT_NE(error_of("2 * y").find("unknown name 'y' at column 5"), std::string::npos);
  EXPECT_NE(error_of("(x + 1").find("expected ')'"), std::string::npos);
  EXPECT_NE(error_of("x 2").find("unexpected '2' at column 3"), std::string::npos);
  EXPECT_NE(error_of("pow(x)").find("pow needs two arguments"), std::string::npos);
  EXPECT_NE(error_of("sqrt x").find("expected '(' after sqrt"), std::string::npos);
  EXPECT_NE(error_of("x $ 1").find("unexpected '$'"), std::string::npos);
}

TEST(Expr, DerivativesMatchFiniteDifferences) {
  for (const char* s : {"sqrt(x)", "x^2 - 3*x + 1", "exp(-x / 2) * log(1 + x)", "pow(x, 0.3) / (1 + x^2)",
                        "2^x", "x^x", "1 - x"}) {
    const auto f = expr::to_smooth(s);
    for (double x : {0.3, 1.0, 2.7}) {
      const double h = 1e-5 * x;
      const double fd1 = (f(x + h) - f(x - h)) / (2.0 * h);
      const double fd2 = (f.d1(x + h) - f.d1(x - h)) / (2.0 * h);
      EXPECT_NEAR(f.d1(x), fd1, 1e-7 * (1.0 + std::abs(fd1))) << s << " at " << x;
      EXPECT_NEAR(f.d2(x), fd2, 1e-6 * (1.0 + std::abs(fd2))) << s << " at " << x;
    }
  }
}

TEST(Expr, ExactDerivativesOfPowers) {
  const auto f = expr::to_smooth("sqrt(x)");
  EXPECT_DOUBLE_EQ(f.d1(4.0), 0.25);
  EXPECT_DOUBLE_EQ(f.d2(4.0), -1.0 / 32.0);
  const auto g = expr::to_smooth("3 * x");
  EXPECT_EQ(g.d1(1.7), 3.0);
  EXPECT_EQ(g.d2(1.7), 0.0);
}

TEST(Expr, ConstantFolding) {
  EXPECT_EQ(expr::parse("2 * 3 + 1")->op, expr::Op::Const);
  EXPECT_EQ(expr::derivative(expr::parse("5"))->op, expr::Op::Const);
}
