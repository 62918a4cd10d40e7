#pragma once

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>

#include "goodwill/errors.hpp"
#include "goodwill/io.hpp"
#include "goodwill/smooth_fn.hpp"

// A closed arithmetic grammar in one variable x:
//   literals, x, + - * / ^, unary minus, parentheses, exp, log, sqrt, pow(a, b)
// with exact symbolic differentiation.

namespace goodwill::expr {

enum class Op { Const, Var, Add, Sub, Mul, Div, Pow, Neg, Exp, Log, Sqrt };

struct Node;
using Expr = std::shared_ptr<const Node>;

struct Node {
  Op op;
  double value = 0.0;
  Expr a, b;
};

inline Expr constant(double v) { return std::make_shared<const Node>(Node{Op::Const, v, nullptr, nullptr}); }
inline Expr var() { return std::make_shared<const Node>(Node{Op::Var, 0.0, nullptr, nullptr}); }

inline bool is_const(const Expr& e, double v) { return e->op == Op::Const && e->value == v; }
inline bool is_const(const Expr& e) { return e->op == Op::Const; }

double eval(const Expr& e, double x);

// Constructors fold constants and drop neutral elements, which keeps
// derivative trees small.
inline Expr make(Op op, Expr a, Expr b = nullptr) {
  if (is_const(a) && (!b || is_const(b))) {
    auto n = std::make_shared<const Node>(Node{op, 0.0, a, b});
    return constant(eval(n, 0.0));
  }
  switch (op) {
    case Op::Add:
      if (is_const(a, 0.0)) return b;
      if (is_const(b, 0.0)) return a;
      break;
    case Op::Sub:
      if (is_const(b, 0.0)) return a;
      if (is_const(a, 0.0)) return make(Op::Neg, b);
      break;
    case Op::Mul:
      if (is_const(a, 0.0) || is_const(b, 0.0)) return constant(0.0);
      if (is_const(a, 1.0)) return b;
      if (is_const(b, 1.0)) return a;
      break;
    case Op::Div:
      if (is_const(a, 0.0)) return constant(0.0);
      if (is_const(b, 1.0)) return a;
      break;
    case Op::Pow:
      if (is_const(b, 1.0)) return a;
      if (is_const(b, 0.0)) return constant(1.0);
      break;
    case Op::Neg:
      if (a->op == Op::Neg) return a->a;
      break;
    default:
      break;
  }
  return std::make_shared<const Node>(Node{op, 0.0, std::move(a), std::move(b)});
}

inline Expr operator+(Expr a, Expr b) { return make(Op::Add, std::move(a), std::move(b)); }
inline Expr operator-(Expr a, Expr b) { return make(Op::Sub, std::move(a), std::move(b)); }
inline Expr operator*(Expr a, Expr b) { return make(Op::Mul, std::move(a), std::move(b)); }
inline Expr operator/(Expr a, Expr b) { return make(Op::Div, std::move(a), std::move(b)); }
inline Expr operator-(Expr a) { return make(Op::Neg, std::move(a)); }

inline double eval(const Expr& e, double x) {
  switch (e->op) {
    case Op::Const: return e->value;
    case Op::Var: return x;
    case Op::Add: return eval(e->a, x) + eval(e->b, x);
    case Op::Sub: return eval(e->a, x) - eval(e->b, x);
    case Op::Mul: return eval(e->a, x) * eval(e->b, x);
    case Op::Div: return eval(e->a, x) / eval(e->b, x);
    case Op::Pow: return std::pow(eval(e->a, x), eval(e->b, x));
    case Op::Neg: return -eval(e->a, x);
    case Op::Exp: return std::exp(eval(e->a, x));
    case Op::Log: return std::log(eval(e->a, x));
    case Op::Sqrt: return std::sqrt(eval(e->a, x));
  }
  return 0.0;
}

inline Expr derivative(const Expr& e) {
  const Expr& u = e->a;
  const Expr& v = e->b;
  switch (e->op) {
    case Op::Const: return constant(0.0);
    case Op::Var: return constant(1.0);
    case Op::Add: return derivative(u) + derivative(v);
    case Op::Sub: return derivative(u) - derivative(v);
    case Op::Mul: return derivative(u) * v + u * derivative(v);
    case Op::Div: return (derivative(u) * v - u * derivative(v)) / make(Op::Pow, v, constant(2.0));
    case Op::Neg: return -derivative(u);
    case Op::Exp: return e * derivative(u);
    case Op::Log: return derivative(u) / u;
    case Op::Sqrt: return derivative(u) / (constant(2.0) * e);
    case Op::Pow:
      if (is_const(v)) return v * make(Op::Pow, u, constant(v->value - 1.0)) * derivative(u);
      return e * (derivative(v) * make(Op::Log, u) + v * derivative(u) / u);
  }
  return constant(0.0);
}

inline std::string to_string(const Expr& e) {
  auto bin = [&](const char* s) { return "(" + to_string(e->a) + " " + s + " " + to_string(e->b) + ")"; };
  switch (e->op) {
    case Op::Const: return io::num(e->value);
    case Op::Var: return "x";
    case Op::Add: return bin("+");
    case Op::Sub: return bin("-");
    case Op::Mul: return bin("*");
    case Op::Div: return bin("/");
    case Op::Pow: return bin("^");
    case Op::Neg: return "(-" + to_string(e->a) + ")";
    case Op::Exp: return "exp(" + to_string(e->a) + ")";
    case Op::Log: return "log(" + to_string(e->a) + ")";
    case Op::Sqrt: return "sqrt(" + to_string(e->a) + ")";
  }
  return "?";
}

class Parser {
 public:
  explicit Parser(std::string_view src) : s_(src) {}

  Expr parse() {
    Expr e = sum();
    skip();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return e;
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;

  [[noreturn]] void fail(const std::string& what) const {
    std::ostringstream msg;
    msg << "expression \"" << s_ << "\": " << what << " at column " << pos_ + 1;
    throw ConfigError(msg.str());
  }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool eat(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  Expr sum() {
    Expr e = product();
    for (;;) {
      if (eat('+')) e = e + product();
      else if (eat('-')) e = e - product();
      else return e;
    }
  }

  Expr product() {
    Expr e = unary();
    for (;;) {
      if (eat('*')) e = e * unary();
      else if (eat('/')) e = e / unary();
      else return e;
    }
  }

  Expr unary() {
    if (eat('-')) return -unary();
    if (eat('+')) return unary();
    return power();
  }

  // Right-associative, binds tighter than unary minus on its left:
  // -x^2 is -(x^2).
  Expr power() {
    Expr base = primary();
    if (eat('^')) return make(Op::Pow, base, unary());
    return base;
  }

  Expr primary() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    const char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c))) return name();
    if (eat('(')) {
      Expr e = sum();
      if (!eat(')')) fail("expected ')'");
      return e;
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  Expr number() {
    const std::string rest(s_.substr(pos_));
    char* end = nullptr;
    const double v = std::strtod(rest.c_str(), &end);
    if (end == rest.c_str()) fail("bad number");
    pos_ += static_cast<std::size_t>(end - rest.c_str());
    return constant(v);
  }

  Expr name() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
    const std::string id(s_.substr(start, pos_ - start));
    if (id == "x") return var();
    if (id == "pi") return constant(std::numbers::pi);
    Op op;
    if (id == "exp") op = Op::Exp;
    else if (id == "log") op = Op::Log;
    else if (id == "sqrt") op = Op::Sqrt;
    else if (id == "pow") op = Op::Pow;
    else {
      pos_ = start;
      fail("unknown name '" + id + "'");
    }
    if (!eat('(')) fail("expected '(' after " + id);
    Expr a = sum();
    Expr b;
    if (op == Op::Pow) {
      if (!eat(',')) fail("pow needs two arguments");
      b = sum();
    }
    if (!eat(')')) fail("expected ')'");
    return make(op, a, b);
  }
};

inline Expr parse(std::string_view src) { return Parser(src).parse(); }

/// SmoothFn1D with exact first and second derivatives.
inline SmoothFn1D to_smooth(const Expr& e) {
  const Expr d1 = derivative(e);
  const Expr d2 = derivative(d1);
  return SmoothFn1D([e](double x) { return eval(e, x); }, [d1](double x) { return eval(d1, x); },
                    [d2](double x) { return eval(d2, x); });
}

inline SmoothFn1D to_smooth(std::string_view src) { return to_smooth(parse(src)); }

}  // namespace goodwill::expr
