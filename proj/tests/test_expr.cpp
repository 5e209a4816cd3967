#include <cmath>
#include <numbers>

#include "doctest.h"
#include "nhk/errors.hpp"
#include "nhk/expr.hpp"
#include "oracles.hpp"

using namespace nhk;
using namespace nhk::expr;

TEST_CASE("parse constants and identities") {
  Expr zero = parse("0");
  CHECK(zero->op == Op::Const);
  CHECK(zero->value == 0.0);
  CHECK(evaluate(parse("(1+x^2)^(-1/2)"), {{"x", 0.0}}) == doctest::Approx(1.0));
  CHECK(evaluate(parse("2.5e-1 * 4"), {}) == doctest::Approx(1.0));
  CHECK(evaluate(parse("-2^2"), {}) == doctest::Approx(-4.0));
  CHECK(evaluate(parse("2^3^2"), {}) == doctest::Approx(512.0));
  CHECK(evaluate(parse("pi"), {}) == doctest::Approx(std::numbers::pi));
}

TEST_CASE("syntax errors carry the offset") {
  try {
    parse("x +* y");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 3);
  }
  CHECK_THROWS_AS(parse("(x"), ParseError);
  CHECK_THROWS_AS(parse(""), ParseError);
  CHECK_THROWS_AS(parse("sin x"), ParseError);
  CHECK_THROWS_AS(parse("1 2"), ParseError);
}

TEST_CASE("unknown identifiers are reported by name") {
  std::set<std::string> declared = {"x"};
  try {
    parse("x + zeta", &declared);
    FAIL("expected an unknown identifier");
  } catch (const UnknownIdentifierError& e) {
    CHECK(e.name() == "zeta");
  }
  CHECK_THROWS_AS(parse("foo(x)"), UnknownIdentifierError);
  CHECK_NOTHROW(parse("φ + x", nullptr));
}

TEST_CASE("differentiate simple cases") {
  CHECK(to_string(differentiate(parse("x^2"), "x")) == "2*x");
  double v = evaluate(differentiate(parse("tan(φ)"), "φ"), {{"φ", 0.3}});
  CHECK(v == doctest::Approx(1.0 / (std::cos(0.3) * std::cos(0.3))).epsilon(1e-14));
  CHECK(is_const(differentiate(parse("y*3"), "x"), 0.0));
}

TEST_CASE("derivative of the free particle multiplier matches a central difference") {
  Expr f = parse("(1+x^2)^(-1/2)");
  double sym = evaluate(differentiate(f, "x"), {{"x", 1.0}});
  double h = 1e-5;
  double num = (evaluate(f, {{"x", 1.0 + h}}) - evaluate(f, {{"x", 1.0 - h}})) / (2 * h);
  CHECK(std::fabs(sym - num) < 1e-9);
  CHECK(sym == doctest::Approx(-std::pow(2.0, -1.5)));
}

TEST_CASE("evaluation and singularities") {
  CHECK(evaluate(parse("cos(q1)"), {{"q1", 0.0}}) == 1.0);
  CHECK(evaluate(parse("tan(φ)"), {{"φ", std::numbers::pi / 4}}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(evaluate(parse("1/x"), {{"x", 0.0}}), SingularityError);
  CHECK_THROWS_AS(evaluate(parse("log(x)"), {{"x", -1.0}}), SingularityError);
  CHECK_THROWS_AS(evaluate(parse("sqrt(x)"), {{"x", -1.0}}), SingularityError);
  CHECK_THROWS_AS(evaluate(parse("x^(-1)"), {{"x", 0.0}}), SingularityError);
  CHECK_THROWS_AS(evaluate(parse("x+y"), {{"x", 0.0}}), UnboundVariableError);
}

TEST_CASE("compiled programs agree with tree evaluation") {
  Expr e = parse("sin(x)*exp(y) - x^2/(1+y^2) + sec(x)");
  Program p(e, {"x", "y"});
  for (double x : {-0.7, 0.1, 1.2})
    for (double y : {-1.0, 0.5}) CHECK(p(std::vector<double>{x, y}) == evaluate(e, {{"x", x}, {"y", y}}));
  Program q(parse("1/x"), {"x"});
  CHECK_THROWS_AS(q(std::vector<double>{0.0}), SingularityError);
}

TEST_CASE("printing round trips") {
  for (const char* text : {"(1+x^2)^(-1/2)", "-x^2", "x-(y-z)", "x/(y*z)", "(-2)^3", "-(2)", "--x", "x^-y",
                           "2^3^2", "(x^2)^3", "sin(-x)*cos(x+1)", "1e-05*x", "x*-3", "-(x+y)*2"}) {
    Expr e = parse(text);
    std::string once = to_string(e);
    std::string twice = to_string(parse(once));
    CHECK_MESSAGE(once == twice, text);
    for (double x : {0.3, 1.7}) {
      Env env{{"x", x}, {"y", 0.9}, {"z", 1.1}};
      CHECK(evaluate(parse(once), env) == evaluate(e, env));
    }
  }
}

TEST_CASE("print-parse-print is a fixed point on random expressions") {
  oracle::ExprGenerator gen({"x", "y"}, 11);
  for (int i = 0; i < 500; ++i) {
    Expr e = gen.make(4);
    std::string once = to_string(e);
    CHECK(to_string(parse(once)) == once);
  }
}

TEST_CASE("symbolic derivatives agree with finite differences on random expressions") {
  auto sweep = oracle::derivative_sweep(1000, 2024);
  CHECK(sweep.accepted == 1000);
  CHECK(sweep.worst <= 1e-6);
}

TEST_CASE("folding preserves values and removes identities") {
  Expr e = parse("0*x + 1*y + (2+3)");
  Expr f = fold(e);
  CHECK(to_string(f) == "y+5");
  CHECK(evaluate(f, {{"x", 2.0}, {"y", 3.0}}) == evaluate(e, {{"x", 2.0}, {"y", 3.0}}));
}

TEST_CASE("canonical equivalence") {
  CHECK(equivalent(parse("(x+y)^2"), parse("x^2+2*x*y+y^2")));
  CHECK(equivalent(parse("x*cos(p)/2 + x*cos(p)/2"), parse("cos(p)*x")));
  CHECK_FALSE(equivalent(parse("x*y"), parse("x*z")));
  CHECK(equivalent(parse("sin(x+y)"), parse("sin(y+x)")));
  CHECK(equivalent(parse("x/x"), parse("1")));
}

TEST_CASE("substitution and free variables") {
  Expr e = parse("x*y + sin(x)");
  auto vars = free_variables(e);
  CHECK(vars == std::set<std::string>{"x", "y"});
  Expr s = substitute(e, {{"x", parse("2")}});
  CHECK(free_variables(s) == std::set<std::string>{"y"});
  CHECK(evaluate(s, {{"y", 1.0}}) == doctest::Approx(2.0 + std::sin(2.0)));
  CHECK(depends_on(e, "y"));
  CHECK_FALSE(depends_on(e, "z"));
}
