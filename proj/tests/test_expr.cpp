#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "neoc/expr.hpp"

using namespace neoc;

TEST(Parse, SumOfPowerAndCall) {
  const Expr e = parse("x1^2 + sin(x1)");
  ASSERT_EQ(e.op(), Op::add);
  EXPECT_EQ(e.lhs().op(), Op::pow);
  EXPECT_EQ(e.lhs().lhs().name(), "x1");
  EXPECT_EQ(e.lhs().rhs().value(), 2.0);
  EXPECT_EQ(e.rhs().op(), Op::sin);
  EXPECT_EQ(e.rhs().arg().name(), "x1");
}

TEST(Parse, UnaryMinusBindsLooserThanProduct) {
  const Expr e = parse("-alpha*x");
  ASSERT_EQ(e.op(), Op::neg);
  ASSERT_EQ(e.arg().op(), Op::mul);
  EXPECT_EQ(e.arg().lhs().name(), "alpha");
  EXPECT_EQ(e.arg().rhs().name(), "x");
}

TEST(Parse, PowerIsRightAssociativeAndAboveNegation) {
  Bindings b{{"x", 2.0}};
  EXPECT_DOUBLE_EQ(eval(parse("2^3^2"), b), 512.0);
  EXPECT_DOUBLE_EQ(eval(parse("-x^2"), b), -4.0);
  EXPECT_DOUBLE_EQ(eval(parse("x**3"), b), 8.0);
  EXPECT_DOUBLE_EQ(eval(parse("8/2/2"), b), 2.0);
  EXPECT_DOUBLE_EQ(eval(parse("1e-1*x"), b), 0.2);
}

TEST(Parse, ReportsOffset) {
  try {
    parse("x**");
    FAIL() << "no error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 3u);
  }
  EXPECT_THROW(parse("sin x"), ParseError);
  EXPECT_THROW(parse("(x+1"), ParseError);
  EXPECT_THROW(parse("foo(x)"), ParseError);
  EXPECT_THROW(parse(""), ParseError);
  EXPECT_THROW(parse("x y"), ParseError);
}

TEST(Eval, Values) {
  EXPECT_DOUBLE_EQ(eval(parse("(1+alpha)*x^2 + x^4"), {{"alpha", 1.0}, {"x", 1.0}}), 3.0);
  EXPECT_EQ(eval(parse("sin(x1)"), {{"x1", 0.0}}), 0.0);
  EXPECT_DOUBLE_EQ(eval(parse("abs(x) * sgn(x)"), {{"x", -3.0}}), -3.0);
  EXPECT_DOUBLE_EQ(eval(parse("exp(log(x))"), {{"x", 2.5}}), 2.5);
}

TEST(Eval, DomainErrors) {
  EXPECT_THROW(eval(parse("sqrt(x)"), {{"x", -1.0}}), DomainError);
  EXPECT_THROW(eval(parse("1/x"), {{"x", 0.0}}), DomainError);
  EXPECT_THROW(eval(parse("log(x)"), {{"x", 0.0}}), DomainError);
  EXPECT_THROW(eval(parse("y"), {{"x", 0.0}}), Error);
}

TEST(Eval, DeterministicAndMatchesCompiled) {
  const Expr e = parse("sin(x)*exp(-y^2)/(1+x^2) - cos(x*y)^3 + sqrt(2+x)");
  const std::vector<std::string> slots{"x", "y"};
  const CompiledExpr c(e, slots);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int i = 0; i < 100; ++i) {
    const double xy[2] = {u(rng), u(rng)};
    const Bindings b{{"x", xy[0]}, {"y", xy[1]}};
    const double v = eval(e, b);
    EXPECT_EQ(v, eval(e, b));
    EXPECT_NEAR(c(xy), v, 1e-14 * (1 + std::abs(v)));
  }
}

TEST(Diff, PowerRuleAtRandomPoints) {
  const Expr d = diff(parse("alpha*x^2"), "x");
  const Expr ref = parse("2*alpha*x");
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int i = 0; i < 20; ++i) {
    const Bindings b{{"alpha", u(rng)}, {"x", u(rng)}};
    EXPECT_NEAR(eval(d, b), eval(ref, b), 1e-12);
  }
}

TEST(Diff, ParameterDerivativeOfScalarCost) {
  const Expr d = diff(parse("(1+alpha)*x^2 + x^4"), "alpha");
  EXPECT_EQ(to_string(d), "x^2");
}

TEST(Diff, SinAtZero) { EXPECT_EQ(eval(diff(parse("sin(x1)"), "x1"), {{"x1", 0.0}}), 1.0); }

TEST(Diff, MatchesCentralDifferences) {
  const char* cases[] = {"sin(x)*exp(-y^2)/(1+x^2)", "sqrt(2+x^2*y)", "x^y", "log(1+x^2)*cos(3*y)",
                         "(x-y)^3/(2+y^2)",          "sin(0.3*x)/cos(0.3*x)-y",  "abs(x)*x"};
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.2, 1.2);
  for (const char* text : cases) {
    const Expr e = parse(text);
    for (const char* s : {"x", "y"}) {
      const Expr d = diff(e, s);
      for (int i = 0; i < 10; ++i) {
        Bindings b{{"x", u(rng)}, {"y", u(rng)}};
        const double h = 1e-5, v0 = b.at(s);
        b[s] = v0 + h;
        const double fp = eval(e, b);
        b[s] = v0 - h;
        const double fm = eval(e, b);
        b[s] = v0;
        const double fd = (fp - fm) / (2 * h);
        EXPECT_NEAR(eval(d, b), fd, 1e-7 * (1 + std::abs(fd))) << text << " d/d" << s;
      }
    }
  }
}

TEST(Diff, KinkClearsSmoothness) {
  EXPECT_TRUE(diff(parse("x^3 + sin(x)"), "x").smooth());
  EXPECT_FALSE(diff(parse("abs(x)"), "x").smooth());
  EXPECT_TRUE(diff(parse("abs(y) + x"), "x").smooth());
}

TEST(Simplify, Identities) {
  EXPECT_EQ(to_string(simplify(parse("0*x + y"))), "y");
  EXPECT_EQ(to_string(simplify(parse("x^1"))), "x");
  EXPECT_EQ(to_string(simplify(parse("2*3"))), "6");
  EXPECT_EQ(to_string(simplify(parse("1*x - 0"))), "x");
  EXPECT_EQ(to_string(simplify(parse("x^0"))), "1");
}

TEST(Simplify, PreservesValue) {
  const char* cases[] = {"0*x + y*1 - (2-2)*y", "(x+0)^1*(3*2)/1", "-(-(x)) + 0/y", "x^2*1 + 0*sin(y) + 2^2"};
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.5, 2);
  for (const char* text : cases) {
    const Expr e = parse(text), s = simplify(e);
    for (int i = 0; i < 10; ++i) {
      const Bindings b{{"x", u(rng)}, {"y", u(rng)}};
      EXPECT_NEAR(eval(s, b), eval(e, b), 1e-13) << text;
    }
  }
}

TEST(Print, RoundTrip) {
  const char* cases[] = {"x1^2 + sin(x1)", "-alpha*x",  "(a-b)-(c-d)", "a/(b*c)",   "(-x)^2",      "-x^2",
                         "2^3^2",          "(2^3)^2",   "a-(-b)",      "1e-07*x",   "sqrt(abs(x))", "-(a+b)*c",
                         "(1+alpha)*x1^2 + x1^4",         "x/(y/z)",     "a*(b/c)"};
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.5, 2);
  for (const char* text : cases) {
    const Expr e = parse(text);
    const std::string s = to_string(e);
    const Expr back = parse(s);
    EXPECT_TRUE(equal(e, back)) << text << " -> " << s;
    EXPECT_EQ(to_string(back), s);
    Bindings b;
    for (const auto& sym : symbols(e)) b[sym] = u(rng);
    EXPECT_EQ(eval(back, b), eval(e, b)) << text;
  }
}

TEST(Substitute, ReplacesSymbol) {
  const Expr e = substitute(parse("x^2 + y"), "x", parse("y+1"));
  EXPECT_DOUBLE_EQ(eval(e, {{"y", 2.0}}), 11.0);
  EXPECT_FALSE(depends_on(e, "x"));
}
