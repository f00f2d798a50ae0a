#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "../support/random_expr.hpp"
#include "sode/expr.hpp"

using namespace sode;

namespace {

double eval_at(const std::string& text, std::vector<double> x, std::vector<double> y) {
  return evaluate(Expression::parse(text), Binding(std::move(x), std::move(y)));
}

}  // namespace

TEST(ExprParse, EvaluatesSimpleSums) {
  EXPECT_DOUBLE_EQ(eval_at("y1^2 + sin(x1)", {0.0}, {2.0}), 4.0);
  EXPECT_DOUBLE_EQ(eval_at("2*y1*y2/x2", {0.0, 1.0}, {3.0, 5.0}), 30.0);
}

TEST(ExprParse, RejectsSignedExponent) {
  try {
    Expression::parse("y1 ^ -1");
    FAIL() << "expected a syntax error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 5u);
  }
  EXPECT_DOUBLE_EQ(eval_at("y1 ^ (-1)", {0.0}, {4.0}), 0.25);
}

TEST(ExprParse, PrecedenceAndAssociativity) {
  EXPECT_DOUBLE_EQ(eval_at("2^3^2", {0.0}, {0.0}), 512.0);
  EXPECT_DOUBLE_EQ(eval_at("-2^2", {0.0}, {0.0}), -4.0);
  EXPECT_DOUBLE_EQ(eval_at("8/2/2", {0.0}, {0.0}), 2.0);
  EXPECT_DOUBLE_EQ(eval_at("1 - 2 - 3", {0.0}, {0.0}), -4.0);
  EXPECT_DOUBLE_EQ(eval_at("2*3^2", {0.0}, {0.0}), 18.0);
  EXPECT_DOUBLE_EQ(eval_at("--3", {0.0}, {0.0}), 3.0);
  EXPECT_NEAR(eval_at("pi", {0.0}, {0.0}), std::numbers::pi, 0.0);
  EXPECT_NEAR(eval_at("e", {0.0}, {0.0}), std::numbers::e, 0.0);
  EXPECT_DOUBLE_EQ(eval_at("1.5e2 + 2E-1", {0.0}, {0.0}), 150.2);
}

TEST(ExprParse, SyntaxErrorsCarryOffsets) {
  for (const char* bad : {"", "1 +", "(1", "sin 1", "x0", "x01", "y", "foo(1)", "1 2", "2*", "abs()", "3 $ 4"}) {
    EXPECT_THROW(Expression::parse(bad), ParseError) << bad;
  }
  try {
    Expression::parse("1 + * 2");
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 4u);
    EXPECT_NE(std::string(e.what()).find("at byte 4"), std::string::npos);
  }
}

TEST(ExprParse, DimensionCheck) {
  EXPECT_NO_THROW(Expression::parse("x2 + y2", 2));
  EXPECT_THROW(Expression::parse("x3 + y1", 2), ParseError);
  EXPECT_THROW(Expression::parse("y3", 2), ParseError);
}

TEST(ExprEval, PaperConstantField) {
  EXPECT_NEAR(eval_at("pi*(1+y1^2)", {0.0}, {0.0}), 3.14159265358979, 1e-14);
  EXPECT_DOUBLE_EQ(eval_at("(y1^2+y2^2)/x2^2", {0.0, 2.0}, {2.0, 0.0}), 1.0);
}

TEST(ExprEval, DomainErrorsNameTheSubexpression) {
  try {
    eval_at("1 + log(x1)", {0.0}, {0.0});
    FAIL();
  } catch (const DomainError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("log(x1)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("x=("), std::string::npos) << msg;
  }
  EXPECT_THROW(eval_at("1/x1", {0.0}, {0.0}), DomainError);
  EXPECT_THROW(eval_at("sqrt(x1)", {-1.0}, {0.0}), DomainError);
  EXPECT_THROW(eval_at("x1^0.5", {-1.0}, {0.0}), DomainError);
  EXPECT_THROW(eval_at("exp(x1)", {1000.0}, {0.0}), DomainError);
  EXPECT_THROW(eval_at("x1^y1", {-1.0}, {2.0}), DomainError);
  EXPECT_DOUBLE_EQ(eval_at("x1^3", {-2.0}, {0.0}), -8.0);
}

TEST(ExprEval, UnboundVariableIsReported) {
  const Expression e = Expression::parse("x3");
  EXPECT_THROW(evaluate(e, Binding({1.0}, {1.0})), DomainError);
  EXPECT_THROW(Binding({1.0, 2.0}, {1.0}), ValidationError);
}

TEST(ExprDerivative, FirstPartials) {
  const Binding b({0.0, 1.0}, {3.0, 5.0});
  EXPECT_DOUBLE_EQ(partial(Expression::parse("y1^2"), "y1", Binding({0.0}, {3.0})), 6.0);
  EXPECT_DOUBLE_EQ(partial(Expression::parse("2*y1*y2/x2"), "y1", b), 10.0);
  EXPECT_DOUBLE_EQ(partial(Expression::parse("(y1^2+y2^2)/x2^2"), "x2", Binding({0.0, 1.0}, {1.0, 0.0})), -2.0);
  EXPECT_THROW(partial(Expression::parse("y1"), "z1", b), ValidationError);
}

TEST(ExprDerivative, SecondPartials) {
  const Expression hyp = Expression::parse("(y1^2+y2^2)/x2^2");
  EXPECT_DOUBLE_EQ(second_partial(hyp, "y1", "y1", Binding({0.0, 1.0}, {0.3, 0.7})), 2.0);
  EXPECT_DOUBLE_EQ(second_partial(Expression::parse("y1*y2"), "y1", "y2", Binding({4.0, 2.0}, {-1.0, 9.0})), 1.0);
  EXPECT_DOUBLE_EQ(second_partial(Expression::parse("2*y1*y2/x2"), "x2", "y1", Binding({0.0, 1.0}, {7.0, 1.0})), -2.0);
  EXPECT_DOUBLE_EQ(second_partial(Expression::parse("2*y1*y2/x2"), "y1", "x2", Binding({0.0, 1.0}, {7.0, 1.0})), -2.0);
}

TEST(ExprDerivative, AbsUsesZeroSubgradient) {
  EXPECT_DOUBLE_EQ(partial(Expression::parse("abs(x1)"), "x1", Binding({0.0}, {0.0})), 0.0);
  EXPECT_DOUBLE_EQ(partial(Expression::parse("abs(x1)"), "x1", Binding({-2.0}, {0.0})), -1.0);
}

TEST(ExprProperty, PartialMatchesCentralDifferences) {
  sode::tsup::RandomExpr gen(20240601, 2);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const char* vars[] = {"x1", "x2", "y1", "y2"};
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Expression e = Expression::parse(gen.make(3));
    std::vector<double> x = {u(rng), u(rng)}, y = {u(rng), u(rng)};
    const char* var = vars[trial % 4];
    const double d = partial(e, var, Binding(x, y));
    auto& target = (var[0] == 'x' ? x : y)[var[1] - '1'];
    const double h = 1e-6, keep = target;
    target = keep + h;
    const double fp = evaluate(e, Binding(x, y));
    target = keep - h;
    const double fm = evaluate(e, Binding(x, y));
    const double fd = (fp - fm) / (2 * h);
    EXPECT_NEAR(d, fd, 1e-6 * std::max(1.0, std::abs(d))) << e.str() << " d/d" << var;
    ++checked;
  }
  EXPECT_EQ(checked, 1000);
}

TEST(ExprProperty, SecondPartialsAreSymmetric) {
  sode::tsup::RandomExpr gen(99, 2);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const char* vars[] = {"x1", "x2", "y1", "y2"};
  for (int trial = 0; trial < 300; ++trial) {
    const Expression e = Expression::parse(gen.make(3));
    const Binding b({u(rng), u(rng)}, {u(rng), u(rng)});
    const char* a = vars[trial % 4];
    const char* c = vars[(trial / 4) % 4];
    EXPECT_NEAR(second_partial(e, a, c, b), second_partial(e, c, a, b), 1e-12) << e.str();
  }
}

TEST(ExprProperty, PrintParseRoundTrip) {
  sode::tsup::RandomExpr gen(5, 3);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 500; ++trial) {
    const Expression e = Expression::parse(gen.make(4));
    const Expression back = Expression::parse(e.str());
    EXPECT_TRUE(back.structurally_equal(e)) << e.str() << " vs " << back.str();
    EXPECT_EQ(back.str(), e.str());
    const Binding b({u(rng), u(rng), u(rng)}, {u(rng), u(rng), u(rng)});
    EXPECT_EQ(evaluate(back, b), evaluate(e, b));
  }
  for (const char* s : {"-x1", "-(x1 + 2)", "2^3^2", "(2^3)^2", "-2^2", "x1 - -x2", "1e-3*y1", "abs(-y2)/pi"}) {
    const Expression e = Expression::parse(s);
    EXPECT_TRUE(Expression::parse(e.str()).structurally_equal(e)) << s << " printed " << e.str();
  }
}

TEST(ExprBuild, CompositionMatchesParsing) {
  const Expression built = Expression::number(2.0) * Expression::y(1) * Expression::y(2) / Expression::x(2);
  const Binding b({0.0, 2.0}, {3.0, 5.0});
  EXPECT_DOUBLE_EQ(evaluate(built, b), 15.0);
  EXPECT_TRUE(Expression::parse(built.str()).structurally_equal(built));
  const Expression neg = Expression::number(-0.25);
  EXPECT_TRUE(Expression::parse(neg.str()).structurally_equal(neg));
  EXPECT_EQ(built.max_x_index(), 2);
  EXPECT_EQ(built.max_y_index(), 2);
  EXPECT_TRUE(Expression().is_zero_literal());
}
