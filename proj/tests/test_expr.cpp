#include <gtest/gtest.h>

#include <cmath>

#include "motbounds/expr.hpp"

using namespace motbounds;

TEST(Expression, Precedence) {
  EXPECT_DOUBLE_EQ(Expression::parse("1 + 2 * 3")(0, 0, 0), 7.0);
  EXPECT_DOUBLE_EQ(Expression::parse("(1 + 2) * 3")(0, 0, 0), 9.0);
  EXPECT_DOUBLE_EQ(Expression::parse("8 / 4 / 2")(0, 0, 0), 1.0);
  EXPECT_DOUBLE_EQ(Expression::parse("10 - 3 - 2")(0, 0, 0), 5.0);
  EXPECT_DOUBLE_EQ(Expression::parse("2 ^ 3 ^ 2")(0, 0, 0), 512.0);
  EXPECT_DOUBLE_EQ(Expression::parse("-x^2")(3, 0, 0), -9.0);
  EXPECT_DOUBLE_EQ(Expression::parse("2^-1")(0, 0, 0), 0.5);
  EXPECT_DOUBLE_EQ(Expression::parse("--x")(4, 0, 0), 4.0);
}

TEST(Expression, VariablesAndFunctions) {
  const auto e = Expression::parse("9*x*y^2 + abs(z - y) - min(x, z) + max(x, 2.5e-1)");
  const double x = 1.5, y = -2.0, z = 0.25;
  EXPECT_DOUBLE_EQ(e(x, y, z), 9 * x * y * y + std::abs(z - y) - std::min(x, z) + std::max(x, 0.25));
  EXPECT_TRUE(e.uses('x'));
  EXPECT_TRUE(e.uses('z'));
  EXPECT_FALSE(Expression::parse("abs(y - x)").uses('z'));
}

TEST(Expression, Numbers) {
  EXPECT_DOUBLE_EQ(Expression::parse(".5")(0, 0, 0), 0.5);
  EXPECT_DOUBLE_EQ(Expression::parse("5.")(0, 0, 0), 5.0);
  EXPECT_DOUBLE_EQ(Expression::parse("1E2")(0, 0, 0), 100.0);
  EXPECT_DOUBLE_EQ(Expression::parse("3e-2*x")(100, 0, 0), 3.0);
}

TEST(Expression, Errors) {
  for (const char* bad : {"", "1 +", "(x", "x)", "foo(x)", "min(x)", "abs x", "2x", "0x1", "1e", ".", "x ** 2",
                          "max(x,,y)", "w"}) {
    EXPECT_THROW(Expression::parse(bad), ParseError) << bad;
  }
}

TEST(Expression, ErrorReportsColumn) {
  try {
    Expression::parse("x + foo");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("column 5"), std::string::npos) << e.what();
  }
}

TEST(PairCostFrom, BindsVariables) {
  const auto c2 = pair_cost_from("3*y*z^2", 'y', 'z');
  EXPECT_DOUBLE_EQ(c2(2.0, 3.0), 54.0);
  const auto c3 = pair_cost_from("abs(z - x)", 'x', 'z');
  EXPECT_DOUBLE_EQ(c3(1.0, 4.0), 3.0);
  EXPECT_THROW(pair_cost_from("x*z", 'x', 'y'), ParseError);
}

TEST(Expression, CopiesShareTree) {
  Expression copy = Expression::parse("x + 1");
  {
    const auto original = Expression::parse("y * 2");
    copy = original;
  }
  EXPECT_DOUBLE_EQ(copy(0, 4, 0), 8.0);
  EXPECT_EQ(copy.text(), "y * 2");
}
