#include <gtest/gtest.h>

#include <cmath>

#include "motbounds/perturb.hpp"
#include "motbounds/tree_model.hpp"
#include "support/generators.hpp"

using namespace motbounds;
using motbounds::testing::Rng;
namespace mt = motbounds::testing;

namespace {

CostSpec straddle_basket() {
  return CostSpec{[](double x, double y) { return std::abs(y - x); },
                  [](double y, double z) { return std::abs(z - y); },
                  [](double x, double z) { return std::abs(z - x); }, 0.0};
}

}  // namespace

TEST(TreePrice, QuadraticDeviationIsVarianceIncrement) {
  Rng rng(1);
  for (int t = 0; t < 5; ++t) {
    const auto c = mt::random_chain(rng, 10, 3, 3);
    const auto r = tree_price(c.x, c.y, c.z, 2, straddle_basket(), 0.0);
    EXPECT_NEAR(r.deviation_xy, moment(c.y, 2) - moment(c.x, 2), 1e-9);
    EXPECT_NEAR(r.deviation_yz, moment(c.z, 2) - moment(c.y, 2), 1e-9);
  }
}

TEST(TreePrice, ForcedChainForAnyExponent) {
  const auto one = DiscreteMeasure::dirac(1.0);
  const DiscreteMeasure z({0.0, 2.0}, {0.5, 0.5});
  const CostSpec cost{[](double x, double y) { return x * y; }, [](double y, double z) { return y + z * z; },
                      [](double x, double z) { return x - z; }, 0.0};
  // Unique coupling: (1,1,0) and (1,1,2) with mass 1/2 each.
  const double expected = 0.5 * (1 + 1 + 0.3 * 1) + 0.5 * (1 + 5 + 0.3 * -1);
  for (int p : {1, 2, 3}) {
    EXPECT_NEAR(tree_price(one, one, z, p, cost, 0.3).price, expected, 1e-12);
  }
}

TEST(TreePrice, GluedPlanIsAMartingaleCoupling) {
  Rng rng(2);
  const auto c = mt::random_chain(rng, 10, 4, 3);
  for (int p : {1, 2, 3}) {
    const auto r = tree_price(c.x, c.y, c.z, p, straddle_basket(), 1.0);
    EXPECT_TRUE(check_coupling(r.coupling, c.x, c.y, c.z).ok());
  }
}

TEST(TreePrice, LiesBetweenExactBoundsOnTenAtomChain) {
  Rng rng(3);
  const auto c = mt::scaled_chain(rng, 10, 80.0, 120.0);
  const auto cost = straddle_basket();
  const auto lo = solve_mot3(c.x, c.y, c.z, cost.with_epsilon(1.0), Sense::Minimize).value;
  const auto hi = solve_mot3(c.x, c.y, c.z, cost.with_epsilon(1.0), Sense::Maximize).value;
  for (int p : {1, 2, 3}) {
    const double v = tree_price(c.x, c.y, c.z, p, cost, 1.0).price;
    EXPECT_GE(v, lo - 1e-9 * (1 + std::abs(lo)));
    EXPECT_LE(v, hi + 1e-9 * (1 + std::abs(hi)));
  }
}

TEST(TreePrice, LinearDeviationMatchesLowerTangentAtZero) {
  Rng rng(4);
  const auto cost = straddle_basket();
  for (int t = 0; t < 5; ++t) {
    const auto c = mt::random_chain(rng, 10, 3, 3);
    const auto rep = first_order_bounds(c.x, c.y, c.z, cost, 0.0);
    EXPECT_NEAR(tree_price(c.x, c.y, c.z, 1, cost, 0.0).price, *rep.q_lower, 1e-12);
  }
}

TEST(TreePrice, RejectsUnsupportedExponent) {
  const auto one = DiscreteMeasure::dirac(1.0);
  EXPECT_THROW(tree_price(one, one, one, 4, straddle_basket(), 0.0), InvalidArgument);
  EXPECT_THROW(tree_price(one, one, one, 0, straddle_basket(), 0.0), InvalidArgument);
}
