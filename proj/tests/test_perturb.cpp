#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "motbounds/perturb.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace motbounds;
using motbounds::testing::Rng;
namespace mt = motbounds::testing;

namespace {

CostSpec third_moment_cross() {
  return CostSpec{[](double x, double y) { return 9 * x * y * y; },
                  [](double y, double z) { return 3 * y * z * z; },
                  [](double x, double z) { return 3 * x * z * z; }, 0.0};
}

CostSpec straddle_basket() {
  return CostSpec{[](double x, double y) { return std::abs(y - x); },
                  [](double y, double z) { return std::abs(z - y); },
                  [](double x, double z) { return std::abs(z - x); }, 0.0};
}

double exact(const mt::Chain& c, const CostSpec& cost, double eps, Sense s) {
  return solve_mot3(c.x, c.y, c.z, cost.with_epsilon(eps), s).value;
}

bool two_period_unique(const mt::Chain& c, const CostSpec& cost, Sense s) {
  const auto a = solve_mot2(c.x, c.y, cost.c1, s);
  const auto b = solve_mot2(c.y, c.z, cost.c2, s);
  return uniqueness_probe(a.lp, a.solution, 12, 3).unique &&
         uniqueness_probe(b.lp, b.solution, 12, 4).unique;
}

// Random chains with generic costs whose two-period optimisers are unique.
std::vector<mt::Chain> unique_instances(Rng& rng, const CostSpec& cost, std::size_t count) {
  std::vector<mt::Chain> out;
  while (out.size() < count) {
    auto c = mt::random_chain(rng, 8, 3, 2);
    if (two_period_unique(c, cost, Sense::Minimize) && two_period_unique(c, cost, Sense::Maximize)) {
      out.push_back(std::move(c));
    }
  }
  return out;
}

CostSpec generic_cost() {
  return CostSpec{[](double x, double y) { return std::sin(x + 0.3 * y * y); },
                  [](double y, double z) { return std::cos(0.7 * y * z); },
                  [](double x, double z) { return x * z * z / 10.0 + std::abs(z - x); }, 0.0};
}

}  // namespace

// --- derivative_at_zero ---------------------------------------------------------

TEST(DerivativeAtZero, ZeroPerturbationGivesZero) {
  Rng rng(1);
  const auto c = mt::random_chain(rng, 8, 3, 2);
  CostSpec cost = straddle_basket();
  cost.c3 = nullptr;
  for (Sense s : {Sense::Minimize, Sense::Maximize}) {
    const auto d = derivative_at_zero(c.x, c.y, c.z, cost, s, {.lexicographic = true});
    EXPECT_EQ(d.decoupled, 0.0);
    EXPECT_NEAR(*d.lexicographic, 0.0, 1e-12);
  }
}

TEST(DerivativeAtZero, PathsAgreeWhenTwoPeriodOptimisersAreUnique) {
  Rng rng(2);
  const auto cost = generic_cost();
  for (const auto& c : unique_instances(rng, cost, 6)) {
    for (Sense s : {Sense::Minimize, Sense::Maximize}) {
      const auto d = derivative_at_zero(c.x, c.y, c.z, cost, s, {.lexicographic = true});
      EXPECT_NEAR(d.decoupled, *d.lexicographic, 1e-6);
    }
  }
}

TEST(DerivativeAtZero, MatchesForwardDifferences) {
  Rng rng(3);
  const auto cost = generic_cost();
  for (const auto& c : unique_instances(rng, cost, 5)) {
    for (Sense s : {Sense::Minimize, Sense::Maximize}) {
      const double d = derivative_at_zero(c.x, c.y, c.z, cost, s).value();
      const double p0 = exact(c, cost, 0.0, s);
      const double scale = 1.0 + std::abs(p0);
      std::vector<double> fd;
      for (double h : {1e-2, 1e-3, 1e-4}) {
        fd.push_back(mt::forward_difference([&](double e) { return exact(c, cost, e, s); }, p0, h));
      }
      EXPECT_NEAR(fd.back(), d, 1e-4 * scale);
      // Slopes of secants from 0 are monotone: nonincreasing for the lower curve.
      for (std::size_t t = 1; t < fd.size(); ++t) {
        if (s == Sense::Minimize) {
          EXPECT_LE(fd[t - 1], fd[t] + 1e-6 * scale);
        } else {
          EXPECT_GE(fd[t - 1], fd[t] - 1e-6 * scale);
        }
      }
    }
  }
}

TEST(DerivativeAtZero, NonUniqueFaceGivesBothOneSidedDerivatives) {
  // c1 = c2 = 0: every martingale coupling is optimal, so the face is the
  // whole feasible set and its extremes are the plain MOT values of c3.
  Rng rng(4);
  const auto c = mt::random_chain(rng, 8, 3, 2);
  const CostSpec cost{nullptr, nullptr, [](double x, double z) { return x * z * z; }, 0.0};
  const auto lifted = cost.perturbation();
  const double lo = solve_mot3(c.x, c.y, c.z, lifted, Sense::Minimize).value;
  const double hi = solve_mot3(c.x, c.y, c.z, lifted, Sense::Maximize).value;
  ASSERT_LT(lo, hi - 1e-6);

  const auto lower = face_derivatives(c.x, c.y, c.z, cost, Sense::Minimize);
  EXPECT_NEAR(lower.right, lo, 1e-8);
  EXPECT_NEAR(lower.left, hi, 1e-8);
  const auto upper = face_derivatives(c.x, c.y, c.z, cost, Sense::Maximize);
  EXPECT_NEAR(upper.right, hi, 1e-8);
  EXPECT_NEAR(upper.left, lo, 1e-8);

  // Right derivative matches forward differences for both senses.
  for (Sense s : {Sense::Minimize, Sense::Maximize}) {
    const double fd = mt::forward_difference(
        [&](double e) { return solve_mot3(c.x, c.y, c.z, cost.with_epsilon(e), s).value; }, 0.0, 1e-3);
    EXPECT_NEAR(fd, s == Sense::Minimize ? lo : hi, 1e-6);
  }
}

TEST(DerivativeAtZero, ProbeFlagsNonUniquenessAndUsesFaceValue) {
  // Zero two-period costs on grids that admit several martingale couplings.
  const mt::Chain c{DiscreteMeasure({1.0, 3.0}, {0.5, 0.5}), DiscreteMeasure({0.0, 1.0, 3.0, 4.0}, {0.25, 0.25, 0.25, 0.25}),
                    DiscreteMeasure({0.0, 1.0, 3.0, 4.0}, {0.25, 0.25, 0.25, 0.25})};
  const CostSpec cost{nullptr, nullptr, [](double x, double z) { return x * z * z; }, 0.0};
  const auto d = derivative_at_zero(c.x, c.y, c.z, cost, Sense::Minimize,
                                    {.probe_uniqueness = true, .probe_trials = 6});
  ASSERT_TRUE(d.xy_unique.has_value());
  EXPECT_FALSE(*d.xy_unique && *d.yz_unique);
  EXPECT_FALSE(d.warnings.empty());
  ASSERT_TRUE(d.lexicographic.has_value());
  EXPECT_EQ(d.value(), *d.lexicographic);
  // The face optimum is never above any decomposition's value.
  EXPECT_LE(*d.lexicographic, d.decoupled + 1e-9);
}

TEST(DerivativeAtZero, MinimumNotAboveMaximumOnSameFace) {
  Rng rng(6);
  const auto cost = straddle_basket();
  for (int t = 0; t < 8; ++t) {
    const auto c = mt::random_chain(rng, 8, 3, 2);
    const auto f = face_derivatives(c.x, c.y, c.z, cost, Sense::Minimize);
    EXPECT_LE(f.right, f.left + 1e-9);
  }
}

TEST(DerivativeAtZero, RejectsChainOutOfOrder) {
  const DiscreteMeasure wide({0.0, 2.0}, {0.5, 0.5});
  const auto one = DiscreteMeasure::dirac(1.0);
  EXPECT_THROW(derivative_at_zero(wide, one, wide, straddle_basket(), Sense::Minimize),
               ConvexOrderViolation);
}

// --- first_order_bounds --------------------------------------------------------------

TEST(FirstOrderBounds, AtZeroEqualsSumOfTwoPeriodOptima) {
  Rng rng(7);
  const auto cost = third_moment_cross();
  for (int t = 0; t < 5; ++t) {
    const auto c = mt::random_chain(rng, 8, 3, 2);
    const auto rep = first_order_bounds(c.x, c.y, c.z, cost, 0.0, {.exact = true});
    const double lo = solve_mot2(c.x, c.y, cost.c1, Sense::Minimize).value +
                      solve_mot2(c.y, c.z, cost.c2, Sense::Minimize).value;
    const double hi = solve_mot2(c.x, c.y, cost.c1, Sense::Maximize).value +
                      solve_mot2(c.y, c.z, cost.c2, Sense::Maximize).value;
    EXPECT_EQ(*rep.q_lower, lo);
    EXPECT_EQ(*rep.q_upper, hi);
    EXPECT_NEAR(*rep.p_lower, lo, 1e-9 * (1 + std::abs(lo)));
    EXPECT_NEAR(*rep.p_upper, hi, 1e-9 * (1 + std::abs(hi)));
  }
}

TEST(FirstOrderBounds, TangentLinesBoundExactValues) {
  Rng rng(8);
  for (const auto& cost : {third_moment_cross(), straddle_basket(), generic_cost()}) {
    for (int t = 0; t < 4; ++t) {
      const auto c = mt::random_chain(rng, 8, 3, 2);
      for (double eps : {0.1, 0.5, 1.0}) {
        const auto rep = first_order_bounds(c.x, c.y, c.z, cost, eps, {.exact = true});
        EXPECT_LE(*rep.p_lower, *rep.q_lower + 1e-7);
        EXPECT_GE(*rep.p_upper, *rep.q_upper - 1e-7);
        EXPECT_LE(*rep.p_lower, *rep.p_upper + 1e-9);
      }
    }
  }
}

TEST(FirstOrderBounds, ThirdMomentCrossOnTenAtomChain) {
  Rng rng(9);
  const auto c = mt::scaled_chain(rng, 10, 80.0, 120.0);
  const auto rep = first_order_bounds(c.x, c.y, c.z, third_moment_cross(), 1.0, {.exact = true});
  EXPECT_LE(*rep.p_lower, *rep.q_lower + 1e-7 * std::abs(*rep.p_lower));
  EXPECT_GE(*rep.p_upper, *rep.q_upper - 1e-7 * std::abs(*rep.p_upper));
  const double gap_l = (*rep.q_lower - *rep.p_lower) / std::abs(*rep.p_lower);
  const double gap_u = (*rep.p_upper - *rep.q_upper) / std::abs(*rep.p_upper);
  RecordProperty("relative_gap_lower", std::to_string(gap_l));
  RecordProperty("relative_gap_upper", std::to_string(gap_u));
  EXPECT_LT(gap_l, 0.02);
  EXPECT_LT(gap_u, 0.02);
}

TEST(FirstOrderBounds, StraddleOnTenAtomChain) {
  Rng rng(10);
  const auto c = mt::scaled_chain(rng, 10, 80.0, 120.0);
  const auto rep = first_order_bounds(c.x, c.y, c.z, straddle_basket(), 1.0, {.exact = true});
  EXPECT_LE(*rep.p_lower, *rep.q_lower + 1e-7 * (1 + std::abs(*rep.p_lower)));
  EXPECT_GE(*rep.p_upper, *rep.q_upper - 1e-7 * (1 + std::abs(*rep.p_upper)));
  EXPECT_LE(*rep.q_lower, *rep.q_upper);
  EXPECT_TRUE(rep.warnings.empty());
}

TEST(FirstOrderBounds, ReportCarriesSupportsCertificatesAndLogs) {
  Rng rng(11);
  const auto c = mt::random_chain(rng, 8, 3, 2);
  const auto cost = straddle_basket();
  const auto rep = first_order_bounds(c.x, c.y, c.z, cost, 0.5, {.exact = true});
  ASSERT_TRUE(rep.lower_detail && rep.upper_detail && rep.exact_lower && rep.exact_upper);
  EXPECT_TRUE(check_certificate(rep.lower_detail->xy.certificate, cost.c1).ok);
  EXPECT_TRUE(check_certificate(rep.upper_detail->yz.certificate, cost.c2).ok);
  EXPECT_TRUE(check_certificate(rep.exact_lower->certificate, cost.with_epsilon(0.5).as_function()).ok);
  EXPECT_EQ(rep.lower_detail->overlap.log.size(), c.y.size());
  EXPECT_TRUE(check_coupling(rep.exact_upper->coupling, c.x, c.y, c.z).ok());
}

TEST(FirstOrderBounds, ForcedChainCollapsesAllBounds) {
  const auto one = DiscreteMeasure::dirac(1.0);
  const DiscreteMeasure z({0.0, 2.0}, {0.5, 0.5});
  const auto rep = first_order_bounds(one, one, z, generic_cost(), 0.7, {.exact = true});
  EXPECT_NEAR(*rep.p_lower, *rep.p_upper, 1e-12);
  EXPECT_NEAR(*rep.q_lower, *rep.p_lower, 1e-12);
  EXPECT_NEAR(*rep.q_upper, *rep.p_upper, 1e-12);
}

TEST(FirstOrderBounds, RejectsNegativeEpsilon) {
  const auto one = DiscreteMeasure::dirac(1.0);
  EXPECT_THROW(first_order_bounds(one, one, one, straddle_basket(), -0.1), InvalidArgument);
}

TEST(FirstOrderBounds, GapShrinksAtLeastLinearly) {
  // Q - P is convex with value 0 at 0, so halving epsilon at least halves it.
  Rng rng(12);
  const auto cost = generic_cost();
  for (const auto& c : unique_instances(rng, cost, 4)) {
    for (Sense s : {Sense::Minimize, Sense::Maximize}) {
      const auto d = derivative_at_zero(c.x, c.y, c.z, cost, s);
      auto gap = [&](double e) {
        return std::abs(d.base_value() + e * d.value() - exact(c, cost, e, s));
      };
      const double g1 = gap(0.1), g2 = gap(0.05), g3 = gap(0.025);
      EXPECT_LE(g2, g1 / 2 + 1e-9);
      EXPECT_LE(g3, g2 / 2 + 1e-9);
    }
  }
}

TEST(FirstOrderBounds, SmallEpsilonOptimisersNearlySolveTwoPeriodProblems) {
  Rng rng(13);
  const auto cost = generic_cost();
  for (int t = 0; t < 5; ++t) {
    const auto c = mt::random_chain(rng, 8, 3, 2);
    const double range = [&] {
      double lo = 1e300, hi = -1e300;
      for (double x : c.x.atoms()) {
        for (double z : c.z.atoms()) {
          lo = std::min(lo, cost.c3(x, z));
          hi = std::max(hi, cost.c3(x, z));
        }
      }
      return hi - lo;
    }();
    const double p1 = solve_mot2(c.x, c.y, cost.c1, Sense::Minimize).value;
    const double p2 = solve_mot2(c.y, c.z, cost.c2, Sense::Minimize).value;
    for (double eps : {0.1, 0.01}) {
      const auto r = solve_mot3(c.x, c.y, c.z, cost.with_epsilon(eps), Sense::Minimize);
      const double b1 = r.coupling.project(Axis::X, Axis::Y).integrate(cost.c1);
      const double b2 = r.coupling.project(Axis::Y, Axis::Z).integrate(cost.c2);
      EXPECT_GE(b1, p1 - 1e-9);
      EXPECT_GE(b2, p2 - 1e-9);
      EXPECT_LE(b1 + b2 - p1 - p2, eps * range + 1e-9);
    }
  }
}

// --- bound_curve ----------------------------------------------------------------------

TEST(BoundCurve, ConstantPerturbationIsAffine) {
  Rng rng(14);
  const auto c = mt::random_chain(rng, 8, 3, 2);
  CostSpec cost = straddle_basket();
  cost.c3 = [](double, double) { return 2.5; };
  const auto curve = bound_curve(c.x, c.y, c.z, cost, {0.0, 0.25, 0.5, 1.0}, Sense::Minimize);
  EXPECT_TRUE(curve.ok());
  EXPECT_NEAR(curve.derivative_at_zero, 2.5, 1e-12);
  for (std::size_t t = 0; t < curve.values.size(); ++t) {
    EXPECT_NEAR(curve.values[t], curve.q_values[t], 1e-9);
  }
}

TEST(BoundCurve, MidpointInequalitiesOnToyInstance) {
  Rng rng(15);
  const auto c = mt::random_chain(rng, 8, 3, 2);
  const auto cost = generic_cost();
  const std::vector<double> grid{0.0, 0.5, 1.0};
  const auto lo = bound_curve(c.x, c.y, c.z, cost, grid, Sense::Minimize);
  const auto hi = bound_curve(c.x, c.y, c.z, cost, grid, Sense::Maximize);
  EXPECT_TRUE(lo.ok());
  EXPECT_TRUE(hi.ok());
  EXPECT_GE(lo.values[1], 0.5 * (lo.values[0] + lo.values[2]) - 1e-9);
  EXPECT_LE(hi.values[1], 0.5 * (hi.values[0] + hi.values[2]) + 1e-9);
  for (std::size_t t = 0; t < grid.size(); ++t) {
    EXPECT_LE(lo.values[t], lo.q_values[t] + 1e-9);
    EXPECT_GE(hi.values[t], hi.q_values[t] - 1e-9);
    EXPECT_LE(lo.values[t], hi.values[t] + 1e-9);
  }
}

TEST(BoundCurve, SecantSlopesDecreaseForLowerCurve) {
  Rng rng(16);
  const auto c = mt::random_chain(rng, 8, 3, 2);
  const auto cost = third_moment_cross();
  const std::vector<double> grid{0.0, 0.05, 0.1, 0.2, 0.4, 0.8, 1.0};
  const auto lo = bound_curve(c.x, c.y, c.z, cost, grid, Sense::Minimize);
  ASSERT_TRUE(lo.ok());
  const double scale = 1 + std::abs(lo.values[0]);
  for (std::size_t t = 2; t < grid.size(); ++t) {
    const double prev = (lo.values[t - 1] - lo.values[0]) / grid[t - 1];
    const double cur = (lo.values[t] - lo.values[0]) / grid[t];
    EXPECT_LE(cur, prev + 1e-7 * scale);
  }
}

TEST(BoundCurve, ValuesMatchSerialSolves) {
  Rng rng(17);
  const auto c = mt::random_chain(rng, 8, 3, 2);
  const auto cost = straddle_basket();
  const std::vector<double> grid{0.0, 0.3, 0.6, 0.9};
  const auto curve = bound_curve(c.x, c.y, c.z, cost, grid, Sense::Maximize);
  for (std::size_t t = 0; t < grid.size(); ++t) {
    EXPECT_EQ(curve.values[t], exact(c, cost, grid[t], Sense::Maximize));
  }
}

TEST(BoundCurve, RejectsBadGrids) {
  const auto one = DiscreteMeasure::dirac(1.0);
  const auto cost = straddle_basket();
  EXPECT_THROW(bound_curve(one, one, one, cost, {0.5, 0.2}, Sense::Minimize), InvalidArgument);
  EXPECT_THROW(bound_curve(one, one, one, cost, {-0.1, 0.2}, Sense::Minimize), InvalidArgument);
  EXPECT_THROW(bound_curve(one, one, one, cost, {0.1, 0.1}, Sense::Minimize), InvalidArgument);
}

TEST(BoundCurve, InvariantCheckFlagsNonConcaveData) {
  BoundCurve curve;
  curve.sense = Sense::Minimize;
  curve.eps_grid = {0.0, 0.5, 1.0};
  curve.values = {0.0, -1.0, 0.0};
  curve.q_values = {0.0, 0.0, 0.0};
  detail::check_curve(curve);
  EXPECT_FALSE(curve.ok());
  EXPECT_EQ(curve.invariant_violations.size(), 1u);
}
