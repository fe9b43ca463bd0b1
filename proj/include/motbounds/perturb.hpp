#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "motbounds/config.hpp"
#include "motbounds/coupling.hpp"
#include "motbounds/errors.hpp"
#include "motbounds/lp.hpp"
#include "motbounds/measure.hpp"
#include "motbounds/mot.hpp"
#include "motbounds/parallel.hpp"
#include "motbounds/structure.hpp"

namespace motbounds {

// --- derivative at zero -----------------------------------------------------

struct DerivativeOptions {
  /// Also optimise c3 over the optimal face of the full epsilon = 0 LP.
  bool lexicographic = false;
  /// Probe the two-period optimisers for uniqueness; when either is not
  /// unique the lexicographic value is computed and used.
  bool probe_uniqueness = false;
  std::size_t probe_trials = 8;
};

struct DerivativeResult {
  Sense sense = Sense::Minimize;
  /// Value through the per-y overlapping-marginals decomposition.
  double decoupled = 0.0;
  /// Optimum of c3 over the optimal face of the full epsilon = 0 problem.
  std::optional<double> lexicographic;
  std::optional<bool> xy_unique;
  std::optional<bool> yz_unique;
  std::vector<std::string> warnings;
  Mot2Result xy;
  Mot2Result yz;
  OverlapResult overlap;

  /// The lexicographic value when available, else the decoupled one.
  double value() const { return lexicographic ? *lexicographic : decoupled; }
  double base_value() const { return xy.value + yz.value; }
};

namespace detail {

inline double face_optimum(const DiscreteMeasure& mx, const DiscreteMeasure& my,
                           const DiscreteMeasure& mz, const CostSpec& cost, Sense sense,
                           Sense secondary_sense, const Config& cfg) {
  const auto base = solve_mot3(mx, my, mz, cost.with_epsilon(0.0), sense, cfg);
  const Eigen::VectorXd sec = mot3_cost_vector(mx, my, mz, cost.perturbation());
  const auto lex = solve_lexicographic(base.lp, base.solution, sec, secondary_sense);
  if (!lex.secondary.optimal()) throw NumericalFailure("optimal-face problem did not solve");
  return lex.secondary.value;
}

}  // namespace detail

/// One-sided derivative at epsilon = 0 of the optimal value of
/// c1 + c2 + epsilon c3, in the direction that keeps the tangent line a
/// bound: the infimum of the c3 integral over epsilon = 0 minimisers (lower
/// bound), or the supremum over maximisers (upper bound).
///
/// The default path solves the two two-period problems and then the
/// overlapping-marginals problem for c3. Both paths agree when the two-period
/// optimisers are unique.
inline DerivativeResult derivative_at_zero(const DiscreteMeasure& mx, const DiscreteMeasure& my,
                                           const DiscreteMeasure& mz, const CostSpec& cost,
                                           Sense sense, const DerivativeOptions& opt = {},
                                           const Config& cfg = {}) {
  DerivativeResult res;
  res.sense = sense;
  detail::require_convex_order(mx, my, "(x, y)", cfg);
  detail::require_convex_order(my, mz, "(y, z)", cfg);
  const PairCost c1 = cost.c1 ? cost.c1 : PairCost([](double, double) { return 0.0; });
  const PairCost c2 = cost.c2 ? cost.c2 : PairCost([](double, double) { return 0.0; });
  const PairCost c3 = cost.c3 ? cost.c3 : PairCost([](double, double) { return 0.0; });
  res.xy = solve_mot2(mx, my, c1, sense, cfg);
  res.yz = solve_mot2(my, mz, c2, sense, cfg);
  res.overlap = solve_overlapping(res.xy.coupling, res.yz.coupling, c3, sense, cfg);
  res.decoupled = res.overlap.value;

  bool need_lex = opt.lexicographic;
  if (opt.probe_uniqueness) {
    res.xy_unique = uniqueness_probe(res.xy.lp, res.xy.solution, opt.probe_trials, cfg.seed).unique;
    res.yz_unique = uniqueness_probe(res.yz.lp, res.yz.solution, opt.probe_trials, cfg.seed + 1).unique;
    if (!*res.xy_unique || !*res.yz_unique) {
      res.warnings.push_back(
          "two-period optimiser not unique; the decoupled derivative may differ from the "
          "optimal-face value, which is used instead");
      need_lex = true;
    }
  }
  if (need_lex) {
    res.lexicographic = detail::face_optimum(mx, my, mz, cost, sense, sense, cfg);
  }
  return res;
}

struct FaceDerivatives {
  /// Right derivative at 0 (min over the face for a lower bound, max for an upper).
  double right = 0.0;
  /// Left derivative at 0 (the opposite extreme of the face).
  double left = 0.0;
};

/// Both one-sided derivatives at zero from the epsilon = 0 optimal face.
inline FaceDerivatives face_derivatives(const DiscreteMeasure& mx, const DiscreteMeasure& my,
                                        const DiscreteMeasure& mz, const CostSpec& cost,
                                        Sense sense, const Config& cfg = {}) {
  FaceDerivatives d;
  d.right = detail::face_optimum(mx, my, mz, cost, sense, sense, cfg);
  d.left = detail::face_optimum(mx, my, mz, cost, sense, flip(sense), cfg);
  return d;
}

// --- first-order bounds -----------------------------------------------------

struct BoundsOptions {
  /// Solve the full three-period LP at epsilon for P_l, P_u.
  bool exact = false;
  /// Compute Q_l, Q_u.
  bool first_order = true;
  DerivativeOptions derivative;
};

/// Exact and first-order bounds at one epsilon, with the supporting
/// optimisers, certificates and per-y logs.
struct BoundsReport {
  double epsilon = 0.0;
  std::optional<double> p_lower;
  std::optional<double> p_upper;
  std::optional<double> q_lower;
  std::optional<double> q_upper;
  std::optional<double> p_lower_at_zero;
  std::optional<double> p_upper_at_zero;
  std::optional<double> derivative_lower;
  std::optional<double> derivative_upper;
  std::optional<DerivativeResult> lower_detail;
  std::optional<DerivativeResult> upper_detail;
  std::optional<Mot3Result> exact_lower;
  std::optional<Mot3Result> exact_upper;
  std::vector<std::string> warnings;
  double seconds_first_order = 0.0;
  double seconds_exact = 0.0;
};

inline BoundsReport first_order_bounds(const DiscreteMeasure& mx, const DiscreteMeasure& my,
                                       const DiscreteMeasure& mz, const CostSpec& cost, double eps,
                                       const BoundsOptions& opt = {}, const Config& cfg = {}) {
  if (!(eps >= 0.0)) throw InvalidArgument("epsilon must be nonnegative");
  BoundsReport rep;
  rep.epsilon = eps;
  using clock = std::chrono::steady_clock;
  if (opt.first_order) {
    const auto t0 = clock::now();
    auto lo = derivative_at_zero(mx, my, mz, cost, Sense::Minimize, opt.derivative, cfg);
    auto hi = derivative_at_zero(mx, my, mz, cost, Sense::Maximize, opt.derivative, cfg);
    rep.p_lower_at_zero = lo.base_value();
    rep.p_upper_at_zero = hi.base_value();
    rep.derivative_lower = lo.value();
    rep.derivative_upper = hi.value();
    rep.q_lower = *rep.p_lower_at_zero + eps * lo.value();
    rep.q_upper = *rep.p_upper_at_zero + eps * hi.value();
    for (const auto& w : lo.warnings) rep.warnings.push_back("lower: " + w);
    for (const auto& w : hi.warnings) rep.warnings.push_back("upper: " + w);
    if (*rep.q_lower > *rep.q_upper) {
      rep.warnings.push_back("Q_lower exceeds Q_upper at this epsilon");
    }
    rep.lower_detail = std::move(lo);
    rep.upper_detail = std::move(hi);
    rep.seconds_first_order = std::chrono::duration<double>(clock::now() - t0).count();
  }
  if (opt.exact) {
    const auto t0 = clock::now();
    const CostSpec at = cost.with_epsilon(eps);
    rep.exact_lower = solve_mot3(mx, my, mz, at, Sense::Minimize, cfg);
    rep.exact_upper = solve_mot3(mx, my, mz, at, Sense::Maximize, cfg);
    rep.p_lower = rep.exact_lower->value;
    rep.p_upper = rep.exact_upper->value;
    rep.seconds_exact = std::chrono::duration<double>(clock::now() - t0).count();
  }
  return rep;
}

// --- bound curves -----------------------------------------------------------

/// P(epsilon) on a grid from the full LP, with its tangent line at zero.
struct BoundCurve {
  Sense sense = Sense::Minimize;
  std::vector<double> eps_grid;
  /// NaN where the LP failed; see `failed_points`.
  std::vector<double> values;
  std::vector<double> q_values;
  double value_at_zero = 0.0;
  double derivative_at_zero = 0.0;
  std::vector<std::size_t> failed_points;
  std::vector<std::string> failure_messages;
  /// Concavity/convexity and tangent-bound violations found on the grid.
  std::vector<std::string> invariant_violations;

  bool ok() const { return failed_points.empty() && invariant_violations.empty(); }
};

namespace detail {

inline void check_curve(BoundCurve& curve) {
  double scale = 1.0;
  for (double v : curve.values) {
    if (std::isfinite(v)) scale = std::max(scale, 1.0 + std::abs(v));
  }
  const double tol = 1e-7 * scale;
  const bool lower = curve.sense == Sense::Minimize;
  std::vector<std::size_t> ok;
  for (std::size_t t = 0; t < curve.values.size(); ++t) {
    if (!std::isfinite(curve.values[t])) continue;
    ok.push_back(t);
    const double gap = curve.q_values[t] - curve.values[t];
    if ((lower && gap < -tol) || (!lower && gap > tol)) {
      curve.invariant_violations.push_back("tangent bound violated at epsilon=" +
                                           std::to_string(curve.eps_grid[t]));
    }
  }
  for (std::size_t s = 1; s + 1 < ok.size(); ++s) {
    const std::size_t a = ok[s - 1], b = ok[s], c = ok[s + 1];
    const double ea = curve.eps_grid[a], eb = curve.eps_grid[b], ec = curve.eps_grid[c];
    if (ec - ea <= 0.0) continue;
    const double theta = (eb - ea) / (ec - ea);
    const double chord = (1 - theta) * curve.values[a] + theta * curve.values[c];
    const double diff = curve.values[b] - chord;
    if ((lower && diff < -tol) || (!lower && diff > tol)) {
      curve.invariant_violations.push_back(std::string(lower ? "concavity" : "convexity") +
                                           " violated at epsilon=" + std::to_string(eb));
    }
  }
}

}  // namespace detail

/// P(epsilon) at every grid point by the full three-period LP, and the
/// tangent line from the decoupled derivative. Grid points solve in parallel;
/// failed points are recorded and skipped.
inline BoundCurve bound_curve(const DiscreteMeasure& mx, const DiscreteMeasure& my,
                              const DiscreteMeasure& mz, const CostSpec& cost,
                              const std::vector<double>& eps_grid, Sense sense,
                              const DerivativeOptions& dopt = {}, const Config& cfg = {}) {
  for (std::size_t t = 0; t < eps_grid.size(); ++t) {
    if (!(eps_grid[t] >= 0.0)) throw InvalidArgument("epsilon grid must be nonnegative");
    if (t > 0 && !(eps_grid[t] > eps_grid[t - 1])) {
      throw InvalidArgument("epsilon grid must be strictly increasing");
    }
  }
  BoundCurve curve;
  curve.sense = sense;
  curve.eps_grid = eps_grid;
  const auto d = derivative_at_zero(mx, my, mz, cost, sense, dopt, cfg);
  curve.value_at_zero = d.base_value();
  curve.derivative_at_zero = d.value();
  curve.values.assign(eps_grid.size(), std::numeric_limits<double>::quiet_NaN());
  std::vector<std::string> errors(eps_grid.size());
  parallel_for(eps_grid.size(), [&](std::size_t t) {
    try {
      curve.values[t] = solve_mot3(mx, my, mz, cost.with_epsilon(eps_grid[t]), sense, cfg).value;
    } catch (const Error& e) {
      errors[t] = e.what();
    }
  });
  for (std::size_t t = 0; t < eps_grid.size(); ++t) {
    curve.q_values.push_back(curve.value_at_zero + eps_grid[t] * curve.derivative_at_zero);
    if (!errors[t].empty()) {
      curve.failed_points.push_back(t);
      curve.failure_messages.push_back(errors[t]);
    }
  }
  detail::check_curve(curve);
  return curve;
}

}  // namespace motbounds
