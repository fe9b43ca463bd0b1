#pragma once

#include <cstdint>

namespace motbounds {

/// Numerical knobs shared by every module. Functions take a `Config` by
/// const reference and fall back to a default-constructed one.
struct Config {
  /// Generic tolerance for convex-order and equal-mean tests.
  double tol = 1e-9;
  /// Atom positions closer than this are merged into one atom.
  double merge_eps = 1e-12;
  /// Allowed deviation of total weight from one.
  double weight_sum_tol = 1e-12;
  /// Y-atoms with weight at or below this are skipped in per-y subproblems.
  /// Zero means every atom with positive weight is solved.
  double mass_floor = 0.0;
  /// Masses below this are treated as absent by the support-based checkers.
  double support_floor = 1e-10;
  /// Marginal residual allowed by coupling checks.
  double marginal_tol = 1e-9;
  /// Martingale residual allowed by coupling checks.
  double martingale_tol = 1e-8;
  /// Sub-replication slack allowed by dual-certificate checks (scaled by 1+max|c|).
  double certificate_tol = 1e-7;
  /// Seed for randomized probes.
  std::uint64_t seed = 0;
};

}  // namespace motbounds
