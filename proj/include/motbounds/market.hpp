#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "motbounds/config.hpp"
#include "motbounds/errors.hpp"
#include "motbounds/lp.hpp"
#include "motbounds/measure.hpp"

namespace motbounds {

/// Call prices for one maturity, in forward (undiscounted) terms.
struct OptionChain {
  std::string maturity;
  std::vector<double> strikes;
  std::vector<double> calls;
  std::optional<double> forward;

  std::size_t size() const { return strikes.size(); }

  void validate() const {
    if (strikes.size() != calls.size()) {
      throw InvalidArgument("chain '" + maturity + "': strikes and call prices differ in length");
    }
    for (std::size_t i = 0; i < strikes.size(); ++i) {
      if (!std::isfinite(strikes[i]) || !std::isfinite(calls[i])) {
        throw InvalidArgument("chain '" + maturity + "': non-finite value in row " + std::to_string(i));
      }
      if (calls[i] < 0.0) {
        throw InvalidArgument("chain '" + maturity + "': negative call price in row " + std::to_string(i));
      }
      if (i > 0 && !(strikes[i] > strikes[i - 1])) {
        throw InvalidArgument("chain '" + maturity + "': strikes must be strictly increasing");
      }
    }
  }
};

/// Undiscounted call prices E (S - K)^+ of `m` at each strike.
inline std::vector<double> call_prices(const DiscreteMeasure& m, const std::vector<double>& strikes) {
  std::vector<double> out;
  out.reserve(strikes.size());
  for (double k : strikes) {
    double c = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) c += m.weight(i) * std::max(m.atom(i) - k, 0.0);
    out.push_back(c);
  }
  return out;
}

struct DensityResult {
  DiscreteMeasure measure;
  double mean = 0.0;
  /// Total negative mass removed before renormalising.
  double clipped_mass = 0.0;
  std::vector<std::string> warnings;
};

/// Risk-neutral law from second divided differences of call prices.
///
/// With slopes s_i = (C_{i+1} - C_i) / (K_{i+1} - K_i), the mass at an
/// interior strike is s_i - s_{i-1}; the first strike gets 1 + s_0 and the
/// last gets -s_{N-2}, so the masses telescope to 1. Negative masses are
/// clipped and the rest renormalised. Atoms sit on strikes; zero-mass
/// strikes are dropped.
inline DensityResult bl_density(const OptionChain& chain, const Config& cfg = {}) {
  chain.validate();
  const std::size_t n = chain.size();
  if (n < 3) throw TooFewStrikes("chain '" + chain.maturity + "' has fewer than 3 strikes");
  const auto& k = chain.strikes;
  const auto& c = chain.calls;
  std::vector<double> slope(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) slope[i] = (c[i + 1] - c[i]) / (k[i + 1] - k[i]);

  DensityResult res{DiscreteMeasure::dirac(0.0), 0.0, 0.0, {}};
  std::vector<double> mass(n);
  mass[0] = 1.0 + slope[0];
  for (std::size_t i = 1; i + 1 < n; ++i) mass[i] = slope[i] - slope[i - 1];
  mass[n - 1] = -slope[n - 2];

  const double noise = 1e-12;
  std::vector<double> atoms, weights;
  std::ostringstream clipped;
  std::size_t clip_count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (mass[i] < 0.0) {
      res.clipped_mass += -mass[i];
      if (mass[i] < -noise) {
        if (clip_count++ < 5) clipped << (clip_count > 1 ? ", " : "") << k[i];
      }
      continue;
    }
    if (mass[i] > 0.0) {
      atoms.push_back(k[i]);
      weights.push_back(mass[i]);
    }
  }
  // The masses telescope to 1, so some mass survives unless they are not finite.
  double kept = 0.0;
  for (double w : weights) kept += w;
  if (atoms.empty() || !std::isfinite(kept) || !std::isfinite(res.clipped_mass)) {
    throw AllMassClipped("chain '" + chain.maturity + "': no finite nonnegative mass left after clipping");
  }
  if (clip_count > 0) {
    res.warnings.push_back("chain '" + chain.maturity + "': clipped negative mass " +
                           std::to_string(res.clipped_mass) + " at " + std::to_string(clip_count) +
                           " strike(s) starting " + clipped.str() + (clip_count > 5 ? ", ..." : ""));
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (slope[i] > noise) {
      res.warnings.push_back("chain '" + chain.maturity + "': call prices increase after strike " +
                             std::to_string(k[i]));
      break;
    }
  }
  res.measure = DiscreteMeasure::normalized(std::move(atoms), std::move(weights), cfg);
  res.mean = mean(res.measure);
  if (chain.forward && std::abs(res.mean - *chain.forward) > 1e-6 * (1.0 + std::abs(*chain.forward))) {
    std::ostringstream os;
    os.precision(10);
    os << "chain '" << chain.maturity << "': implied mean " << res.mean << " differs from forward "
       << *chain.forward;
    res.warnings.push_back(os.str());
  }
  return res;
}

struct RepairResult {
  std::vector<DiscreteMeasure> measures;
  /// L1 weight change per measure.
  std::vector<double> moved;
  double total_moved = 0.0;
  bool changed = false;
};

namespace detail {

inline bool chain_is_valid(const std::vector<DiscreteMeasure>& ms, double target_mean, double tol) {
  for (const auto& m : ms) {
    if (std::abs(mean(m) - target_mean) > tol) return false;
  }
  for (std::size_t k = 0; k + 1 < ms.size(); ++k) {
    if (!convex_order_leq(ms[k], ms[k + 1], tol)) return false;
  }
  return true;
}

}  // namespace detail

/// Moves the least total weight (L1) so that every measure has mean
/// `target_mean` and consecutive measures are in convex order. Atoms are
/// kept; only weights change. Throws RepairInfeasible when no repair exists
/// on the given atoms or it would move more than `budget`.
inline RepairResult repair_chain(const std::vector<DiscreteMeasure>& ms, double target_mean,
                                 double budget = 0.1, const Config& cfg = {}) {
  if (ms.empty()) throw InvalidArgument("repair_chain needs at least one measure");
  RepairResult res;
  res.moved.assign(ms.size(), 0.0);
  if (detail::chain_is_valid(ms, target_mean, cfg.tol)) {
    res.measures = ms;
    return res;
  }

  std::set<double> grid;
  for (const auto& m : ms) grid.insert(m.atoms().begin(), m.atoms().end());
  const std::vector<double> points(grid.begin(), grid.end());

  // Per measure: weights w', then d+, d-. Then one slack per potential row.
  std::vector<Eigen::Index> offset(ms.size());
  Eigen::Index nv = 0;
  for (std::size_t k = 0; k < ms.size(); ++k) {
    offset[k] = nv;
    nv += 3 * static_cast<Eigen::Index>(ms[k].size());
  }
  const Eigen::Index slack0 = nv;
  const Eigen::Index n_pot = static_cast<Eigen::Index>((ms.size() - 1) * points.size());
  nv += n_pot;
  Eigen::Index rows = 0;
  for (const auto& m : ms) rows += static_cast<Eigen::Index>(m.size()) + 2;
  rows += n_pot;

  LinearProgram lp(rows, nv, Sense::Minimize);
  Eigen::Index r = 0;
  for (std::size_t k = 0; k < ms.size(); ++k) {
    const auto sz = static_cast<Eigen::Index>(ms[k].size());
    const Eigen::Index w = offset[k], dp = w + sz, dm = w + 2 * sz;
    for (Eigen::Index i = 0; i < sz; ++i) {
      lp.objective(dp + i) = 1.0;
      lp.objective(dm + i) = 1.0;
      lp.constraints(r, w + i) = 1.0;
      lp.constraints(r, dp + i) = -1.0;
      lp.constraints(r, dm + i) = 1.0;
      lp.rhs(r++) = ms[k].weight(static_cast<std::size_t>(i));
    }
    for (Eigen::Index i = 0; i < sz; ++i) lp.constraints(r, w + i) = 1.0;
    lp.rhs(r++) = 1.0;
    for (Eigen::Index i = 0; i < sz; ++i) lp.constraints(r, w + i) = ms[k].atom(static_cast<std::size_t>(i));
    lp.rhs(r++) = target_mean;
  }
  Eigen::Index s = slack0;
  for (std::size_t k = 0; k + 1 < ms.size(); ++k) {
    for (double t : points) {
      // U_{k+1}(t) - U_k(t) - slack = 0
      for (std::size_t i = 0; i < ms[k + 1].size(); ++i) {
        lp.constraints(r, offset[k + 1] + static_cast<Eigen::Index>(i)) += std::abs(t - ms[k + 1].atom(i));
      }
      for (std::size_t i = 0; i < ms[k].size(); ++i) {
        lp.constraints(r, offset[k] + static_cast<Eigen::Index>(i)) -= std::abs(t - ms[k].atom(i));
      }
      lp.constraints(r, s++) = -1.0;
      lp.rhs(r++) = 0.0;
    }
  }

  const auto sol = solve(lp);
  if (sol.status != LPStatus::Optimal) {
    throw RepairInfeasible("no reweighting of the given atoms puts the chain in convex order with mean " +
                           std::to_string(target_mean));
  }
  if (sol.value > budget) {
    throw RepairInfeasible("repair needs total weight change " + std::to_string(sol.value) +
                           ", above the budget " + std::to_string(budget));
  }
  for (std::size_t k = 0; k < ms.size(); ++k) {
    const std::size_t sz = ms[k].size();
    std::vector<double> atoms(ms[k].atoms().begin(), ms[k].atoms().end());
    std::vector<double> weights(sz);
    for (std::size_t i = 0; i < sz; ++i) {
      const auto idx = offset[k] + static_cast<Eigen::Index>(i);
      weights[i] = std::max(0.0, sol.primal(idx));
      res.moved[k] += sol.primal(idx + static_cast<Eigen::Index>(sz)) +
                      sol.primal(idx + 2 * static_cast<Eigen::Index>(sz));
    }
    res.measures.push_back(DiscreteMeasure::normalized(std::move(atoms), std::move(weights), cfg));
    res.total_moved += res.moved[k];
  }
  res.changed = true;
  if (!detail::chain_is_valid(res.measures, target_mean, cfg.tol * (1.0 + std::abs(target_mean)))) {
    throw NumericalFailure("repaired chain failed its own convex-order check");
  }
  return res;
}

}  // namespace motbounds
