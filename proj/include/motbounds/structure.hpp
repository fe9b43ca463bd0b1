#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <random>
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

namespace motbounds {

// --- gluing -----------------------------------------------------------------

/// Markovian gluing of consecutive martingale couplings: given y, X and Z are
/// conditionally independent, mass(i,j,k) = pxy(i,j) pyz(j,k) / mu_Y(j).
inline Coupling3 markov_glue(const Coupling2& pxy, const Coupling2& pyz, const Config& cfg = {}) {
  detail::require_shared_y(pxy, pyz, cfg);
  std::vector<std::vector<std::pair<std::size_t, double>>> z_given_y(pyz.first_atoms.size());
  for (const auto& [k, w] : pyz.mass) z_given_y[k[0]].emplace_back(k[1], w);
  const auto my_yz = pyz.first_marginal();
  Coupling3 out(pxy.first_atoms, pxy.second_atoms, pyz.second_atoms);
  for (const auto& [key, w] : pxy.mass) {
    const std::size_t j = key[1];
    if (!(my_yz[j] > 0.0)) continue;
    for (const auto& [k, v] : z_given_y[j]) out.add(key[0], j, k, w * v / my_yz[j]);
  }
  return out;
}

/// Gluing of two couplings sharing their first marginal. For every x-atom the
/// conditional laws of Y and Z must be in convex order; a martingale coupling
/// between them is found by a zero-objective feasibility LP.
inline Coupling3 strassen_glue(const Coupling2& pxy, const Coupling2& pxz, const Config& cfg = {}) {
  if (!detail::same_grid(pxy.first_atoms, pxz.first_atoms, cfg.merge_eps)) {
    throw MarginalMismatch("couplings are defined on different x-grids");
  }
  const auto ax = pxy.first_marginal();
  const auto bx = pxz.first_marginal();
  for (std::size_t i = 0; i < ax.size(); ++i) {
    if (std::abs(ax[i] - bx[i]) > cfg.marginal_tol) {
      throw MarginalMismatch("x-marginals differ at x=" + std::to_string(pxy.first_atoms[i]));
    }
  }
  const auto ys = disintegrate(pxy, Axis::X);
  const auto zs = disintegrate(pxz, Axis::X);
  if (ys.size() != zs.size()) throw MarginalMismatch("x-supports of the two couplings differ");
  for (std::size_t t = 0; t < ys.size(); ++t) {
    const auto rep = convex_order_check(ys[t].law, zs[t].law, cfg.tol);
    if (!rep.holds) {
      throw ConditionalConvexOrderViolation(
          ys[t].point, "conditional laws at x=" + std::to_string(ys[t].point) +
                           " are not in convex order (potential excess " +
                           std::to_string(rep.worst_excess) + ")");
    }
  }
  std::vector<Coupling2> kernels(ys.size());
  parallel_for(ys.size(), [&](std::size_t t) {
    const auto lp = build_mot2_lp(ys[t].law, zs[t].law, [](double, double) { return 0.0; },
                                  Sense::Minimize);
    const auto sol = solve(lp);
    if (!sol.optimal()) {
      throw ConditionalConvexOrderViolation(ys[t].point, "no martingale kernel at x=" +
                                                             std::to_string(ys[t].point));
    }
    kernels[t] = coupling2_from_primal(ys[t].law, zs[t].law, sol.primal);
  });
  Coupling3 out(pxy.first_atoms, pxy.second_atoms, pxz.second_atoms);
  for (std::size_t t = 0; t < ys.size(); ++t) {
    for (const auto& [k, w] : kernels[t].mass) {
      out.add(ys[t].index, ys[t].law_index[k[0]], zs[t].law_index[k[1]], ys[t].weight * w);
    }
  }
  return out;
}

// --- left-monotonicity ------------------------------------------------------

struct LeftMonotoneResult {
  bool ok = true;
  /// On failure: (x, z-), (x, z+), (x', z') with x < x' and z- < z' < z+.
  std::optional<std::array<std::pair<double, double>, 3>> witness;
};

/// No-crossing test: fails iff some (x, z-), (x, z+), (x', z') in the set
/// have x < x' and z' strictly inside (z-, z+). Strictness uses margin `tol`.
/// A point lies inside some (z-, z+) pair of x exactly when it lies inside
/// the hull (min z, max z) of x's points, so the hull endpoints witness.
inline LeftMonotoneResult left_monotone_check(std::vector<std::pair<double, double>> support,
                                              double tol = 1e-9) {
  std::sort(support.begin(), support.end());
  LeftMonotoneResult res;
  std::size_t start = 0;
  while (start < support.size()) {
    std::size_t end = start;
    while (end < support.size() && std::abs(support[end].first - support[start].first) <= tol) ++end;
    const auto lo = support[start];
    const auto hi = support[end - 1];
    if (hi.second - lo.second > 2 * tol) {
      for (std::size_t q = end; q < support.size(); ++q) {
        const double zq = support[q].second;
        if (support[q].first > lo.first + tol && zq > lo.second + tol && zq < hi.second - tol) {
          res.ok = false;
          res.witness = std::array<std::pair<double, double>, 3>{lo, hi, support[q]};
          return res;
        }
      }
    }
    start = end;
  }
  return res;
}

inline LeftMonotoneResult left_monotone_check(const Coupling2& c, const Config& cfg = {}) {
  return left_monotone_check(c.support(cfg.support_floor), cfg.tol);
}

// --- (c, W)-monotonicity ----------------------------------------------------

struct WeightedPoint {
  double x = 0.0;
  double z = 0.0;
  double weight = 0.0;
};

struct CwMonotoneResult {
  bool ok = true;
  double beta_cost = 0.0;
  double best_competitor_cost = 0.0;
  /// Improving competitor on the (x, z) grid spanned by the tested set.
  std::vector<WeightedPoint> competitor;
  std::size_t subsets_tested = 0;
};

namespace detail {

inline CwMonotoneResult cw_probe(const std::vector<WeightedPoint>& beta, const PairCost& cost,
                                 double tol) {
  std::vector<double> xs, zs;
  for (const auto& p : beta) {
    xs.push_back(p.x);
    zs.push_back(p.z);
  }
  auto uniq = [](std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  uniq(xs);
  uniq(zs);
  const auto nx = static_cast<Eigen::Index>(xs.size());
  const auto nz = static_cast<Eigen::Index>(zs.size());
  std::vector<double> mx(xs.size(), 0.0), mz(zs.size(), 0.0), moment(xs.size(), 0.0);
  CwMonotoneResult res;
  for (const auto& p : beta) {
    const auto i = static_cast<std::size_t>(std::lower_bound(xs.begin(), xs.end(), p.x) - xs.begin());
    const auto k = static_cast<std::size_t>(std::lower_bound(zs.begin(), zs.end(), p.z) - zs.begin());
    mx[i] += p.weight;
    mz[k] += p.weight;
    moment[i] += p.weight * (p.z - p.x);
    res.beta_cost += p.weight * cost(p.x, p.z);
  }
  // Competitors: same marginals and the same per-x moments of h(x)(z - x).
  LinearProgram lp(2 * nx + nz, nx * nz, Sense::Minimize);
  for (Eigen::Index i = 0; i < nx; ++i) {
    const auto si = static_cast<std::size_t>(i);
    lp.rhs(i) = mx[si];
    lp.rhs(nx + nz + i) = moment[si];
    for (Eigen::Index k = 0; k < nz; ++k) {
      const auto sk = static_cast<std::size_t>(k);
      const Eigen::Index var = i * nz + k;
      lp.objective(var) = cost(xs[si], zs[sk]);
      lp.constraints(i, var) = 1.0;
      lp.constraints(nx + k, var) = 1.0;
      lp.constraints(nx + nz + i, var) = zs[sk] - xs[si];
    }
  }
  for (Eigen::Index k = 0; k < nz; ++k) lp.rhs(nx + k) = mz[static_cast<std::size_t>(k)];
  const auto sol = solve(lp);
  if (!sol.optimal()) throw InternalError("competitor LP failed although beta is feasible");
  res.best_competitor_cost = sol.value;
  res.subsets_tested = 1;
  const double scale = 1.0 + std::abs(res.beta_cost);
  if (sol.value < res.beta_cost - tol * scale) {
    res.ok = false;
    for (Eigen::Index i = 0; i < nx; ++i) {
      for (Eigen::Index k = 0; k < nz; ++k) {
        const double w = sol.primal(i * nz + k);
        if (w > 0.0) {
          res.competitor.push_back({xs[static_cast<std::size_t>(i)], zs[static_cast<std::size_t>(k)], w});
        }
      }
    }
  }
  return res;
}

}  // namespace detail

/// Tests whether `beta` minimises the integral of `cost` among competitor
/// measures on the grid spanned by its points (same marginals, same per-x
/// first moments of z - x). Sets larger than `limit` are checked on
/// `samples` random subsets of size `limit`, each with beta restricted.
inline CwMonotoneResult cw_monotone_check(const std::vector<WeightedPoint>& beta,
                                          const PairCost& cost, std::size_t limit = 8,
                                          std::size_t samples = 32, const Config& cfg = {}) {
  if (beta.size() <= limit) return detail::cw_probe(beta, cost, cfg.tol);
  std::mt19937_64 rng(cfg.seed);
  CwMonotoneResult agg;
  std::vector<std::size_t> idx(beta.size());
  for (std::size_t t = 0; t < idx.size(); ++t) idx[t] = t;
  for (std::size_t s = 0; s < samples; ++s) {
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<WeightedPoint> sub;
    for (std::size_t t = 0; t < limit; ++t) sub.push_back(beta[idx[t]]);
    auto r = detail::cw_probe(sub, cost, cfg.tol);
    agg.subsets_tested += 1;
    if (!r.ok) {
      r.subsets_tested = agg.subsets_tested;
      return r;
    }
  }
  return agg;
}

inline std::vector<WeightedPoint> weighted_support(const Coupling2& c, double floor = 0.0) {
  std::vector<WeightedPoint> pts;
  for (const auto& [k, w] : c.mass) {
    if (w > floor) pts.push_back({c.first_atoms[k[0]], c.second_atoms[k[1]], w});
  }
  return pts;
}

// --- two-point structure ----------------------------------------------------

/// Conditional law lambda_minus * delta(T_minus) + (1 - lambda_minus) * delta(T_plus)
/// centred at `barycenter`.
struct TwoPointEntry {
  double t_minus = 0.0;
  double t_plus = 0.0;
  double lambda_minus = 0.0;
};

/// Weights of the unique two-point law on {tminus, tplus} with mean ybar.
inline TwoPointEntry two_point_decompose(double ybar, double tminus, double tplus) {
  if (!(tminus < ybar && ybar < tplus)) {
    throw DegenerateBracket("barycenter " + std::to_string(ybar) + " not inside (" +
                            std::to_string(tminus) + ", " + std::to_string(tplus) + ")");
  }
  return {tminus, tplus, (ybar - tplus) / (tminus - tplus)};
}

/// Per x-atom two-point map: x -> (T-, T+, lambda-).
struct TwoPointMap {
  std::vector<double> x_atoms;
  std::vector<TwoPointEntry> entries;
};

/// Reads the two-point map off a fixed-barycenter coupling. Returns nullopt
/// when some x-conditional does not have exactly two atoms above `floor`
/// bracketing the barycenter.
inline std::optional<TwoPointMap> extract_two_point_map(const Coupling2& c, double barycenter,
                                                        double floor = 1e-9) {
  TwoPointMap map;
  for (const auto& cm : disintegrate(c, Axis::X)) {
    std::vector<std::size_t> kept;
    for (std::size_t t = 0; t < cm.law.size(); ++t) {
      if (cm.weight * cm.law.weight(t) > floor) kept.push_back(t);
    }
    if (kept.size() != 2) return std::nullopt;
    const double lo = cm.law.atom(kept[0]);
    const double hi = cm.law.atom(kept[1]);
    if (!(lo < barycenter && barycenter < hi)) return std::nullopt;
    map.x_atoms.push_back(cm.point);
    map.entries.push_back({lo, hi, cm.law.weight(kept[0]) /
                                       (cm.law.weight(kept[0]) + cm.law.weight(kept[1]))});
  }
  return map;
}

/// The unique martingale coupling of mx with a law on {y1, y2}:
/// g1(x) = (y2 - x) / (y2 - y1),  g2(x) = (x - y1) / (y2 - y1).
inline Coupling2 singleton_coupling(const DiscreteMeasure& mx, double y1, double y2) {
  if (!(y1 < y2)) throw SupportViolation("target atoms must satisfy y1 < y2");
  if (mx.min_atom() < y1 || mx.max_atom() > y2) {
    throw SupportViolation("atoms of mu_X must lie in [" + std::to_string(y1) + ", " +
                           std::to_string(y2) + "]");
  }
  Coupling2 c(detail::atoms_of(mx), {y1, y2});
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double x = mx.atom(i);
    c.add(i, 0, mx.weight(i) * (y2 - x) / (y2 - y1));
    c.add(i, 1, mx.weight(i) * (x - y1) / (y2 - y1));
  }
  return c;
}

// --- uniqueness probe -------------------------------------------------------

struct UniquenessReport {
  bool unique = true;
  std::size_t trials = 0;
  double max_deviation = 0.0;
  /// On non-uniqueness: two optimal points differing by more than the threshold.
  std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> witnesses;
};

/// Probabilistic test of whether an LP optimum is unique: optimises random
/// secondary objectives over the optimal face and compares the optimisers.
inline UniquenessReport uniqueness_probe(const LinearProgram& lp, const LPSolution& solution,
                                         std::size_t trials, std::uint64_t seed = 0,
                                         double threshold = 1e-6) {
  UniquenessReport rep;
  if (!solution.optimal()) throw InvalidArgument("uniqueness probe needs an optimal solution");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Eigen::VectorXd> seen{solution.primal};
  for (std::size_t t = 0; t < trials; ++t) {
    Eigen::VectorXd sec(lp.num_vars());
    for (auto& s : sec) s = u(rng);
    const auto lex = solve_lexicographic(lp, solution, sec, Sense::Minimize);
    ++rep.trials;
    if (!lex.secondary.optimal()) continue;
    for (const auto& prev : seen) {
      const double dev = (lex.secondary.primal - prev).lpNorm<Eigen::Infinity>();
      rep.max_deviation = std::max(rep.max_deviation, dev);
      if (dev > threshold) {
        rep.unique = false;
        rep.witnesses = std::make_pair(prev, lex.secondary.primal);
        return rep;
      }
    }
    seen.push_back(lex.secondary.primal);
  }
  return rep;
}

}  // namespace motbounds
