#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "motbounds/config.hpp"
#include "motbounds/errors.hpp"
#include "motbounds/measure.hpp"

namespace motbounds {

enum class Axis { X = 0, Y = 1, Z = 2 };

inline const char* to_string(Axis a) {
  switch (a) {
    case Axis::X: return "x";
    case Axis::Y: return "y";
    case Axis::Z: return "z";
  }
  return "?";
}

/// Sparse joint mass on a product of two atom grids. Only strictly positive
/// masses are stored; keys are (first, second) grid indices.
struct Coupling2 {
  std::vector<double> first_atoms;
  std::vector<double> second_atoms;
  std::map<std::array<std::size_t, 2>, double> mass;

  Coupling2() = default;
  Coupling2(std::vector<double> first, std::vector<double> second)
      : first_atoms(std::move(first)), second_atoms(std::move(second)) {}

  void add(std::size_t i, std::size_t j, double w) {
    if (w > 0.0) mass[{i, j}] += w;
  }
  double at(std::size_t i, std::size_t j) const {
    auto it = mass.find({i, j});
    return it == mass.end() ? 0.0 : it->second;
  }

  std::vector<double> first_marginal() const {
    std::vector<double> s(first_atoms.size(), 0.0);
    for (const auto& [k, w] : mass) s[k[0]] += w;
    return s;
  }
  std::vector<double> second_marginal() const {
    std::vector<double> s(second_atoms.size(), 0.0);
    for (const auto& [k, w] : mass) s[k[1]] += w;
    return s;
  }
  double total() const {
    double s = 0.0;
    for (const auto& [k, w] : mass) s += w;
    return s;
  }

  double integrate(const std::function<double(double, double)>& f) const {
    double s = 0.0;
    for (const auto& [k, w] : mass) s += w * f(first_atoms[k[0]], second_atoms[k[1]]);
    return s;
  }

  /// Support points carrying mass above `floor`.
  std::vector<std::pair<double, double>> support(double floor = 0.0) const {
    std::vector<std::pair<double, double>> pts;
    for (const auto& [k, w] : mass) {
      if (w > floor) pts.emplace_back(first_atoms[k[0]], second_atoms[k[1]]);
    }
    return pts;
  }

  /// Largest coordinatewise mass difference against another coupling on the same grids.
  double max_difference(const Coupling2& other) const {
    double d = 0.0;
    for (const auto& [k, w] : mass) d = std::max(d, std::abs(w - other.at(k[0], k[1])));
    for (const auto& [k, w] : other.mass) d = std::max(d, std::abs(w - at(k[0], k[1])));
    return d;
  }
};

/// Sparse joint mass on a product of three atom grids, keyed by (i, j, k).
struct Coupling3 {
  std::vector<double> x_atoms;
  std::vector<double> y_atoms;
  std::vector<double> z_atoms;
  std::map<std::array<std::size_t, 3>, double> mass;

  Coupling3() = default;
  Coupling3(std::vector<double> x, std::vector<double> y, std::vector<double> z)
      : x_atoms(std::move(x)), y_atoms(std::move(y)), z_atoms(std::move(z)) {}

  void add(std::size_t i, std::size_t j, std::size_t k, double w) {
    if (w > 0.0) mass[{i, j, k}] += w;
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    auto it = mass.find({i, j, k});
    return it == mass.end() ? 0.0 : it->second;
  }

  const std::vector<double>& grid(Axis a) const {
    switch (a) {
      case Axis::X: return x_atoms;
      case Axis::Y: return y_atoms;
      case Axis::Z: return z_atoms;
    }
    return x_atoms;
  }

  std::vector<double> marginal(Axis a) const {
    const auto ax = static_cast<std::size_t>(a);
    std::vector<double> s(grid(a).size(), 0.0);
    for (const auto& [k, w] : mass) s[k[ax]] += w;
    return s;
  }

  /// Two-dimensional projection onto (a, b), in that axis order.
  Coupling2 project(Axis a, Axis b) const {
    Coupling2 out(grid(a), grid(b));
    const auto ia = static_cast<std::size_t>(a);
    const auto ib = static_cast<std::size_t>(b);
    for (const auto& [k, w] : mass) out.mass[{k[ia], k[ib]}] += w;
    return out;
  }

  double integrate(const std::function<double(double, double, double)>& f) const {
    double s = 0.0;
    for (const auto& [k, w] : mass) s += w * f(x_atoms[k[0]], y_atoms[k[1]], z_atoms[k[2]]);
    return s;
  }

  double max_difference(const Coupling3& other) const {
    double d = 0.0;
    for (const auto& [k, w] : mass) d = std::max(d, std::abs(w - other.at(k[0], k[1], k[2])));
    for (const auto& [k, w] : other.mass) d = std::max(d, std::abs(w - at(k[0], k[1], k[2])));
    return d;
  }
};

/// Outcome of an invariant check; `failures` names every violated condition.
struct CouplingCheck {
  double marginal_residual = 0.0;
  double martingale_residual = 0.0;
  std::vector<std::string> failures;

  bool ok() const { return failures.empty(); }
};

namespace detail {

inline bool same_grid(const std::vector<double>& grid, const DiscreteMeasure& m, double eps) {
  if (grid.size() != m.size()) return false;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (std::abs(grid[i] - m.atom(i)) > eps) return false;
  }
  return true;
}

inline bool same_grid(const std::vector<double>& a, const std::vector<double>& b, double eps) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::abs(a[i] - b[i]) > eps) return false;
  }
  return true;
}

inline double marginal_gap(const std::vector<double>& sums, const DiscreteMeasure& m) {
  double gap = 0.0;
  for (std::size_t i = 0; i < sums.size(); ++i) gap = std::max(gap, std::abs(sums[i] - m.weight(i)));
  return gap;
}

inline void check_marginal(CouplingCheck& chk, const char* name, const std::vector<double>& grid,
                           const std::vector<double>& sums, const DiscreteMeasure& m,
                           const Config& cfg) {
  if (!same_grid(grid, m, cfg.merge_eps)) {
    chk.failures.push_back(std::string(name) + " grid does not match measure atoms");
    chk.marginal_residual = std::numeric_limits<double>::infinity();
    return;
  }
  const double gap = marginal_gap(sums, m);
  chk.marginal_residual = std::max(chk.marginal_residual, gap);
  if (gap > cfg.marginal_tol) {
    chk.failures.push_back(std::string(name) + " marginal residual " + std::to_string(gap));
  }
}

inline std::vector<double> weights_of(const DiscreteMeasure& m) {
  return {m.weights().begin(), m.weights().end()};
}
inline std::vector<double> atoms_of(const DiscreteMeasure& m) {
  return {m.atoms().begin(), m.atoms().end()};
}

}  // namespace detail

/// Marginal and (optionally) martingale check of a two-period coupling.
inline CouplingCheck check_coupling(const Coupling2& c, const DiscreteMeasure& mx,
                                    const DiscreteMeasure& my, bool martingale,
                                    const Config& cfg = {}) {
  CouplingCheck chk;
  detail::check_marginal(chk, "first", c.first_atoms, c.first_marginal(), mx, cfg);
  detail::check_marginal(chk, "second", c.second_atoms, c.second_marginal(), my, cfg);
  if (martingale) {
    std::vector<double> drift(c.first_atoms.size(), 0.0);
    for (const auto& [k, w] : c.mass) drift[k[0]] += w * (c.second_atoms[k[1]] - c.first_atoms[k[0]]);
    for (double d : drift) chk.martingale_residual = std::max(chk.martingale_residual, std::abs(d));
    if (chk.martingale_residual > cfg.martingale_tol) {
      chk.failures.push_back("martingale residual " + std::to_string(chk.martingale_residual));
    }
  }
  return chk;
}

/// Check for the fixed-barycenter set: both marginals, and every first-axis
/// conditional has mean `barycenter`.
inline CouplingCheck check_fixed_barycenter(const Coupling2& c, const DiscreteMeasure& sx,
                                            const DiscreteMeasure& sz, double barycenter,
                                            const Config& cfg = {}) {
  CouplingCheck chk;
  detail::check_marginal(chk, "first", c.first_atoms, c.first_marginal(), sx, cfg);
  detail::check_marginal(chk, "second", c.second_atoms, c.second_marginal(), sz, cfg);
  std::vector<double> drift(c.first_atoms.size(), 0.0);
  for (const auto& [k, w] : c.mass) drift[k[0]] += w * (c.second_atoms[k[1]] - barycenter);
  for (double d : drift) chk.martingale_residual = std::max(chk.martingale_residual, std::abs(d));
  if (chk.martingale_residual > cfg.martingale_tol) {
    chk.failures.push_back("barycenter residual " + std::to_string(chk.martingale_residual));
  }
  return chk;
}

/// Three marginals plus both martingale steps of a three-period coupling.
inline CouplingCheck check_coupling(const Coupling3& c, const DiscreteMeasure& mx,
                                    const DiscreteMeasure& my, const DiscreteMeasure& mz,
                                    const Config& cfg = {}) {
  CouplingCheck chk;
  detail::check_marginal(chk, "x", c.x_atoms, c.marginal(Axis::X), mx, cfg);
  detail::check_marginal(chk, "y", c.y_atoms, c.marginal(Axis::Y), my, cfg);
  detail::check_marginal(chk, "z", c.z_atoms, c.marginal(Axis::Z), mz, cfg);
  std::vector<double> step1(c.x_atoms.size(), 0.0);
  std::map<std::array<std::size_t, 2>, double> step2;
  for (const auto& [k, w] : c.mass) {
    step1[k[0]] += w * (c.y_atoms[k[1]] - c.x_atoms[k[0]]);
    step2[{k[0], k[1]}] += w * (c.z_atoms[k[2]] - c.y_atoms[k[1]]);
  }
  double r1 = 0.0, r2 = 0.0;
  for (double d : step1) r1 = std::max(r1, std::abs(d));
  for (const auto& [k, d] : step2) r2 = std::max(r2, std::abs(d));
  chk.martingale_residual = std::max(r1, r2);
  if (r1 > cfg.martingale_tol) chk.failures.push_back("first-step martingale residual " + std::to_string(r1));
  if (r2 > cfg.martingale_tol) chk.failures.push_back("second-step martingale residual " + std::to_string(r2));
  return chk;
}

/// Structural check of a Coupling3 against marginals implied by its own
/// projections: used when only the coupling is available.
inline CouplingCheck check_projections(const Coupling3& c, const Coupling2& pab, Axis a, Axis b,
                                       double tol) {
  CouplingCheck chk;
  const Coupling2 proj = c.project(a, b);
  if (!detail::same_grid(proj.first_atoms, pab.first_atoms, 1e-12) ||
      !detail::same_grid(proj.second_atoms, pab.second_atoms, 1e-12)) {
    chk.failures.push_back("projection grids differ");
    chk.marginal_residual = std::numeric_limits<double>::infinity();
    return chk;
  }
  chk.marginal_residual = proj.max_difference(pab);
  if (chk.marginal_residual > tol) {
    chk.failures.push_back(std::string("projection onto (") + to_string(a) + "," + to_string(b) +
                           ") differs by " + std::to_string(chk.marginal_residual));
  }
  return chk;
}

// --- disintegration -------------------------------------------------------

/// Conditional law of the other axis given one atom of a Coupling2.
struct ConditionalMeasure {
  double point = 0.0;
  std::size_t index = 0;
  double weight = 0.0;
  DiscreteMeasure law;
  /// Grid index of every atom of `law`.
  std::vector<std::size_t> law_index;
};

/// Conditional Coupling2 of the remaining two axes given one atom of a Coupling3.
struct ConditionalCoupling {
  double point = 0.0;
  std::size_t index = 0;
  double weight = 0.0;
  Coupling2 law;
};

/// Conditional law of the remaining axis given an atom pair of a Coupling3.
struct PairConditional {
  std::array<double, 2> point{};
  std::array<std::size_t, 2> index{};
  double weight = 0.0;
  DiscreteMeasure law;
  std::vector<std::size_t> law_index;
};

/// Disintegrates a Coupling2 along `given` (X: first axis, Y: second axis).
/// Returns one conditional per atom carrying positive mass, in grid order.
inline std::vector<ConditionalMeasure> disintegrate(const Coupling2& c, Axis given) {
  if (given == Axis::Z) throw InvalidArgument("Coupling2 has no Z axis");
  const std::size_t g = given == Axis::X ? 0 : 1;
  const std::size_t o = 1 - g;
  const auto& given_grid = g == 0 ? c.first_atoms : c.second_atoms;
  const auto& other_grid = o == 0 ? c.first_atoms : c.second_atoms;
  std::vector<std::vector<std::pair<std::size_t, double>>> rows(given_grid.size());
  for (const auto& [k, w] : c.mass) rows[k[g]].emplace_back(k[o], w);
  std::vector<ConditionalMeasure> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& row = rows[i];
    if (row.empty()) continue;
    std::sort(row.begin(), row.end());
    double total = 0.0;
    for (const auto& [j, w] : row) total += w;
    if (!(total > 0.0)) continue;
    std::vector<double> atoms, weights;
    ConditionalMeasure cm;
    for (const auto& [j, w] : row) {
      atoms.push_back(other_grid[j]);
      weights.push_back(w / total);
      cm.law_index.push_back(j);
    }
    cm.point = given_grid[i];
    cm.index = i;
    cm.weight = total;
    cm.law = DiscreteMeasure::normalized(std::move(atoms), std::move(weights));
    out.push_back(std::move(cm));
  }
  return out;
}

/// Disintegrates a Coupling3 along one axis. Each conditional is a Coupling2
/// on the full grids of the two remaining axes, in (X, Y, Z) order.
inline std::vector<ConditionalCoupling> disintegrate(const Coupling3& c, Axis given) {
  const auto g = static_cast<std::size_t>(given);
  std::array<std::size_t, 2> rest{};
  std::size_t p = 0;
  for (std::size_t a = 0; a < 3; ++a) {
    if (a != g) rest[p++] = a;
  }
  const auto& gg = c.grid(given);
  std::vector<double> totals(gg.size(), 0.0);
  for (const auto& [k, w] : c.mass) totals[k[g]] += w;
  std::vector<ConditionalCoupling> out;
  std::vector<std::size_t> slot(gg.size(), gg.size());
  for (std::size_t i = 0; i < gg.size(); ++i) {
    if (!(totals[i] > 0.0)) continue;
    slot[i] = out.size();
    ConditionalCoupling cc;
    cc.point = gg[i];
    cc.index = i;
    cc.weight = totals[i];
    cc.law = Coupling2(c.grid(static_cast<Axis>(rest[0])), c.grid(static_cast<Axis>(rest[1])));
    out.push_back(std::move(cc));
  }
  for (const auto& [k, w] : c.mass) {
    auto& cc = out[slot[k[g]]];
    cc.law.mass[{k[rest[0]], k[rest[1]]}] += w / cc.weight;
  }
  return out;
}

/// Disintegrates a Coupling3 along two axes; the law is over the third.
inline std::vector<PairConditional> disintegrate(const Coupling3& c, Axis a, Axis b) {
  if (a == b) throw InvalidArgument("conditioning axes must differ");
  const auto ia = static_cast<std::size_t>(a);
  const auto ib = static_cast<std::size_t>(b);
  const std::size_t io = 3 - ia - ib;
  std::map<std::array<std::size_t, 2>, std::vector<std::pair<std::size_t, double>>> groups;
  for (const auto& [k, w] : c.mass) groups[{k[ia], k[ib]}].emplace_back(k[io], w);
  const auto& other = c.grid(static_cast<Axis>(io));
  std::vector<PairConditional> out;
  for (auto& [key, row] : groups) {
    std::sort(row.begin(), row.end());
    double total = 0.0;
    for (const auto& [j, w] : row) total += w;
    if (!(total > 0.0)) continue;
    PairConditional pc;
    std::vector<double> atoms, weights;
    for (const auto& [j, w] : row) {
      atoms.push_back(other[j]);
      weights.push_back(w / total);
      pc.law_index.push_back(j);
    }
    pc.index = key;
    pc.point = {c.grid(a)[key[0]], c.grid(b)[key[1]]};
    pc.weight = total;
    pc.law = DiscreteMeasure::normalized(std::move(atoms), std::move(weights));
    out.push_back(std::move(pc));
  }
  return out;
}

/// Re-mixes Coupling2 conditionals: inverse of disintegrate(c, given).
inline Coupling2 remix(const std::vector<ConditionalMeasure>& parts, Axis given,
                       std::vector<double> first_atoms, std::vector<double> second_atoms) {
  Coupling2 out(std::move(first_atoms), std::move(second_atoms));
  for (const auto& cm : parts) {
    for (std::size_t t = 0; t < cm.law.size(); ++t) {
      const double w = cm.weight * cm.law.weight(t);
      if (given == Axis::X) {
        out.add(cm.index, cm.law_index[t], w);
      } else {
        out.add(cm.law_index[t], cm.index, w);
      }
    }
  }
  return out;
}

/// Re-mixes Coupling3 conditionals: inverse of disintegrate(c, given).
inline Coupling3 remix(const std::vector<ConditionalCoupling>& parts, Axis given,
                       std::vector<double> x, std::vector<double> y, std::vector<double> z) {
  Coupling3 out(std::move(x), std::move(y), std::move(z));
  const auto g = static_cast<std::size_t>(given);
  for (const auto& cc : parts) {
    for (const auto& [k, w] : cc.law.mass) {
      std::array<std::size_t, 3> key{};
      std::size_t p = 0;
      for (std::size_t a = 0; a < 3; ++a) key[a] = a == g ? cc.index : k[p++];
      out.add(key[0], key[1], key[2], cc.weight * w);
    }
  }
  return out;
}

}  // namespace motbounds
