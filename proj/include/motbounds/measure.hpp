#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "motbounds/config.hpp"
#include "motbounds/errors.hpp"

namespace motbounds {

/// Probability measure with finitely many atoms on the real line.
///
/// Atoms are kept strictly increasing; positions closer than
/// `Config::merge_eps` are merged by adding their weights. Zero-weight atoms
/// are kept. Weights must be nonnegative and sum to one within
/// `Config::weight_sum_tol`.
class DiscreteMeasure {
 public:
  DiscreteMeasure() = default;

  DiscreteMeasure(std::vector<double> atoms, std::vector<double> weights,
                  const Config& cfg = {}) {
    if (atoms.size() != weights.size()) {
      throw InvalidMeasure("atoms and weights differ in length");
    }
    if (atoms.empty()) throw InvalidMeasure("measure has no atoms");
    std::vector<std::size_t> order(atoms.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return atoms[a] < atoms[b]; });
    double total = 0.0;
    for (std::size_t idx : order) {
      const double x = atoms[idx];
      const double w = weights[idx];
      if (!std::isfinite(x) || !std::isfinite(w)) {
        throw InvalidMeasure("non-finite atom or weight");
      }
      if (w < 0.0) throw InvalidMeasure("negative weight at atom " + std::to_string(x));
      total += w;
      if (!atoms_.empty() && x - atoms_.back() < cfg.merge_eps) {
        weights_.back() += w;
      } else {
        atoms_.push_back(x);
        weights_.push_back(w);
      }
    }
    if (std::abs(total - 1.0) > cfg.weight_sum_tol) {
      throw InvalidMeasure("weights sum to " + std::to_string(total) + ", expected 1");
    }
  }

  /// Builds a measure from unnormalized nonnegative weights.
  static DiscreteMeasure normalized(std::vector<double> atoms, std::vector<double> weights,
                                    const Config& cfg = {}) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw InvalidMeasure("total weight is not positive");
    for (double& w : weights) w /= total;
    return DiscreteMeasure(std::move(atoms), std::move(weights), cfg);
  }

  static DiscreteMeasure dirac(double x) { return DiscreteMeasure({x}, {1.0}); }

  std::size_t size() const { return atoms_.size(); }
  std::span<const double> atoms() const { return atoms_; }
  std::span<const double> weights() const { return weights_; }
  double atom(std::size_t i) const { return atoms_[i]; }
  double weight(std::size_t i) const { return weights_[i]; }
  double min_atom() const { return atoms_.front(); }
  double max_atom() const { return atoms_.back(); }

  /// Index of the atom at position x (within merge_eps), or size() if absent.
  std::size_t find(double x, double eps = 1e-12) const {
    auto it = std::lower_bound(atoms_.begin(), atoms_.end(), x - eps);
    if (it != atoms_.end() && std::abs(*it - x) <= eps) {
      return static_cast<std::size_t>(it - atoms_.begin());
    }
    return size();
  }

  friend bool operator==(const DiscreteMeasure&, const DiscreteMeasure&) = default;

 private:
  std::vector<double> atoms_;
  std::vector<double> weights_;
};

inline double mean(const DiscreteMeasure& m) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) s += m.weight(i) * m.atom(i);
  return s;
}

inline double moment(const DiscreteMeasure& m, int k) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) s += m.weight(i) * std::pow(m.atom(i), k);
  return s;
}

inline double variance(const DiscreteMeasure& m) {
  const double mu = mean(m);
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double d = m.atom(i) - mu;
    s += m.weight(i) * d * d;
  }
  return s;
}

/// U_m(t) = sum_i w_i |t - x_i|, the potential function of m.
inline double potential(const DiscreteMeasure& m, double t) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) s += m.weight(i) * std::abs(t - m.atom(i));
  return s;
}

enum class OrderStrictness {
  Tolerant,  ///< tol applies to the mean gap and to every potential comparison
  Strict,    ///< tol applies to the mean gap only; potentials compared exactly
};

struct ConvexOrderReport {
  bool holds = false;
  double mean_gap = 0.0;
  /// max_t (U_a(t) - U_b(t)) over the tested points.
  double worst_excess = 0.0;
  double worst_point = 0.0;
};

/// Tests a <=_c b. Both potentials are piecewise linear with kinks at atoms,
/// so checking at the union of atoms is exact.
inline ConvexOrderReport convex_order_check(const DiscreteMeasure& a, const DiscreteMeasure& b,
                                            double tol = 1e-9,
                                            OrderStrictness strictness = OrderStrictness::Tolerant) {
  ConvexOrderReport r;
  r.mean_gap = std::abs(mean(a) - mean(b));
  r.worst_excess = -std::numeric_limits<double>::infinity();
  auto probe = [&](double t) {
    const double excess = potential(a, t) - potential(b, t);
    if (excess > r.worst_excess) {
      r.worst_excess = excess;
      r.worst_point = t;
    }
  };
  for (double t : a.atoms()) probe(t);
  for (double t : b.atoms()) probe(t);
  const double slack = strictness == OrderStrictness::Strict ? 0.0 : tol;
  r.holds = r.mean_gap <= tol && r.worst_excess <= slack;
  return r;
}

inline bool convex_order_leq(const DiscreteMeasure& a, const DiscreteMeasure& b, double tol = 1e-9,
                             OrderStrictness strictness = OrderStrictness::Tolerant) {
  return convex_order_check(a, b, tol, strictness).holds;
}

/// Total-variation distance (half L1) between two discrete measures.
inline double total_variation(const DiscreteMeasure& a, const DiscreteMeasure& b,
                              double eps = 1e-12) {
  double s = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    if (j == b.size() || (i < a.size() && a.atom(i) < b.atom(j) - eps)) {
      s += a.weight(i++);
    } else if (i == a.size() || b.atom(j) < a.atom(i) - eps) {
      s += b.weight(j++);
    } else {
      s += std::abs(a.weight(i++) - b.weight(j++));
    }
  }
  return 0.5 * s;
}

}  // namespace motbounds
