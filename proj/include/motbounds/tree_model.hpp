#pragma once

#include <cmath>

#include "motbounds/config.hpp"
#include "motbounds/errors.hpp"
#include "motbounds/measure.hpp"
#include "motbounds/mot.hpp"
#include "motbounds/structure.hpp"

namespace motbounds {

/// Benchmark model price: each step is the martingale coupling minimising
/// E|increment|^p, the steps are glued Markovianly, and the full cost is
/// integrated against the glued plan. Ties between deviation-optimal
/// couplings follow the simplex pivot order.
struct TreeResult {
  int p = 1;
  double price = 0.0;
  /// Minimal deviation of each step.
  double deviation_xy = 0.0;
  double deviation_yz = 0.0;
  Coupling3 coupling;
};

inline TreeResult tree_price(const DiscreteMeasure& mx, const DiscreteMeasure& my,
                             const DiscreteMeasure& mz, int p, const CostSpec& cost, double eps,
                             const Config& cfg = {}) {
  if (p < 1 || p > 3) throw InvalidArgument("tree model exponent must be 1, 2 or 3");
  const auto dev = [p](double a, double b) { return std::pow(std::abs(b - a), p); };
  const auto xy = solve_mot2(mx, my, dev, Sense::Minimize, cfg);
  const auto yz = solve_mot2(my, mz, dev, Sense::Minimize, cfg);
  TreeResult res;
  res.p = p;
  res.deviation_xy = xy.value;
  res.deviation_yz = yz.value;
  res.coupling = markov_glue(xy.coupling, yz.coupling, cfg);
  res.price = res.coupling.integrate(cost.with_epsilon(eps).as_function());
  return res;
}

}  // namespace motbounds
