#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "motbounds/config.hpp"
#include "motbounds/coupling.hpp"
#include "motbounds/errors.hpp"
#include "motbounds/lp.hpp"
#include "motbounds/measure.hpp"
#include "motbounds/parallel.hpp"

namespace motbounds {

using PairCost = std::function<double(double, double)>;
using TripleCost = std::function<double(double, double, double)>;

/// Pairwise three-period cost c(x,y,z) = c1(x,y) + c2(y,z) + epsilon * c3(x,z).
struct CostSpec {
  PairCost c1;
  PairCost c2;
  PairCost c3;
  double epsilon = 0.0;

  double operator()(double x, double y, double z) const {
    double v = 0.0;
    if (c1) v += c1(x, y);
    if (c2) v += c2(y, z);
    if (c3 && epsilon != 0.0) v += epsilon * c3(x, z);
    return v;
  }

  CostSpec with_epsilon(double eps) const {
    CostSpec out = *this;
    out.epsilon = eps;
    return out;
  }

  TripleCost as_function() const {
    return [spec = *this](double x, double y, double z) { return spec(x, y, z); };
  }

  /// c3 lifted to (x, y, z).
  TripleCost perturbation() const {
    return [f = c3](double x, double, double z) { return f ? f(x, z) : 0.0; };
  }
};

/// Semi-static sub-replication (or super-replication, for Maximize)
/// portfolio read off the LP duals:
///   u(x) + v(y) + w(z) + g(x)(y - x) + h(x,y)(z - y)  <=  c(x,y,z).
/// Two-period certificates leave `w` and `h` empty.
struct DualCertificate {
  Sense sense = Sense::Minimize;
  std::vector<double> x_atoms, y_atoms, z_atoms;
  std::vector<double> u, v, w, g;
  /// Row-major over (x-index, y-index).
  std::vector<double> h;

  bool three_period() const { return !z_atoms.empty(); }

  double portfolio(std::size_t i, std::size_t j, std::size_t k = 0) const {
    double s = u[i] + v[j] + g[i] * (y_atoms[j] - x_atoms[i]);
    if (three_period()) {
      s += w[k] + h[i * y_atoms.size() + j] * (z_atoms[k] - y_atoms[j]);
    }
    return s;
  }

  /// Price of the static part against the marginal weights.
  double static_value(const DiscreteMeasure& mx, const DiscreteMeasure& my,
                      const DiscreteMeasure* mz = nullptr) const {
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * mx.weight(i);
    for (std::size_t j = 0; j < v.size(); ++j) s += v[j] * my.weight(j);
    if (mz) {
      for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * mz->weight(k);
    }
    return s;
  }
};

struct CertificateCheck {
  bool ok = false;
  /// Largest violation of the hedging inequality (positive = violated).
  double worst_violation = -std::numeric_limits<double>::infinity();
  std::array<std::size_t, 3> worst_cell{};
  double allowed = 0.0;
};

/// Verifies the hedging inequality on the full atom grid. The allowed slack
/// is cfg.certificate_tol * (1 + max |c|) over the grid.
inline CertificateCheck check_certificate(const DualCertificate& cert, const TripleCost& cost,
                                          const Config& cfg = {}) {
  CertificateCheck chk;
  const std::size_t nk = cert.three_period() ? cert.z_atoms.size() : 1;
  double cmax = 0.0;
  for (std::size_t i = 0; i < cert.x_atoms.size(); ++i) {
    for (std::size_t j = 0; j < cert.y_atoms.size(); ++j) {
      for (std::size_t k = 0; k < nk; ++k) {
        const double z = cert.three_period() ? cert.z_atoms[k] : 0.0;
        const double c = cost(cert.x_atoms[i], cert.y_atoms[j], z);
        cmax = std::max(cmax, std::abs(c));
        const double p = cert.portfolio(i, j, k);
        const double viol = cert.sense == Sense::Minimize ? p - c : c - p;
        if (viol > chk.worst_violation) {
          chk.worst_violation = viol;
          chk.worst_cell = {i, j, k};
        }
      }
    }
  }
  chk.allowed = cfg.certificate_tol * (1.0 + cmax);
  chk.ok = chk.worst_violation <= chk.allowed;
  return chk;
}

inline CertificateCheck check_certificate(const DualCertificate& cert, const PairCost& cost,
                                          const Config& cfg = {}) {
  return check_certificate(cert, [&](double x, double y, double) { return cost(x, y); }, cfg);
}

struct Mot2Result {
  double value = 0.0;
  Coupling2 coupling;
  DualCertificate certificate;
  LinearProgram lp;
  LPSolution solution;
};

struct Mot3Result {
  double value = 0.0;
  Coupling3 coupling;
  DualCertificate certificate;
  LinearProgram lp;
  LPSolution solution;
};

struct FixedBarycenterResult {
  double value = 0.0;
  Coupling2 coupling;
};

/// Record of one per-y subproblem of solve_overlapping.
struct YSubproblem {
  double y = 0.0;
  double weight = 0.0;
  double value = 0.0;
  std::size_t support_size = 0;
  bool skipped = false;
};

struct OverlapResult {
  double value = 0.0;
  Coupling3 coupling;
  std::vector<YSubproblem> log;
};

// --- LP builders ------------------------------------------------------------

/// Two-period MOT in equality form. Variable (i, j) sits at i * |Y| + j.
/// Rows: X marginal, Y marginal, martingale sum_j pi_ij (y_j - x_i) = 0.
inline LinearProgram build_mot2_lp(const DiscreteMeasure& mx, const DiscreteMeasure& my,
                                   const PairCost& cost, Sense sense) {
  const auto n = static_cast<Eigen::Index>(mx.size());
  const auto m = static_cast<Eigen::Index>(my.size());
  LinearProgram lp(2 * n + m, n * m, sense);
  for (Eigen::Index i = 0; i < n; ++i) {
    lp.rhs(i) = mx.weight(static_cast<std::size_t>(i));
    for (Eigen::Index j = 0; j < m; ++j) {
      const Eigen::Index var = i * m + j;
      const double x = mx.atom(static_cast<std::size_t>(i));
      const double y = my.atom(static_cast<std::size_t>(j));
      lp.objective(var) = cost(x, y);
      lp.constraints(i, var) = 1.0;
      lp.constraints(n + j, var) = 1.0;
      lp.constraints(n + m + i, var) = y - x;
    }
  }
  for (Eigen::Index j = 0; j < m; ++j) lp.rhs(n + j) = my.weight(static_cast<std::size_t>(j));
  return lp;
}

/// Objective vector of a three-period cost on the full grid, in the
/// variable order of build_mot3_lp.
inline Eigen::VectorXd mot3_cost_vector(const DiscreteMeasure& mx, const DiscreteMeasure& my,
                                        const DiscreteMeasure& mz, const TripleCost& cost) {
  const std::size_t n = mx.size(), m = my.size(), p = mz.size();
  Eigen::VectorXd c(static_cast<Eigen::Index>(n * m * p));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t k = 0; k < p; ++k) {
        c(static_cast<Eigen::Index>((i * m + j) * p + k)) = cost(mx.atom(i), my.atom(j), mz.atom(k));
      }
    }
  }
  return c;
}

/// Three-period MOT on the full grid product. Variable (i, j, k) sits at
/// (i * |Y| + j) * |Z| + k. Rows, in order: X, Y, Z marginals; first-step
/// martingale per i; second-step martingale per (i, j), both in mass-weighted form.
inline LinearProgram build_mot3_lp(const DiscreteMeasure& mx, const DiscreteMeasure& my,
                                   const DiscreteMeasure& mz, const TripleCost& cost, Sense sense) {
  const auto n = static_cast<Eigen::Index>(mx.size());
  const auto m = static_cast<Eigen::Index>(my.size());
  const auto p = static_cast<Eigen::Index>(mz.size());
  const Eigen::Index rows = n + m + p + n + n * m;
  LinearProgram lp(rows, n * m * p, sense);
  lp.objective = mot3_cost_vector(mx, my, mz, cost);
  const Eigen::Index r_y = n, r_z = n + m, r_m1 = n + m + p, r_m2 = r_m1 + n;
  for (Eigen::Index i = 0; i < n; ++i) lp.rhs(i) = mx.weight(static_cast<std::size_t>(i));
  for (Eigen::Index j = 0; j < m; ++j) lp.rhs(r_y + j) = my.weight(static_cast<std::size_t>(j));
  for (Eigen::Index k = 0; k < p; ++k) lp.rhs(r_z + k) = mz.weight(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = mx.atom(static_cast<std::size_t>(i));
    for (Eigen::Index j = 0; j < m; ++j) {
      const double y = my.atom(static_cast<std::size_t>(j));
      for (Eigen::Index k = 0; k < p; ++k) {
        const double z = mz.atom(static_cast<std::size_t>(k));
        const Eigen::Index var = (i * m + j) * p + k;
        lp.constraints(i, var) = 1.0;
        lp.constraints(r_y + j, var) = 1.0;
        lp.constraints(r_z + k, var) = 1.0;
        lp.constraints(r_m1 + i, var) = y - x;
        lp.constraints(r_m2 + i * m + j, var) = z - y;
      }
    }
  }
  return lp;
}

/// Transport between sx and sz where every first-axis conditional has mean
/// `barycenter`. Variable (i, k) sits at i * |Z| + k.
inline LinearProgram build_fixed_barycenter_lp(const DiscreteMeasure& sx, const DiscreteMeasure& sz,
                                               double barycenter, const PairCost& cost, Sense sense) {
  const auto n = static_cast<Eigen::Index>(sx.size());
  const auto p = static_cast<Eigen::Index>(sz.size());
  LinearProgram lp(2 * n + p, n * p, sense);
  for (Eigen::Index i = 0; i < n; ++i) {
    lp.rhs(i) = sx.weight(static_cast<std::size_t>(i));
    for (Eigen::Index k = 0; k < p; ++k) {
      const Eigen::Index var = i * p + k;
      const double z = sz.atom(static_cast<std::size_t>(k));
      lp.objective(var) = cost(sx.atom(static_cast<std::size_t>(i)), z);
      lp.constraints(i, var) = 1.0;
      lp.constraints(n + k, var) = 1.0;
      lp.constraints(n + p + i, var) = z - barycenter;
    }
  }
  for (Eigen::Index k = 0; k < p; ++k) lp.rhs(n + k) = sz.weight(static_cast<std::size_t>(k));
  return lp;
}

// --- coupling extraction ----------------------------------------------------

inline Coupling2 coupling2_from_primal(const DiscreteMeasure& a, const DiscreteMeasure& b,
                                       const Eigen::VectorXd& primal) {
  Coupling2 c(detail::atoms_of(a), detail::atoms_of(b));
  const std::size_t m = b.size();
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < m; ++j) c.add(i, j, primal(static_cast<Eigen::Index>(i * m + j)));
  }
  return c;
}

inline Coupling3 coupling3_from_primal(const DiscreteMeasure& mx, const DiscreteMeasure& my,
                                       const DiscreteMeasure& mz, const Eigen::VectorXd& primal) {
  Coupling3 c(detail::atoms_of(mx), detail::atoms_of(my), detail::atoms_of(mz));
  const std::size_t m = my.size(), p = mz.size();
  for (std::size_t i = 0; i < mx.size(); ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t k = 0; k < p; ++k) {
        c.add(i, j, k, primal(static_cast<Eigen::Index>((i * m + j) * p + k)));
      }
    }
  }
  return c;
}

inline Eigen::VectorXd primal_from_coupling(const Coupling3& c) {
  const std::size_t m = c.y_atoms.size(), p = c.z_atoms.size();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(c.x_atoms.size() * m * p));
  for (const auto& [k, w] : c.mass) x(static_cast<Eigen::Index>((k[0] * m + k[1]) * p + k[2])) = w;
  return x;
}

namespace detail {

inline void require_convex_order(const DiscreteMeasure& a, const DiscreteMeasure& b,
                                 const char* names, const Config& cfg) {
  const auto rep = convex_order_check(a, b, cfg.tol);
  if (!rep.holds) {
    throw ConvexOrderViolation(std::string("marginals ") + names +
                               " are not in convex order: mean gap " +
                               std::to_string(rep.mean_gap) + ", potential excess " +
                               std::to_string(rep.worst_excess) + " at " +
                               std::to_string(rep.worst_point));
  }
}

inline LPSolution solve_or_throw(const LinearProgram& lp, const char* what) {
  LPSolution sol = solve(lp);
  if (sol.status == LPStatus::Infeasible) {
    throw Infeasible(std::string(what) + ": linear program is infeasible");
  }
  if (sol.status == LPStatus::Unbounded) {
    throw InternalError(std::string(what) + ": bounded problem reported unbounded");
  }
  return sol;
}

}  // namespace detail

// --- solvers ----------------------------------------------------------------

/// Optimal two-period martingale transport between mx and my.
/// Throws ConvexOrderViolation unless mx <=_c my.
inline Mot2Result solve_mot2(const DiscreteMeasure& mx, const DiscreteMeasure& my,
                             const PairCost& cost, Sense sense, const Config& cfg = {}) {
  detail::require_convex_order(mx, my, "(x, y)", cfg);
  Mot2Result res;
  res.lp = build_mot2_lp(mx, my, cost, sense);
  res.solution = detail::solve_or_throw(res.lp, "two-period MOT");
  res.coupling = coupling2_from_primal(mx, my, res.solution.primal);
  res.value = res.coupling.integrate(cost);

  const std::size_t n = mx.size(), m = my.size();
  auto& cert = res.certificate;
  const auto& y = res.solution.duals;
  cert.sense = sense;
  cert.x_atoms = detail::atoms_of(mx);
  cert.y_atoms = detail::atoms_of(my);
  cert.u.assign(y.data(), y.data() + n);
  cert.v.assign(y.data() + n, y.data() + n + m);
  cert.g.assign(y.data() + n + m, y.data() + 2 * n + m);
  return res;
}

/// Optimal three-period martingale transport with pairwise cost.
/// Throws ConvexOrderViolation unless mx <=_c my <=_c mz.
inline Mot3Result solve_mot3(const DiscreteMeasure& mx, const DiscreteMeasure& my,
                             const DiscreteMeasure& mz, const TripleCost& cost, Sense sense,
                             const Config& cfg = {}) {
  detail::require_convex_order(mx, my, "(x, y)", cfg);
  detail::require_convex_order(my, mz, "(y, z)", cfg);
  Mot3Result res;
  res.lp = build_mot3_lp(mx, my, mz, cost, sense);
  res.solution = detail::solve_or_throw(res.lp, "three-period MOT");
  res.coupling = coupling3_from_primal(mx, my, mz, res.solution.primal);
  res.value = res.coupling.integrate(cost);

  const std::size_t n = mx.size(), m = my.size(), p = mz.size();
  const double* d = res.solution.duals.data();
  auto& cert = res.certificate;
  cert.sense = sense;
  cert.x_atoms = detail::atoms_of(mx);
  cert.y_atoms = detail::atoms_of(my);
  cert.z_atoms = detail::atoms_of(mz);
  std::size_t off = 0;
  cert.u.assign(d + off, d + off + n);
  off += n;
  cert.v.assign(d + off, d + off + m);
  off += m;
  cert.w.assign(d + off, d + off + p);
  off += p;
  cert.g.assign(d + off, d + off + n);
  off += n;
  cert.h.assign(d + off, d + off + n * m);
  return res;
}

inline Mot3Result solve_mot3(const DiscreteMeasure& mx, const DiscreteMeasure& my,
                             const DiscreteMeasure& mz, const CostSpec& cost, Sense sense,
                             const Config& cfg = {}) {
  return solve_mot3(mx, my, mz, cost.as_function(), sense, cfg);
}

/// Transport between sx and sz with every x-conditional centred at `barycenter`.
/// Throws Infeasible when the barycenter is outside the z-range or differs
/// from the mean of sz, or when no such coupling exists.
inline FixedBarycenterResult solve_fixed_barycenter(const DiscreteMeasure& sx,
                                                    const DiscreteMeasure& sz, double barycenter,
                                                    const PairCost& cost, Sense sense,
                                                    const Config& cfg = {}) {
  if (barycenter < sz.min_atom() - cfg.tol || barycenter > sz.max_atom() + cfg.tol) {
    throw Infeasible("barycenter " + std::to_string(barycenter) + " lies outside the z-support");
  }
  if (std::abs(mean(sz) - barycenter) > cfg.tol) {
    throw Infeasible("mean of z-marginal " + std::to_string(mean(sz)) +
                     " differs from barycenter " + std::to_string(barycenter));
  }
  const LinearProgram lp = build_fixed_barycenter_lp(sx, sz, barycenter, cost, sense);
  const LPSolution sol = detail::solve_or_throw(lp, "fixed-barycenter transport");
  FixedBarycenterResult res;
  res.coupling = coupling2_from_primal(sx, sz, sol.primal);
  res.value = res.coupling.integrate(cost);
  return res;
}

namespace detail {

inline double martingale_drift(const Coupling2& c) {
  std::vector<double> drift(c.first_atoms.size(), 0.0);
  for (const auto& [k, w] : c.mass) drift[k[0]] += w * (c.second_atoms[k[1]] - c.first_atoms[k[0]]);
  double r = 0.0;
  for (double d : drift) r = std::max(r, std::abs(d));
  return r;
}

inline void require_shared_y(const Coupling2& pxy, const Coupling2& pyz, const Config& cfg) {
  if (!same_grid(pxy.second_atoms, pyz.first_atoms, cfg.merge_eps)) {
    throw MarginalMismatch("couplings are defined on different y-grids");
  }
  const auto a = pxy.second_marginal();
  const auto b = pyz.first_marginal();
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (std::abs(a[j] - b[j]) > cfg.marginal_tol) {
      throw MarginalMismatch("y-marginals differ at y=" + std::to_string(pxy.second_atoms[j]) +
                             " by " + std::to_string(std::abs(a[j] - b[j])));
    }
  }
}

}  // namespace detail

/// Minimises (or maximises) the integral of c3(x, z) over three-period
/// martingale couplings whose (X,Y) and (Y,Z) projections are pxy and pyz.
/// The problem splits into one fixed-barycenter transport per y-atom between
/// the conditionals of X and of Z given y; subproblems run in parallel and
/// are assembled in y order.
inline OverlapResult solve_overlapping(const Coupling2& pxy, const Coupling2& pyz,
                                       const PairCost& cost3, Sense sense,
                                       const Config& cfg = {}) {
  detail::require_shared_y(pxy, pyz, cfg);
  if (detail::martingale_drift(pxy) > cfg.martingale_tol ||
      detail::martingale_drift(pyz) > cfg.martingale_tol) {
    throw InvalidArgument("overlapping-marginals input couplings must be martingales");
  }
  const auto xs_given_y = disintegrate(pxy, Axis::Y);
  const auto zs_given_y = disintegrate(pyz, Axis::X);
  if (xs_given_y.size() != zs_given_y.size()) {
    throw MarginalMismatch("y-supports of the two couplings differ");
  }
  const std::size_t count = xs_given_y.size();
  std::vector<FixedBarycenterResult> parts(count);
  std::vector<YSubproblem> log(count);
  parallel_for(count, [&](std::size_t t) {
    const auto& cx = xs_given_y[t];
    const auto& cz = zs_given_y[t];
    if (cx.index != cz.index) throw MarginalMismatch("y-supports of the two couplings differ");
    YSubproblem& entry = log[t];
    entry.y = cx.point;
    entry.weight = cx.weight;
    if (cx.weight <= cfg.mass_floor) {
      // Below the floor: keep projections exact with the product conditional.
      Coupling2 prod(std::vector<double>(cx.law.atoms().begin(), cx.law.atoms().end()),
                     std::vector<double>(cz.law.atoms().begin(), cz.law.atoms().end()));
      for (std::size_t a = 0; a < cx.law.size(); ++a) {
        for (std::size_t b = 0; b < cz.law.size(); ++b) prod.add(a, b, cx.law.weight(a) * cz.law.weight(b));
      }
      parts[t].coupling = std::move(prod);
      parts[t].value = parts[t].coupling.integrate(cost3);
      entry.skipped = true;
    } else {
      try {
        parts[t] = solve_fixed_barycenter(cx.law, cz.law, cx.point, cost3, sense, cfg);
      } catch (const Infeasible& e) {
        throw SubproblemInfeasible(cx.point, "y=" + std::to_string(cx.point) + ": " + e.what());
      }
    }
    entry.value = parts[t].value;
    entry.support_size = parts[t].coupling.mass.size();
  });

  OverlapResult out;
  out.coupling = Coupling3(pxy.first_atoms, pxy.second_atoms, pyz.second_atoms);
  for (std::size_t t = 0; t < count; ++t) {
    const auto& cx = xs_given_y[t];
    const auto& cz = zs_given_y[t];
    for (const auto& [k, w] : parts[t].coupling.mass) {
      out.coupling.add(cx.law_index[k[0]], cx.index, cz.law_index[k[1]], cx.weight * w);
    }
    out.value += cx.weight * parts[t].value;
  }
  out.log = std::move(log);
  return out;
}

}  // namespace motbounds
