#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "motbounds/errors.hpp"

namespace motbounds {

enum class Sense { Minimize, Maximize };

inline Sense flip(Sense s) { return s == Sense::Minimize ? Sense::Maximize : Sense::Minimize; }
inline const char* to_string(Sense s) { return s == Sense::Minimize ? "min" : "max"; }

/// Equality-form linear program:  opt c^T x  s.t.  A x = b,  x >= 0.
struct LinearProgram {
  Eigen::VectorXd objective;
  Eigen::MatrixXd constraints;
  Eigen::VectorXd rhs;
  Sense sense = Sense::Minimize;

  LinearProgram() = default;
  LinearProgram(Eigen::Index rows, Eigen::Index vars, Sense s = Sense::Minimize)
      : objective(Eigen::VectorXd::Zero(vars)),
        constraints(Eigen::MatrixXd::Zero(rows, vars)),
        rhs(Eigen::VectorXd::Zero(rows)),
        sense(s) {}

  Eigen::Index num_vars() const { return objective.size(); }
  Eigen::Index num_rows() const { return rhs.size(); }

  void validate() const {
    if (constraints.rows() != rhs.size() || constraints.cols() != objective.size()) {
      throw InvalidArgument("LP dimensions inconsistent: A is " +
                            std::to_string(constraints.rows()) + "x" +
                            std::to_string(constraints.cols()) + ", |b|=" +
                            std::to_string(rhs.size()) + ", |c|=" +
                            std::to_string(objective.size()));
    }
    if (!constraints.allFinite() || !rhs.allFinite() || !objective.allFinite()) {
      throw InvalidArgument("LP data contains non-finite entries");
    }
  }
};

enum class LPStatus { Optimal, Infeasible, Unbounded };

inline const char* to_string(LPStatus s) {
  switch (s) {
    case LPStatus::Optimal: return "optimal";
    case LPStatus::Infeasible: return "infeasible";
    case LPStatus::Unbounded: return "unbounded";
  }
  return "?";
}

struct LPSolution {
  LPStatus status = LPStatus::Infeasible;
  double value = 0.0;
  Eigen::VectorXd primal;
  /// One multiplier per equality row, signed so that b^T duals = value.
  Eigen::VectorXd duals;
  /// Basic structural variables at termination.
  std::vector<Eigen::Index> basis;
  std::size_t iterations = 0;

  bool optimal() const { return status == LPStatus::Optimal; }
};

struct SimplexOptions {
  /// Candidate pivots must exceed this times max(1, |column|_inf).
  double pivot_tol = 1e-9;
  /// Reduced costs above -opt_tol * (1 + |c|_inf) count as nonnegative.
  double opt_tol = 1e-9;
  /// Phase-one residual allowed, scaled by 1 + |b|_inf.
  double feas_tol = 1e-8;
  /// Basis inverse is recomputed from scratch this often.
  std::size_t refactor_every = 64;
  /// Switch to Bland's rule after this many multiples of (m + n) iterations.
  std::size_t bland_after = 5;
  /// Hard cap, in multiples of (m + n), before reporting numerical failure.
  std::size_t max_iter_factor = 60;
};

namespace detail {

/// Dense revised simplex on a column-compressed copy of A. Columns
/// n..n+m-1 are the phase-one artificials.
class RevisedSimplex {
 public:
  RevisedSimplex(const LinearProgram& lp, const SimplexOptions& opt) : opt_(opt) {
    lp.validate();
    m_ = lp.num_rows();
    n_ = lp.num_vars();
    row_sign_.assign(static_cast<std::size_t>(m_), 1.0);
    b_ = lp.rhs;
    for (Eigen::Index r = 0; r < m_; ++r) {
      if (b_(r) < 0.0) {
        row_sign_[static_cast<std::size_t>(r)] = -1.0;
        b_(r) = -b_(r);
      }
    }
    col_start_.reserve(static_cast<std::size_t>(n_ + 1));
    col_start_.push_back(0);
    for (Eigen::Index j = 0; j < n_; ++j) {
      for (Eigen::Index r = 0; r < m_; ++r) {
        const double v = lp.constraints(r, j);
        if (v != 0.0) {
          row_idx_.push_back(r);
          val_.push_back(v * row_sign_[static_cast<std::size_t>(r)]);
        }
      }
      col_start_.push_back(row_idx_.size());
    }
    cost_ = lp.objective;
    if (lp.sense == Sense::Maximize) cost_ = -cost_;
    maximize_ = lp.sense == Sense::Maximize;
    original_cost_ = lp.objective;
  }

  LPSolution run() {
    LPSolution sol;
    if (m_ == 0) return solve_without_rows();

    basis_.resize(static_cast<std::size_t>(m_));
    is_basic_.assign(static_cast<std::size_t>(n_ + m_), false);
    for (Eigen::Index r = 0; r < m_; ++r) {
      basis_[static_cast<std::size_t>(r)] = n_ + r;
      is_basic_[static_cast<std::size_t>(n_ + r)] = true;
    }
    binv_ = Eigen::MatrixXd::Identity(m_, m_);
    xb_ = b_;

    // Phase one: minimise the sum of artificials.
    phase_cost_ = Eigen::VectorXd::Zero(n_ + m_);
    phase_cost_.tail(m_).setOnes();
    allow_artificial_entry_ = false;
    const auto p1 = iterate();
    if (p1 != LPStatus::Optimal) {
      throw InternalError("phase one cannot be unbounded");
    }
    double infeas = 0.0;
    for (Eigen::Index r = 0; r < m_; ++r) {
      if (basis_[static_cast<std::size_t>(r)] >= n_) infeas += std::max(0.0, xb_(r));
    }
    if (infeas > opt_.feas_tol * (1.0 + b_.lpNorm<Eigen::Infinity>())) {
      sol.status = LPStatus::Infeasible;
      sol.iterations = iterations_;
      return sol;
    }
    drive_out_artificials();

    // Phase two.
    phase_cost_ = Eigen::VectorXd::Zero(n_ + m_);
    phase_cost_.head(n_) = cost_;
    const auto p2 = iterate();
    sol.iterations = iterations_;
    if (p2 == LPStatus::Unbounded) {
      sol.status = LPStatus::Unbounded;
      return sol;
    }
    return extract();
  }

 private:
  using Index = Eigen::Index;

  LPSolution solve_without_rows() {
    LPSolution sol;
    for (Index j = 0; j < n_; ++j) {
      if (cost_(j) < 0.0) {
        sol.status = LPStatus::Unbounded;
        return sol;
      }
    }
    sol.status = LPStatus::Optimal;
    sol.primal = Eigen::VectorXd::Zero(n_);
    sol.duals = Eigen::VectorXd::Zero(0);
    return sol;
  }

  // Column j of the working matrix (artificials are unit columns).
  template <class F>
  void for_column(Index j, F&& f) const {
    if (j >= n_) {
      f(j - n_, 1.0);
      return;
    }
    for (std::size_t p = col_start_[static_cast<std::size_t>(j)];
         p < col_start_[static_cast<std::size_t>(j) + 1]; ++p) {
      f(row_idx_[p], val_[p]);
    }
  }

  Eigen::VectorXd ftran(Index j) const {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(m_);
    for_column(j, [&](Index r, double v) { a.noalias() += v * binv_.col(r); });
    return a;
  }

  double dot_column(const Eigen::VectorXd& y, Index j) const {
    double s = 0.0;
    for_column(j, [&](Index r, double v) { s += y(r) * v; });
    return s;
  }

  void refactor() {
    Eigen::MatrixXd basis_matrix = Eigen::MatrixXd::Zero(m_, m_);
    for (Index r = 0; r < m_; ++r) {
      for_column(basis_[static_cast<std::size_t>(r)],
                 [&](Index row, double v) { basis_matrix(row, r) = v; });
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(basis_matrix);
    if (lu.rank() < m_) {
      throw NumericalFailure("basis matrix became singular during refactorisation");
    }
    binv_ = lu.inverse();
    xb_.noalias() = binv_ * b_;
  }

  void pivot(Index entering, Index leave_row, const Eigen::VectorXd& alpha) {
    const double a_r = alpha(leave_row);
    const double step = std::max(0.0, xb_(leave_row)) / a_r;
    xb_ -= step * alpha;
    xb_(leave_row) = step;
    binv_.row(leave_row) /= a_r;
    Eigen::RowVectorXd pivot_row = binv_.row(leave_row);
    Eigen::VectorXd col = alpha;
    col(leave_row) = 0.0;
    binv_.noalias() -= col * pivot_row;
    is_basic_[static_cast<std::size_t>(basis_[static_cast<std::size_t>(leave_row)])] = false;
    basis_[static_cast<std::size_t>(leave_row)] = entering;
    is_basic_[static_cast<std::size_t>(entering)] = true;
    ++iterations_;
    if (++since_refactor_ >= opt_.refactor_every) {
      refactor();
      since_refactor_ = 0;
    }
  }

  LPStatus iterate() {
    const double cost_scale = 1.0 + phase_cost_.lpNorm<Eigen::Infinity>();
    const double dtol = opt_.opt_tol * cost_scale;
    const std::size_t size = static_cast<std::size_t>(m_ + n_);
    const std::size_t bland_start = opt_.bland_after * size;
    const std::size_t cap = opt_.max_iter_factor * size + 1000;
    std::size_t local = 0;
    bool verified = false;
    Eigen::VectorXd cb(m_);
    for (;;) {
      if (local > cap) {
        throw NumericalFailure("simplex iteration limit exhausted (" + std::to_string(cap) + ")");
      }
      const bool bland = local >= bland_start;
      for (Index r = 0; r < m_; ++r) cb(r) = phase_cost_(basis_[static_cast<std::size_t>(r)]);
      const Eigen::VectorXd y = binv_.transpose() * cb;

      Index entering = -1;
      double best = -dtol;
      const Index limit = allow_artificial_entry_ ? n_ + m_ : n_;
      for (Index j = 0; j < limit; ++j) {
        if (is_basic_[static_cast<std::size_t>(j)]) continue;
        const double d = phase_cost_(j) - dot_column(y, j);
        if (d < best) {
          best = d;
          entering = j;
          if (bland) break;
        }
      }
      if (entering < 0) {
        // Confirm optimality on a fresh factorisation before stopping.
        if (verified || since_refactor_ == 0) return LPStatus::Optimal;
        refactor();
        since_refactor_ = 0;
        verified = true;
        continue;
      }
      verified = false;

      const Eigen::VectorXd alpha = ftran(entering);
      const double ptol = opt_.pivot_tol * std::max(1.0, alpha.lpNorm<Eigen::Infinity>());
      Index leave = -1;
      double best_ratio = std::numeric_limits<double>::infinity();
      for (Index r = 0; r < m_; ++r) {
        const double a = alpha(r);
        if (a <= ptol) continue;
        const double ratio = std::max(0.0, xb_(r)) / a;
        if (leave < 0 || ratio < best_ratio - 1e-12 * (1.0 + best_ratio)) {
          leave = r;
          best_ratio = ratio;
        } else if (ratio <= best_ratio + 1e-12 * (1.0 + best_ratio)) {
          const bool better =
              bland ? basis_[static_cast<std::size_t>(r)] < basis_[static_cast<std::size_t>(leave)]
                    : a > alpha(leave);
          if (better) {
            leave = r;
            best_ratio = std::min(best_ratio, ratio);
          }
        }
      }
      if (leave < 0) return LPStatus::Unbounded;
      pivot(entering, leave, alpha);
      ++local;
    }
  }

  void drive_out_artificials() {
    for (Index r = 0; r < m_; ++r) {
      if (basis_[static_cast<std::size_t>(r)] < n_) continue;
      const Eigen::VectorXd rho = binv_.row(r).transpose();
      Index best_j = -1;
      double best_abs = 1e-7;
      for (Index j = 0; j < n_; ++j) {
        if (is_basic_[static_cast<std::size_t>(j)]) continue;
        const double v = std::abs(dot_column(rho, j));
        if (v > best_abs) {
          best_abs = v;
          best_j = j;
        }
      }
      if (best_j < 0) continue;  // redundant row; the artificial stays at zero
      const Eigen::VectorXd alpha = ftran(best_j);
      const double a_r = alpha(r);
      xb_(r) = 0.0;
      // Degenerate pivot: a negative pivot element is fine at zero level.
      binv_.row(r) /= a_r;
      Eigen::RowVectorXd pivot_row = binv_.row(r);
      Eigen::VectorXd col = alpha;
      col(r) = 0.0;
      binv_.noalias() -= col * pivot_row;
      is_basic_[static_cast<std::size_t>(basis_[static_cast<std::size_t>(r)])] = false;
      basis_[static_cast<std::size_t>(r)] = best_j;
      is_basic_[static_cast<std::size_t>(best_j)] = true;
    }
    refactor();
    since_refactor_ = 0;
  }

  LPSolution extract() {
    LPSolution sol;
    sol.status = LPStatus::Optimal;
    sol.iterations = iterations_;
    sol.primal = Eigen::VectorXd::Zero(n_);
    for (Index r = 0; r < m_; ++r) {
      const Index j = basis_[static_cast<std::size_t>(r)];
      if (j < n_) {
        sol.primal(j) = std::max(0.0, xb_(r));
        sol.basis.push_back(j);
      }
    }
    std::sort(sol.basis.begin(), sol.basis.end());
    Eigen::VectorXd cb(m_);
    for (Index r = 0; r < m_; ++r) {
      const Index j = basis_[static_cast<std::size_t>(r)];
      cb(r) = j < n_ ? cost_(j) : 0.0;
    }
    Eigen::VectorXd y = binv_.transpose() * cb;
    for (Index r = 0; r < m_; ++r) y(r) *= row_sign_[static_cast<std::size_t>(r)];
    if (maximize_) y = -y;
    sol.duals = std::move(y);
    sol.value = original_cost_.dot(sol.primal);
    return sol;
  }

  SimplexOptions opt_;
  Index m_ = 0;
  Index n_ = 0;
  std::vector<double> row_sign_;
  Eigen::VectorXd b_;
  std::vector<std::size_t> col_start_;
  std::vector<Index> row_idx_;
  std::vector<double> val_;
  Eigen::VectorXd cost_;
  Eigen::VectorXd original_cost_;
  bool maximize_ = false;

  std::vector<Index> basis_;
  std::vector<bool> is_basic_;
  Eigen::MatrixXd binv_;
  Eigen::VectorXd xb_;
  Eigen::VectorXd phase_cost_;
  bool allow_artificial_entry_ = false;
  std::size_t iterations_ = 0;
  std::size_t since_refactor_ = 0;
};

}  // namespace detail

/// Solves an equality-form LP with the revised simplex method.
///
/// Infeasible and unbounded problems are reported through the status.
/// Dantzig pricing switches to Bland's rule after bland_after * (m + n)
/// iterations; the pivot sequence depends only on the input.
/// Throws NumericalFailure when the basis degenerates or the iteration cap is hit.
inline LPSolution solve(const LinearProgram& lp, const SimplexOptions& opt = {}) {
  detail::RevisedSimplex simplex(lp, opt);
  return simplex.run();
}

struct LexicographicSolution {
  /// Solution of the original problem.
  LPSolution primary;
  /// Point of the primary optimal face optimising the secondary objective.
  /// Its `value` is the secondary objective value.
  LPSolution secondary;
  /// Primary objective evaluated at secondary.primal.
  double primary_value_at_point = 0.0;
};

/// Second stage of a lexicographic solve, given an optimal primary solution.
/// The primary objective is appended as an equality row fixed at its optimum.
inline LexicographicSolution solve_lexicographic(const LinearProgram& lp, const LPSolution& primary,
                                                 const Eigen::VectorXd& secondary, Sense sense2,
                                                 const SimplexOptions& opt = {}) {
  if (secondary.size() != lp.num_vars()) {
    throw InvalidArgument("secondary objective has wrong length");
  }
  LexicographicSolution out;
  out.primary = primary;
  if (!primary.optimal()) {
    out.secondary = primary;
    return out;
  }
  const double scale = std::max(1.0, lp.objective.lpNorm<Eigen::Infinity>());
  LinearProgram face(lp.num_rows() + 1, lp.num_vars(), sense2);
  face.constraints.topRows(lp.num_rows()) = lp.constraints;
  face.constraints.row(lp.num_rows()) = lp.objective.transpose() / scale;
  face.rhs.head(lp.num_rows()) = lp.rhs;
  face.rhs(lp.num_rows()) = primary.value / scale;
  face.objective = secondary;
  out.secondary = solve(face, opt);
  if (out.secondary.status == LPStatus::Infeasible) {
    throw InternalError("optimal face reported infeasible");
  }
  if (out.secondary.optimal()) {
    out.primary_value_at_point = lp.objective.dot(out.secondary.primal);
    out.secondary.duals.conservativeResize(lp.num_rows() + 1);
  }
  return out;
}

/// Solves lp, then optimises `secondary` over its optimal face.
inline LexicographicSolution solve_lexicographic(const LinearProgram& lp,
                                                 const Eigen::VectorXd& secondary, Sense sense2,
                                                 const SimplexOptions& opt = {}) {
  return solve_lexicographic(lp, solve(lp, opt), secondary, sense2, opt);
}

/// Largest |A x - b|.
inline double primal_residual(const LinearProgram& lp, const Eigen::VectorXd& x) {
  if (lp.num_rows() == 0) return 0.0;
  return (lp.constraints * x - lp.rhs).lpNorm<Eigen::Infinity>();
}

/// Plain-text dump: sense and sizes, the objective row, then one line per
/// constraint ending in "= rhs". Numbers use 17 significant digits.
inline void write_lp_text(std::ostream& os, const LinearProgram& lp) {
  const auto old_flags = os.flags();
  const auto old_prec = os.precision();
  os << std::setprecision(17);
  os << to_string(lp.sense) << ' ' << lp.num_vars() << ' ' << lp.num_rows() << '\n';
  for (Eigen::Index j = 0; j < lp.num_vars(); ++j) {
    os << (j ? " " : "") << lp.objective(j);
  }
  os << '\n';
  for (Eigen::Index r = 0; r < lp.num_rows(); ++r) {
    for (Eigen::Index j = 0; j < lp.num_vars(); ++j) {
      os << (j ? " " : "") << lp.constraints(r, j);
    }
    os << " = " << lp.rhs(r) << '\n';
  }
  os.flags(old_flags);
  os.precision(old_prec);
}

}  // namespace motbounds
