#pragma once

#include <stdexcept>
#include <string>

namespace motbounds {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidMeasure : public Error {
 public:
  using Error::Error;
};

/// Malformed LP, coupling or argument shapes.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// The simplex ran out of safe pivots or iterations.
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

class ConvexOrderViolation : public Error {
 public:
  using Error::Error;
};

class ConditionalConvexOrderViolation : public Error {
 public:
  ConditionalConvexOrderViolation(double x, const std::string& what)
      : Error(what), x_atom(x) {}
  double x_atom;
};

class MarginalMismatch : public Error {
 public:
  using Error::Error;
};

/// A constrained subproblem has no feasible point.
class Infeasible : public Error {
 public:
  using Error::Error;
};

/// A per-y subproblem of the overlapping-marginals solver failed.
class SubproblemInfeasible : public Infeasible {
 public:
  SubproblemInfeasible(double y, const std::string& what)
      : Infeasible(what), y_atom(y) {}
  double y_atom;
};

class DegenerateBracket : public Error {
 public:
  using Error::Error;
};

class SupportViolation : public Error {
 public:
  using Error::Error;
};

class TooFewStrikes : public Error {
 public:
  using Error::Error;
};

class AllMassClipped : public Error {
 public:
  using Error::Error;
};

class RepairInfeasible : public Error {
 public:
  using Error::Error;
};

/// Input files that do not parse. `line` is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line_no = 0)
      : Error(what), line(line_no) {}
  std::size_t line;
};

/// Broken internal invariant; never expected on valid input.
class InternalError : public Error {
 public:
  using Error::Error;
};

}  // namespace motbounds
