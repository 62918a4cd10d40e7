#pragma once

#include <stdexcept>
#include <string>

namespace goodwill {

/// Base class of all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: bad grid, bad parameters, unparsable configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// The supplied data violate one of the standing assumptions of the
/// control problem (detected by sampling, never proven).
class AssumptionViolation : public Error {
 public:
  using Error::Error;
};

/// The sign pattern of D_r Q on the grid is not a single +/- crossing.
class NonMonotoneSignPattern : public AssumptionViolation {
 public:
  using AssumptionViolation::AssumptionViolation;
};

/// A numerical procedure failed: quadrature did not converge, ODE step
/// underflow, root not bracketed, or a post-construction invariant broke.
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace goodwill
