#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace shadow {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration: bad flags, unknown columns, malformed formulas.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data violates a precondition (missing shadow value, bad numerics).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Estimation could not produce an answer.
class EstimationError : public Error {
 public:
  using Error::Error;
};

class SingularJacobianError : public EstimationError {
 public:
  SingularJacobianError(const std::string& what, double condition)
      : EstimationError(what + " (condition number " + std::to_string(condition) + ")"),
        condition_(condition) {}
  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

class RankDeficientError : public EstimationError {
 public:
  RankDeficientError(const std::string& what, std::vector<std::string> columns);
  const std::vector<std::string>& columns() const noexcept { return columns_; }

 private:
  std::vector<std::string> columns_;
};

/// exp{OR} normalizer is not finite for the requested tilt.
class TiltOverflowError : public EstimationError {
 public:
  using EstimationError::EstimationError;
};

class NonIdentifiedError : public Error {
 public:
  using Error::Error;
};

class InfeasibleError : public Error {
 public:
  using Error::Error;
};

}  // namespace shadow
