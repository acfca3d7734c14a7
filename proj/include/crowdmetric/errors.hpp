#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace crowdmetric {

// Argument and precondition violations use std::invalid_argument directly.

// Raised when an eigen/singular value decomposition does not converge or
// produces non-finite values.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The stacked measurement system lacks full column rank, so (M, V) cannot
// be recovered from unquantized measurements.
class UnidentifiableError : public std::runtime_error {
 public:
  UnidentifiableError(std::size_t rank, std::size_t required)
      : std::runtime_error("measurement system is rank deficient: rank " +
                           std::to_string(rank) + " < " +
                           std::to_string(required)),
        rank_(rank),
        required_(required) {}

  std::size_t rank() const { return rank_; }
  std::size_t required() const { return required_; }

 private:
  std::size_t rank_;
  std::size_t required_;
};

// The ERM solver hit a non-finite objective. Carries the objective values
// seen up to the failure.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, std::vector<double> trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}

  const std::vector<double>& trace() const { return trace_; }

 private:
  std::vector<double> trace_;
};

}  // namespace crowdmetric
