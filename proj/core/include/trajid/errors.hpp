#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Core>

namespace trajid {

// Base for every error thrown by the library. The CLI maps subclasses onto
// process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or malformed input (exit code 1).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Dimension mismatch between weights, shapes, or vectors.
class ShapeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Non-finite value produced during a computation (exit code 2).
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::size_t step, Eigen::VectorXd snapshot = {})
      : Error(what + " (step " + std::to_string(step) + ")"),
        step_(step),
        snapshot_(std::move(snapshot)) {}

  std::size_t step() const noexcept { return step_; }
  const Eigen::VectorXd& snapshot() const noexcept { return snapshot_; }

 private:
  std::size_t step_;
  Eigen::VectorXd snapshot_;
};

// Adaptive step control could not meet tolerance above min_step.
class StiffnessError : public NumericError {
 public:
  using NumericError::NumericError;
};

// A trajectory ran out of integration time before reaching an equilibrium.
// Carries the best point seen so that callers can keep it.
class BudgetExceeded : public Error {
 public:
  BudgetExceeded(const std::string& what, Eigen::VectorXd best, double best_cost)
      : Error(what), best_(std::move(best)), best_cost_(best_cost) {}

  const Eigen::VectorXd& best() const noexcept { return best_; }
  double best_cost() const noexcept { return best_cost_; }

 private:
  Eigen::VectorXd best_;
  double best_cost_;
};

// Start point violates the box bounds |x_i| <= l_i.
class InfeasibleStart : public ConfigError {
 public:
  InfeasibleStart(const std::string& what, std::size_t index)
      : ConfigError(what + " (index " + std::to_string(index) + ")"), index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

// Constraint Jacobian lost rank: some (x_i, s_i) pair collapsed to the origin.
class ManifoldSingularity : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace trajid
