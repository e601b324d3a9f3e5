#pragma once

#include <cstddef>
#include <functional>

#include <Eigen/Core>

#include "trajid/rnn.hpp"

namespace trajid {

// A least-squares objective f(x) = 0.5 * ||h(x)||^2 seen through its residual
// map. Both trainers work against this interface so that small analytic stubs
// and the recurrent network share one code path.
class ResidualModel {
 public:
  virtual ~ResidualModel() = default;

  virtual std::size_t dimension() const = 0;
  virtual Eigen::VectorXd residuals(const Eigen::VectorXd& x) const = 0;
  virtual Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const = 0;

  // J(x)^T h(x). Override when a cheaper route exists.
  virtual Eigen::VectorXd gradient(const Eigen::VectorXd& x) const;
  virtual double cost(const Eigen::VectorXd& x) const;
};

// The recurrent network's training objective over a fixed regressor table.
class RnnResidualModel final : public ResidualModel {
 public:
  explicit RnnResidualModel(ResidualSystem system) : system_(std::move(system)) {}

  std::size_t dimension() const override { return system_.shape.param_count(); }
  Eigen::VectorXd residuals(const Eigen::VectorXd& x) const override;
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const override;

  const ResidualSystem& system() const { return system_; }

 private:
  ResidualSystem system_;
};

// Residual map given by callables; used for analytic test problems.
class FunctionResidualModel final : public ResidualModel {
 public:
  using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
  using JacobianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

  FunctionResidualModel(std::size_t dimension, ResidualFn residual, JacobianFn jacobian)
      : dimension_(dimension), residual_(std::move(residual)), jacobian_(std::move(jacobian)) {}

  std::size_t dimension() const override { return dimension_; }
  Eigen::VectorXd residuals(const Eigen::VectorXd& x) const override { return residual_(x); }
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const override { return jacobian_(x); }

 private:
  std::size_t dimension_;
  ResidualFn residual_;
  JacobianFn jacobian_;
};

// h(x) = x^2 - 1 in one dimension: minima at +-1, a saddle of f at 0.
FunctionResidualModel double_well_model();

}  // namespace trajid
