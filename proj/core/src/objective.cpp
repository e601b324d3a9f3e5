#include "trajid/objective.hpp"

namespace trajid {

Eigen::VectorXd ResidualModel::gradient(const Eigen::VectorXd& x) const {
  return jacobian(x).transpose() * residuals(x);
}

double ResidualModel::cost(const Eigen::VectorXd& x) const {
  return 0.5 * residuals(x).squaredNorm();
}

Eigen::VectorXd RnnResidualModel::residuals(const Eigen::VectorXd& x) const {
  return trajid::residuals(x, system_);
}

Eigen::MatrixXd RnnResidualModel::jacobian(const Eigen::VectorXd& x) const {
  return residual_jacobian(x, system_);
}

Eigen::VectorXd RnnResidualModel::gradient(const Eigen::VectorXd& x) const {
  return cost_gradient(x, system_);
}

FunctionResidualModel double_well_model() {
  return FunctionResidualModel(
      1,
      [](const Eigen::VectorXd& x) {
        Eigen::VectorXd h(1);
        h[0] = x[0] * x[0] - 1.0;
        return h;
      },
      [](const Eigen::VectorXd& x) {
        Eigen::MatrixXd j(1, 1);
        j(0, 0) = 2.0 * x[0];
        return j;
      });
}

}  // namespace trajid
