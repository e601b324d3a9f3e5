#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "trajid/rnn.hpp"

namespace trajid {

// ||a - b||_inf / max(||a||_inf, ||b||_inf, 1e-12).
double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Central differences with per-coordinate step h * (1 + |x_i|).
Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x, double h = 1e-6);
Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x, double h = 1e-6);

struct GradcheckCase {
  NetworkShape shape;
  std::size_t samples = 0;
  double gradient_error = 0.0;  // cost_gradient vs central differences of sse / 2
  double jacobian_error = 0.0;  // residual_jacobian vs central differences of residuals
  double adjoint_error = 0.0;   // cost_gradient vs J^T h
  double field_error = 0.0;     // ||qgs_field + cost_gradient||_inf
};

struct GradcheckReport {
  std::vector<GradcheckCase> cases;
  double max_gradient_error = 0.0;
  double max_jacobian_error = 0.0;
  double max_adjoint_error = 0.0;
  double max_field_error = 0.0;

  nlohmann::json to_json() const;
};

// Random networks with n <= 3 inputs, m <= 4 hidden units, one output and
// at most 50 samples.
GradcheckReport run_gradcheck(std::size_t configurations = 20, std::uint64_t seed = 0);

}  // namespace trajid
