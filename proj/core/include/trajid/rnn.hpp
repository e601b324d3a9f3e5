#pragma once

#include <cstddef>

#include <Eigen/Core>

#include "trajid/regressors.hpp"

namespace trajid {

// One-hidden-layer fully recurrent network:
//   z(k) = psi(W u(k) + S z(k-1)),  yhat(k) = V z(k).
struct NetworkShape {
  int inputs = 1;   // n
  int hidden = 1;   // m
  int outputs = 1;  // t

  // m^2 + m (n + t)
  std::size_t param_count() const;
  void validate() const;

  friend bool operator==(const NetworkShape&, const NetworkShape&) = default;
};

struct RnnWeights {
  Eigen::MatrixXd W;  // m x n
  Eigen::MatrixXd S;  // m x m
  Eigen::MatrixXd V;  // t x m

  static RnnWeights zeros(const NetworkShape& shape);
  // Throws ShapeError when the matrices disagree with `shape` or hold non-finite entries.
  void check(const NetworkShape& shape) const;
};

// Flattened weights: rows of V, then rows of W, then rows of S.
using ParamVector = Eigen::VectorXd;

ParamVector flatten(const RnnWeights& weights, const NetworkShape& shape);
RnnWeights unflatten(const ParamVector& params, const NetworkShape& shape);

// Offsets of each block inside a ParamVector.
struct ParamLayout {
  explicit ParamLayout(const NetworkShape& shape);
  std::size_t v(int row, int col) const { return v_offset + row * m + col; }
  std::size_t w(int row, int col) const { return w_offset + row * n + col; }
  std::size_t s(int row, int col) const { return s_offset + row * m + col; }

  std::size_t n, m, t;
  std::size_t v_offset, w_offset, s_offset, size;
};

// Hidden-unit nonlinearity. `derivative` is psi'(a) given a. When set,
// `slope_from_value` returns psi'(a) given psi(a) and saves a second
// evaluation of psi.
struct Activation {
  double (*value)(double);
  double (*derivative)(double);
  double (*slope_from_value)(double) = nullptr;
};

Activation tanh_activation();

struct ForwardResult {
  Eigen::MatrixXd outputs;  // t x N
  Eigen::MatrixXd states;   // m x N
};

// Runs the recurrence over every column of `inputs`. Throws NumericError
// carrying the offending step when a value becomes non-finite.
ForwardResult forward(const RnnWeights& weights, const Eigen::MatrixXd& inputs,
                      const Eigen::VectorXd& z0, Activation psi = tanh_activation());

// Training residuals for a fixed regressor table.
struct ResidualSystem {
  NetworkShape shape;
  RegressorTable table;
  Eigen::VectorXd z0;  // defaults to zero when empty
  Activation psi = tanh_activation();

  ResidualSystem(NetworkShape shape, RegressorTable table);
  ResidualSystem(NetworkShape shape, RegressorTable table, Eigen::VectorXd z0);

  // N * t; one residual per sample for scalar outputs.
  std::size_t residual_count() const;
};

// h_i = yhat(i) - y(i), stacked sample-major (all outputs of sample 0 first).
Eigen::VectorXd residuals(const ParamVector& params, const ResidualSystem& system);

// Sum of squared residuals. The trainers minimise f = sse / 2.
double sse(const ParamVector& params, const ResidualSystem& system);

// Exact Jacobian of residuals() by forward sensitivity propagation (N*t x n_p).
Eigen::MatrixXd residual_jacobian(const ParamVector& params, const ResidualSystem& system);

// Gradient of f = sse / 2, i.e. J^T h. Computed with a reverse (adjoint) sweep
// so that no N x n_p matrix is formed.
Eigen::VectorXd cost_gradient(const ParamVector& params, const ResidualSystem& system);

}  // namespace trajid
