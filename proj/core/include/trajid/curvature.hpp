#pragma once

#include <cstddef>
#include <functional>

#include <Eigen/Core>

namespace trajid {

using LinearOperator = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using GradientFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// v -> (g(x + e v) - g(x - e v)) / (2 e), a central-difference Hessian-vector
// product. The step is scaled with ||x|| and ||v||.
LinearOperator hessian_operator(GradientFn gradient, Eigen::VectorXd x, double rel_step = 1e-5);

struct Eigenpair {
  double value = 0.0;
  Eigen::VectorXd vector;  // unit norm, largest-magnitude entry positive
};

// Smallest eigenpair of a symmetric operator by Lanczos with full
// reorthogonalisation. Exact (to rounding) when iterations >= dimension.
// An explicit `start` restricts the search to the operator's invariant
// subspace containing it (used for tangent-space curvature); when empty a
// fixed pseudo-random start is used.
Eigenpair smallest_eigenpair(const LinearOperator& op, std::size_t dimension,
                             std::size_t iterations = 30, const Eigen::VectorXd& start = {});

}  // namespace trajid
