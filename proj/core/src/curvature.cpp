#include "trajid/curvature.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Eigenvalues>

#include "trajid/errors.hpp"

namespace trajid {

LinearOperator hessian_operator(GradientFn gradient, Eigen::VectorXd x, double rel_step) {
  return [g = std::move(gradient), x = std::move(x), rel_step](const Eigen::VectorXd& v) {
    const double vn = v.norm();
    if (vn == 0.0) return Eigen::VectorXd::Zero(v.size()).eval();
    const double eps = rel_step * (1.0 + x.norm()) / vn;
    return ((g(x + eps * v) - g(x - eps * v)) / (2.0 * eps)).eval();
  };
}

Eigenpair smallest_eigenpair(const LinearOperator& op, std::size_t dimension,
                             std::size_t iterations, const Eigen::VectorXd& start) {
  if (dimension == 0) throw ShapeError("eigenpair of an empty operator");
  const auto d = static_cast<Eigen::Index>(dimension);
  const std::size_t kmax = std::min(iterations == 0 ? dimension : iterations, dimension);

  Eigen::VectorXd q(d);
  if (start.size() == d && start.norm() > 0.0) {
    q = start;
  } else {
    // Fixed start vector so that results are reproducible.
    std::mt19937_64 rng(0x5eed);
    std::normal_distribution<double> normal;
    for (Eigen::Index i = 0; i < d; ++i) q[i] = normal(rng);
  }
  q.normalize();

  std::vector<Eigen::VectorXd> basis;
  std::vector<double> alpha, beta;
  basis.reserve(kmax);
  basis.push_back(q);

  for (std::size_t j = 0; j < kmax; ++j) {
    Eigen::VectorXd w = op(basis[j]);
    const double a = basis[j].dot(w);
    alpha.push_back(a);
    // Full reorthogonalisation, applied twice for stability.
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : basis) w -= b.dot(w) * b;
    }
    const double b = w.norm();
    if (j + 1 == kmax || b <= 1e-12 * (1.0 + std::abs(a))) break;
    beta.push_back(b);
    basis.push_back(w / b);
  }

  const auto k = static_cast<Eigen::Index>(alpha.size());
  Eigen::MatrixXd tri = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    tri(i, i) = alpha[static_cast<std::size_t>(i)];
    if (i + 1 < k) {
      tri(i, i + 1) = tri(i + 1, i) = beta[static_cast<std::size_t>(i)];
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(tri);
  const Eigen::VectorXd coeffs = solver.eigenvectors().col(0);

  Eigenpair out;
  out.value = solver.eigenvalues()[0];
  out.vector = Eigen::VectorXd::Zero(d);
  for (Eigen::Index i = 0; i < k; ++i) out.vector += coeffs[i] * basis[static_cast<std::size_t>(i)];
  out.vector.normalize();
  Eigen::Index imax = 0;
  out.vector.cwiseAbs().maxCoeff(&imax);
  if (out.vector[imax] < 0.0) out.vector = -out.vector;
  return out;
}

}  // namespace trajid
