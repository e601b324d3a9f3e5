#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "oracles.hpp"
#include "trajid/curvature.hpp"

using namespace trajid;

namespace {

Eigen::MatrixXd random_symmetric(Eigen::Index n, std::mt19937_64& rng) {
  const Eigen::MatrixXd a = oracle::gaussian(n, n, rng);
  return 0.5 * (a + a.transpose());
}

}  // namespace

TEST(Lanczos, MatchesDenseEigensolver) {
  std::mt19937_64 rng(0);
  for (Eigen::Index n : {1, 2, 5, 12, 25}) {
    const Eigen::MatrixXd A = random_symmetric(n, rng);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> dense(A);
    const Eigenpair pair =
        smallest_eigenpair([&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return A * v; },
                           static_cast<std::size_t>(n), static_cast<std::size_t>(n));
    EXPECT_NEAR(pair.value, dense.eigenvalues()[0], 1e-10) << "n = " << n;
    EXPECT_NEAR(pair.vector.norm(), 1.0, 1e-12);
    EXPECT_LT((A * pair.vector - pair.value * pair.vector).norm(), 1e-8);
  }
}

TEST(Lanczos, SignConvention) {
  const Eigen::Matrix2d A{{2.0, 0.0}, {0.0, -3.0}};
  const Eigenpair pair =
      smallest_eigenpair([&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return A * v; }, 2, 2);
  EXPECT_NEAR(pair.value, -3.0, 1e-14);
  EXPECT_NEAR(pair.vector[1], 1.0, 1e-14);
}

TEST(Lanczos, StartRestrictsToInvariantSubspace) {
  // Block-diagonal operator; a start in the first block never sees the second.
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(4, 4);
  A.topLeftCorner(2, 2) << 1.0, 0.5, 0.5, 2.0;
  A.bottomRightCorner(2, 2) << -5.0, 0.0, 0.0, -6.0;
  const Eigenpair pair = smallest_eigenpair(
      [&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return A * v; }, 4, 4,
      (Eigen::VectorXd(4) << 1.0, 0.3, 0.0, 0.0).finished());
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> block(A.topLeftCorner(2, 2));
  EXPECT_NEAR(pair.value, block.eigenvalues()[0], 1e-12);
}

TEST(HessianOperator, QuadraticIsExact) {
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd H = random_symmetric(6, rng);
  const Eigen::VectorXd b = oracle::gaussian(6, 1, rng);
  const auto op = hessian_operator(
      [&](const Eigen::VectorXd& x) -> Eigen::VectorXd { return H * x + b; }, oracle::gaussian(6, 1, rng));
  const Eigen::VectorXd v = oracle::gaussian(6, 1, rng);
  EXPECT_LT((op(v) - H * v).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(HessianOperator, DoubleWellCurvature) {
  // f = 0.5 (x^2 - 1)^2, f'' = 6 x^2 - 2.
  const GradientFn grad = [](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return Eigen::VectorXd::Constant(1, 2.0 * x[0] * (x[0] * x[0] - 1.0));
  };
  for (double x : {0.0, 0.5, 1.0, -1.3}) {
    const Eigenpair pair =
        smallest_eigenpair(hessian_operator(grad, Eigen::VectorXd::Constant(1, x)), 1, 1);
    EXPECT_NEAR(pair.value, 6 * x * x - 2, 1e-6) << "x = " << x;
  }
}
