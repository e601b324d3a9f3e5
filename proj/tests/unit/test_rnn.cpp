#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "trajid/errors.hpp"
#include "trajid/objective.hpp"
#include "trajid/rnn.hpp"

using namespace trajid;

namespace {

RegressorTable random_table(int n, int t, int rows, std::mt19937_64& rng) {
  RegressorTable table;
  table.inputs = oracle::gaussian(n, rows, rng);
  table.targets = oracle::gaussian(t, rows, rng);
  return table;
}

Eigen::VectorXd random_params(const NetworkShape& shape, std::mt19937_64& rng, double sd = 0.5) {
  return oracle::gaussian(static_cast<Eigen::Index>(shape.param_count()), 1, rng, sd);
}

}  // namespace

TEST(NetworkShape, ParamCountFormula) {
  for (int n = 1; n <= 6; ++n)
    for (int m = 1; m <= 6; ++m)
      for (int t = 1; t <= 3; ++t) {
        EXPECT_EQ(NetworkShape({n, m, t}).param_count(), static_cast<std::size_t>(m * m + m * (n + t)));
      }
  EXPECT_EQ(NetworkShape({20, 9, 1}).param_count(), 270u);
  EXPECT_EQ(NetworkShape({11, 7, 1}).param_count(), 133u);
}

TEST(NetworkShape, RejectsNonPositive) {
  EXPECT_THROW(NetworkShape({0, 1, 1}).validate(), ShapeError);
  EXPECT_THROW(NetworkShape({1, 0, 1}).validate(), ShapeError);
  EXPECT_THROW(NetworkShape({1, 1, 0}).validate(), ShapeError);
}

TEST(Flatten, SingleEntryBlocksInOrder) {
  const NetworkShape shape{1, 1, 1};
  RnnWeights w = RnnWeights::zeros(shape);
  w.W(0, 0) = 2;
  w.S(0, 0) = 3;
  w.V(0, 0) = 5;
  const ParamVector p = flatten(w, shape);
  ASSERT_EQ(p.size(), 3);
  EXPECT_EQ(p[0], 5);
  EXPECT_EQ(p[1], 2);
  EXPECT_EQ(p[2], 3);
}

TEST(Flatten, RoundTripIsExact) {
  std::mt19937_64 rng(11);
  for (const NetworkShape shape : {NetworkShape{2, 3, 1}, NetworkShape{20, 9, 1}, NetworkShape{3, 4, 2}}) {
    RnnWeights w{oracle::gaussian(shape.hidden, shape.inputs, rng), oracle::gaussian(shape.hidden, shape.hidden, rng),
                 oracle::gaussian(shape.outputs, shape.hidden, rng)};
    const RnnWeights back = unflatten(flatten(w, shape), shape);
    EXPECT_EQ(back.W, w.W);
    EXPECT_EQ(back.S, w.S);
    EXPECT_EQ(back.V, w.V);
    const ParamVector p = random_params(shape, rng);
    EXPECT_EQ(flatten(unflatten(p, shape), shape), p);
  }
}

TEST(Flatten, RowMajorBlocks) {
  const NetworkShape shape{2, 3, 1};
  const ParamLayout layout(shape);
  EXPECT_EQ(layout.v(0, 2), 2u);
  EXPECT_EQ(layout.w(0, 0), 3u);
  EXPECT_EQ(layout.w(1, 1), 6u);
  EXPECT_EQ(layout.s(0, 0), 9u);
  EXPECT_EQ(layout.s(2, 2), 17u);
  EXPECT_EQ(layout.size, 18u);
}

TEST(Flatten, DimensionMismatchThrows) {
  const NetworkShape shape{2, 3, 1};
  RnnWeights w = RnnWeights::zeros(shape);
  w.W.resize(3, 3);
  EXPECT_THROW(flatten(w, shape), ShapeError);
  EXPECT_THROW(unflatten(ParamVector::Zero(5), shape), ShapeError);
}

TEST(Forward, ZeroWeightsGiveZeroOutputs) {
  const NetworkShape shape{3, 4, 2};
  std::mt19937_64 rng(1);
  const ForwardResult r = forward(RnnWeights::zeros(shape), oracle::gaussian(3, 10, rng), Eigen::VectorXd::Zero(4));
  EXPECT_EQ(r.outputs, Eigen::MatrixXd::Zero(2, 10));
  EXPECT_EQ(r.states.cols(), 10);
}

TEST(Forward, DecoupledWhenSIsZero) {
  const NetworkShape shape{1, 1, 1};
  RnnWeights w = RnnWeights::zeros(shape);
  w.W(0, 0) = 1;
  w.V(0, 0) = 1;
  Eigen::MatrixXd u(1, 2);
  u << 0.5, -0.5;
  const ForwardResult r = forward(w, u, Eigen::VectorXd::Zero(1));
  EXPECT_DOUBLE_EQ(r.outputs(0, 0), std::tanh(0.5));
  EXPECT_DOUBLE_EQ(r.outputs(0, 1), std::tanh(-0.5));
}

TEST(Forward, MatchesScalarRecursion) {
  std::mt19937_64 rng(0);
  for (const NetworkShape shape : {NetworkShape{1, 2, 1}, NetworkShape{3, 4, 2}}) {
    const ParamVector p = random_params(shape, rng);
    const Eigen::MatrixXd u = oracle::gaussian(shape.inputs, 7, rng);
    const ForwardResult r = forward(unflatten(p, shape), u, Eigen::VectorXd::Zero(shape.hidden));
    const Eigen::MatrixXd ref = oracle::recurrent_outputs(p, shape.inputs, shape.hidden, shape.outputs, u);
    EXPECT_LT((r.outputs - ref).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Forward, ThreeStepHandComputed) {
  // n = 1, m = 2, t = 1 with small integers-over-ten weights.
  const NetworkShape shape{1, 2, 1};
  RnnWeights w = RnnWeights::zeros(shape);
  w.W << 0.5, -0.3;
  w.S << 0.1, 0.2, -0.4, 0.3;
  w.V << 1.0, -2.0;
  Eigen::MatrixXd u(1, 3);
  u << 1.0, 0.0, -1.0;
  double z1 = 0, z2 = 0;
  std::vector<double> expected;
  for (double uk : {1.0, 0.0, -1.0}) {
    const double a1 = 0.5 * uk + 0.1 * z1 + 0.2 * z2;
    const double a2 = -0.3 * uk - 0.4 * z1 + 0.3 * z2;
    z1 = std::tanh(a1);
    z2 = std::tanh(a2);
    expected.push_back(z1 - 2.0 * z2);
  }
  const ForwardResult r = forward(w, u, Eigen::VectorXd::Zero(2));
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(r.outputs(0, k), expected[k], 1e-15);
}

TEST(Forward, NonFiniteInputReportsStep) {
  const NetworkShape shape{1, 2, 1};
  RnnWeights w = RnnWeights::zeros(shape);
  w.W.setOnes();
  w.V.setOnes();
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(1, 6);
  u(0, 4) = std::nan("");
  try {
    forward(w, u, Eigen::VectorXd::Zero(2));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_EQ(e.step(), 4u);
  }
}

TEST(Forward, ShapeChecks) {
  const NetworkShape shape{2, 2, 1};
  EXPECT_THROW(forward(RnnWeights::zeros(shape), Eigen::MatrixXd::Zero(3, 4), Eigen::VectorXd::Zero(2)), ShapeError);
  EXPECT_THROW(forward(RnnWeights::zeros(shape), Eigen::MatrixXd::Zero(2, 4), Eigen::VectorXd::Zero(3)), ShapeError);
}

TEST(Residuals, ZeroParamsGiveMinusTargets) {
  std::mt19937_64 rng(2);
  const NetworkShape shape{2, 3, 1};
  const ResidualSystem sys(shape, random_table(2, 1, 9, rng));
  const Eigen::VectorXd h = residuals(ParamVector::Zero(shape.param_count()), sys);
  EXPECT_EQ(h, Eigen::VectorXd(-sys.table.targets.row(0).transpose()));
}

TEST(Residuals, GeneratorParamsGiveZero) {
  std::mt19937_64 rng(3);
  const NetworkShape shape{2, 3, 1};
  const ParamVector truth = random_params(shape, rng);
  RegressorTable table;
  table.inputs = oracle::gaussian(2, 12, rng);
  table.targets = oracle::recurrent_outputs(truth, 2, 3, 1, table.inputs);
  const ResidualSystem sys(shape, table);
  EXPECT_LT(residuals(truth, sys).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT(sse(truth, sys), 1e-27);
}

TEST(Residuals, MatchRecursionOnFiveSamples) {
  std::mt19937_64 rng(0);
  const NetworkShape shape{2, 2, 1};
  const ResidualSystem sys(shape, random_table(2, 1, 5, rng));
  const ParamVector p = random_params(shape, rng);
  const Eigen::MatrixXd yhat = oracle::recurrent_outputs(p, 2, 2, 1, sys.table.inputs);
  const Eigen::VectorXd ref = (yhat - sys.table.targets).row(0).transpose();
  EXPECT_LT((residuals(p, sys) - ref).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NEAR(sse(p, sys), ref.squaredNorm(), 1e-13);
}

TEST(Residuals, SampleMajorForSeveralOutputs) {
  std::mt19937_64 rng(4);
  const NetworkShape shape{2, 3, 2};
  const ResidualSystem sys(shape, random_table(2, 2, 4, rng));
  const ParamVector p = random_params(shape, rng);
  const Eigen::MatrixXd yhat = oracle::recurrent_outputs(p, 2, 3, 2, sys.table.inputs);
  const Eigen::VectorXd h = residuals(p, sys);
  ASSERT_EQ(h.size(), 8);
  for (int k = 0; k < 4; ++k)
    for (int r = 0; r < 2; ++r) EXPECT_NEAR(h[2 * k + r], yhat(r, k) - sys.table.targets(r, k), 1e-14);
}

TEST(Sse, SumOfSquares) {
  // One-sample system whose single residual is V tanh(W u) - y, built so
  // that three samples give residuals 1, -2, 2.
  const NetworkShape shape{1, 1, 1};
  RegressorTable table;
  table.inputs = Eigen::MatrixXd::Zero(1, 3);
  table.targets.resize(1, 3);
  table.targets << -1, 2, -2;
  EXPECT_DOUBLE_EQ(sse(ParamVector::Zero(3), ResidualSystem(shape, table)), 9.0);
}

TEST(Jacobian, MatchesFiniteDifferences) {
  std::mt19937_64 rng(0);
  const NetworkShape shape{2, 3, 1};
  const ResidualSystem sys(shape, random_table(2, 1, 20, rng));
  const ParamVector p = random_params(shape, rng);
  const Eigen::MatrixXd J = residual_jacobian(p, sys);
  const Eigen::MatrixXd fd =
      oracle::central_jacobian([&](const Eigen::VectorXd& x) { return residuals(x, sys); }, p);
  EXPECT_LE(oracle::max_rel(J, fd), 1e-6);
}

TEST(Jacobian, FeedforwardWhenSIsZero) {
  std::mt19937_64 rng(5);
  const NetworkShape shape{2, 2, 1};
  const ParamLayout layout(shape);
  const ResidualSystem sys(shape, random_table(2, 1, 6, rng));
  ParamVector p = random_params(shape, rng);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) p[layout.s(i, j)] = 0.0;
  const Eigen::MatrixXd J = residual_jacobian(p, sys);
  const RnnWeights w = unflatten(p, shape);
  for (int k = 0; k < 6; ++k) {
    const Eigen::VectorXd u = sys.table.inputs.col(k);
    const Eigen::VectorXd z = (w.W * u).array().tanh();
    for (int i = 0; i < 2; ++i) {
      EXPECT_NEAR(J(k, layout.v(0, i)), z[i], 1e-14);
      for (int j = 0; j < 2; ++j) {
        EXPECT_NEAR(J(k, layout.w(i, j)), w.V(0, i) * (1 - z[i] * z[i]) * u[j], 1e-14);
      }
    }
  }
}

TEST(Jacobian, SBlockVanishesWhenVAndWAreZero) {
  const NetworkShape shape{2, 3, 1};
  const ParamLayout layout(shape);
  RegressorTable table;
  table.inputs = Eigen::MatrixXd::Constant(2, 5, 0.7);
  table.targets = Eigen::MatrixXd::Constant(1, 5, 0.2);
  ParamVector p = ParamVector::Zero(shape.param_count());
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) p[layout.s(i, j)] = 0.3 * (i - j);
  const Eigen::MatrixXd J = residual_jacobian(p, ResidualSystem(shape, table));
  EXPECT_EQ(J.middleCols(static_cast<Eigen::Index>(layout.s_offset), 9), Eigen::MatrixXd::Zero(5, 9));
}

TEST(Gradient, MatchesFiniteDifferencesOfHalfSse) {
  std::mt19937_64 rng(0);
  for (int trial = 0; trial < 10; ++trial) {
    std::uniform_int_distribution<int> n(1, 3), m(1, 5), len(2, 50);
    const NetworkShape shape{n(rng), m(rng), 1};
    const ResidualSystem sys(shape, random_table(shape.inputs, 1, len(rng), rng));
    const ParamVector p = random_params(shape, rng);
    const Eigen::VectorXd fd =
        oracle::central_gradient([&](const Eigen::VectorXd& x) { return 0.5 * sse(x, sys); }, p);
    EXPECT_LE(oracle::max_rel(cost_gradient(p, sys), fd), 1e-6) << "trial " << trial;
  }
}

TEST(Gradient, EqualsJacobianTransposeResiduals) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const NetworkShape shape{3, 4, trial % 2 + 1};
    const ResidualSystem sys(shape, random_table(3, shape.outputs, 30, rng));
    const ParamVector p = random_params(shape, rng);
    const Eigen::VectorXd jth = residual_jacobian(p, sys).transpose() * residuals(p, sys);
    EXPECT_LE(oracle::max_rel(cost_gradient(p, sys), jth), 1e-13);
  }
}

TEST(Gradient, OneSampleByHand) {
  // N = 1, n = m = t = 1: f = 0.5 (v tanh(w u) - y)^2.
  const NetworkShape shape{1, 1, 1};
  RegressorTable table;
  table.inputs = Eigen::MatrixXd::Constant(1, 1, 0.8);
  table.targets = Eigen::MatrixXd::Constant(1, 1, 0.3);
  const ParamVector p = (ParamVector(3) << 1.5, -0.7, 0.4).finished();
  const double z = std::tanh(-0.7 * 0.8);
  const double e = 1.5 * z - 0.3;
  const Eigen::Vector3d expected(e * z, e * 1.5 * (1 - z * z) * 0.8, 0.0);
  EXPECT_LT((cost_gradient(p, ResidualSystem(shape, table)) - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Gradient, ZeroAtZeroResidual) {
  std::mt19937_64 rng(9);
  const NetworkShape shape{2, 2, 1};
  const ParamVector truth = random_params(shape, rng);
  RegressorTable table;
  table.inputs = oracle::gaussian(2, 10, rng);
  table.targets = oracle::recurrent_outputs(truth, 2, 2, 1, table.inputs);
  EXPECT_LT(cost_gradient(truth, ResidualSystem(shape, table)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Outputs, LinearInV) {
  std::mt19937_64 rng(10);
  const NetworkShape shape{2, 3, 1};
  RnnWeights w{oracle::gaussian(3, 2, rng), oracle::gaussian(3, 3, rng), oracle::gaussian(1, 3, rng)};
  const Eigen::MatrixXd u = oracle::gaussian(2, 8, rng);
  const Eigen::MatrixXd y1 = forward(w, u, Eigen::VectorXd::Zero(3)).outputs;
  w.V *= -2.5;
  const Eigen::MatrixXd y2 = forward(w, u, Eigen::VectorXd::Zero(3)).outputs;
  EXPECT_LT((y2 + 2.5 * y1).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(RnnResidualModel, GradientRoutesAgree) {
  std::mt19937_64 rng(12);
  const NetworkShape shape{2, 3, 1};
  const RnnResidualModel model(ResidualSystem(shape, random_table(2, 1, 15, rng)));
  const ParamVector p = random_params(shape, rng);
  const Eigen::VectorXd via_jacobian = model.jacobian(p).transpose() * model.residuals(p);
  EXPECT_LE(oracle::max_rel(model.gradient(p), via_jacobian), 1e-13);
  EXPECT_NEAR(model.cost(p), 0.5 * model.residuals(p).squaredNorm(), 1e-15);
}
