#include <cmath>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "trajid/errors.hpp"
#include "trajid/trajectory.hpp"

using namespace trajid;

namespace {

VectorField linear(double rate) {
  return {1, [rate](const Eigen::VectorXd& x) -> Eigen::VectorXd { return rate * x; }};
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST(Integrate, LinearDecayReachesEquilibrium) {
  StopCondition stop;
  stop.equilibrium_tol = 1e-8;
  const TrajectoryOutcome out = integrate(linear(-1.0), vec({1.0}), {}, stop);
  EXPECT_EQ(out.reason, StopReason::Equilibrium);
  EXPECT_LE(std::abs(out.final_state[0]), 1e-8);
  EXPECT_LE(out.field_norm, 1e-8);
}

TEST(Integrate, QuadraticBowl) {
  const VectorField f{1, [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return Eigen::VectorXd::Constant(1, 3.0) - x; }};
  const TrajectoryOutcome out = integrate(f, vec({0.0}), {}, {});
  EXPECT_EQ(out.reason, StopReason::Equilibrium);
  EXPECT_NEAR(out.final_state[0], 3.0, 1e-6);
}

TEST(Integrate, ReverseDivergesLikeExponential) {
  IntegratorConfig config;
  config.direction = Direction::Reverse;
  StopCondition stop;
  stop.divergence_bound = 1e3;
  const TrajectoryOutcome out = integrate(linear(-1.0), vec({1.0}), config, stop);
  EXPECT_EQ(out.reason, StopReason::Divergence);
  EXPECT_GE(out.final_state[0], 1e3);
  EXPECT_NEAR(out.final_state[0], std::exp(out.final_time), 1e-5 * out.final_state[0]);
}

TEST(Integrate, TimeBudgetEndsExactly) {
  IntegratorConfig config;
  config.max_time = 0.5;
  StopCondition stop;
  stop.equilibrium_tol = 0.0;
  const TrajectoryOutcome out = integrate(linear(-1.0), vec({1.0}), config, stop);
  EXPECT_EQ(out.reason, StopReason::TimeBudget);
  EXPECT_DOUBLE_EQ(out.final_time, 0.5);
  EXPECT_NEAR(out.final_state[0], std::exp(-0.5), 1e-7);
}

TEST(Integrate, StartAtEquilibriumStopsImmediately) {
  const TrajectoryOutcome out = integrate(linear(-1.0), vec({0.0}), {}, {});
  EXPECT_EQ(out.reason, StopReason::Equilibrium);
  EXPECT_EQ(out.steps_taken, 0u);
  EXPECT_EQ(out.final_time, 0.0);
}

TEST(Integrate, EquilibriumNeedsHeldCondition) {
  // A field that is tiny only for an instant must not end the run.
  const VectorField f{1, [](const Eigen::VectorXd& x) -> Eigen::VectorXd {
                        return Eigen::VectorXd::Constant(1, std::cos(3.0 * x[0]) + 1.0 + 1e-3);
                      }};
  IntegratorConfig config;
  config.max_time = 5.0;
  StopCondition stop;
  stop.equilibrium_tol = 1e-2;
  const TrajectoryOutcome out = integrate(f, vec({0.0}), config, stop);
  EXPECT_EQ(out.reason, StopReason::TimeBudget);
}

TEST(Integrate, CustomEventStops) {
  StopCondition stop;
  stop.equilibrium_tol = 0.0;
  stop.event = [](double, const Eigen::VectorXd& x) { return x[0] < 0.5; };
  const TrajectoryOutcome out = integrate(linear(-1.0), vec({1.0}), {}, stop);
  EXPECT_EQ(out.reason, StopReason::CustomEvent);
  EXPECT_LT(out.final_state[0], 0.5);
}

TEST(Integrate, NonFiniteFieldThrows) {
  const VectorField f{1, [](const Eigen::VectorXd& x) -> Eigen::VectorXd {
                        return Eigen::VectorXd::Constant(1, x[0] > 1.5 ? std::nan("") : 1.0);
                      }};
  EXPECT_THROW(integrate(f, vec({1.0}), {}, {}), NumericError);
}

TEST(Integrate, StiffnessErrorBelowMinStep) {
  // Finite-time blow-up x' = x^2 forces the step below min_step.
  const VectorField f{1, [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return x.array().square(); }};
  IntegratorConfig config;
  config.min_step = 1e-6;
  StopCondition stop;
  stop.equilibrium_tol = 0.0;
  stop.divergence_bound = 1e300;
  EXPECT_THROW(integrate(f, vec({1.0}), config, stop), StiffnessError);
}

TEST(Integrate, GradientFlowDecreasesCost) {
  // f = 0.5 (x0^2 + 10 x1^2 + x0^2 x1^2)
  auto cost = [](const Eigen::VectorXd& x) { return 0.5 * (x[0] * x[0] + 10 * x[1] * x[1] + x[0] * x[0] * x[1] * x[1]); };
  const VectorField f{2, [](const Eigen::VectorXd& x) -> Eigen::VectorXd {
                        return -vec({x[0] + x[0] * x[1] * x[1], 10 * x[1] + x[0] * x[0] * x[1]});
                      }};
  std::vector<double> samples;
  IntegrateHooks hooks;
  hooks.on_step = [&](double, const Eigen::VectorXd& x) { samples.push_back(cost(x)); };
  IntegratorConfig config;
  integrate(f, vec({2.0, -1.5}), config, {}, hooks);
  ASSERT_GT(samples.size(), 5u);
  for (std::size_t i = 1; i < samples.size(); ++i) EXPECT_LE(samples[i], samples[i - 1] + 10 * config.abs_tol);
}

TEST(Integrate, ReverseThenForwardReturns) {
  const VectorField f{2, [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return -vec({x[0] + 0.5 * x[1], 2 * x[1]}); }};
  IntegratorConfig config;
  config.max_time = 1.0;
  config.rel_tol = 1e-10;
  config.abs_tol = 1e-12;
  StopCondition stop;
  stop.equilibrium_tol = 0.0;
  config.direction = Direction::Reverse;
  const Eigen::VectorXd x0 = vec({0.3, -0.2});
  const TrajectoryOutcome back = integrate(f, x0, config, stop);
  config.direction = Direction::Forward;
  const TrajectoryOutcome fwd = integrate(f, back.final_state, config, stop);
  // Forward contraction is at most e^{-1}, so the error is bounded by the
  // reverse-phase error.
  EXPECT_LT((fwd.final_state - x0).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Integrate, ProjectionHookApplied) {
  // Rotation field with a projection back to the unit circle.
  const VectorField f{2, [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return vec({-x[1], x[0]}); }};
  IntegrateHooks hooks;
  hooks.project = [](Eigen::VectorXd& x) { x.normalize(); };
  hooks.project_every = 1;
  double worst = 0;
  hooks.on_step = [&](double t, const Eigen::VectorXd& x) {
    if (t > 0) worst = std::max(worst, std::abs(x.norm() - 1.0));
  };
  IntegratorConfig config;
  config.max_time = 10;
  config.rel_tol = 1e-3;
  config.abs_tol = 1e-3;
  StopCondition stop;
  stop.equilibrium_tol = 0.0;
  integrate(f, vec({1.0, 0.0}), config, stop, hooks);
  EXPECT_LT(worst, 1e-15);
}

TEST(Integrate, Deterministic) {
  const VectorField f{2, [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return vec({std::sin(x[1]) - x[0], -x[1] * x[0]}); }};
  const TrajectoryOutcome a = integrate(f, vec({0.4, 1.3}), {}, {});
  const TrajectoryOutcome b = integrate(f, vec({0.4, 1.3}), {}, {});
  EXPECT_EQ(a.final_state, b.final_state);
  EXPECT_EQ(a.final_time, b.final_time);
  EXPECT_EQ(a.steps_taken, b.steps_taken);
}

TEST(IntegratorConfig, RejectsInconsistentSteps) {
  IntegratorConfig c;
  c.min_step = 1.0;
  c.initial_step = 0.1;
  EXPECT_THROW(c.validate(), ConfigError);
  IntegratorConfig d;
  d.rel_tol = 0.0;
  EXPECT_THROW(d.validate(), ConfigError);
}

TEST(StopCondition, NeedsOneConditionEnabled) {
  StopCondition s;
  s.equilibrium_tol = 0.0;
  s.divergence_bound = 0.0;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(FixedStep, ZeroStepsIsIdentity) {
  EXPECT_EQ(fixed_step(linear(-1.0), vec({0.7}), 0.1, 0), vec({0.7}));
}

TEST(FixedStep, ExponentialDecay) {
  const Eigen::VectorXd x = fixed_step(linear(-1.0), vec({1.0}), 0.1, 10);
  EXPECT_LT(std::abs(x[0] - std::exp(-1.0)), 1e-5);
}

TEST(FixedStep, HarmonicOscillatorPeriod) {
  const VectorField f{2, [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return vec({x[1], -x[0]}); }};
  const std::size_t steps = 1000;
  const Eigen::VectorXd x = fixed_step(f, vec({1.0, 0.0}), 2 * std::numbers::pi / steps, steps);
  EXPECT_LT((x - vec({1.0, 0.0})).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(FixedStep, FourthOrderConvergence) {
  auto error = [](double h) {
    const auto n = static_cast<std::size_t>(std::lround(1.0 / h));
    return std::abs(fixed_step(linear(-1.0), vec({1.0}), h, n)[0] - std::exp(-1.0));
  };
  for (double h : {0.2, 0.1, 0.05}) {
    const double ratio = error(h) / error(h / 2);
    EXPECT_GE(ratio, 12.0);
    EXPECT_LE(ratio, 20.0);
  }
}

TEST(FixedStep, NonFiniteThrows) {
  const VectorField f{1, [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return x.array().square() * 1e200; }};
  EXPECT_THROW(fixed_step(f, vec({1e100}), 1.0, 3), NumericError);
}

TEST(TraceWriter, HeaderAndOffsetRows) {
  std::ostringstream out;
  TraceWriter trace(out, 2);
  trace.write(0.0, vec({1.0, 2.0}));
  trace.advance(1.5);
  trace.hook()(0.5, vec({3.0, 4.0}));
  EXPECT_EQ(out.str(), "t,x_0,x_1\n0,1,2\n2,3,4\n");
}
