#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <string_view>

#include <Eigen/Core>

namespace trajid {

// An autonomous vector field x' = F(x).
struct VectorField {
  std::size_t dimension = 0;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> evaluate;

  Eigen::VectorXd operator()(const Eigen::VectorXd& x) const { return evaluate(x); }
};

enum class Direction { Forward, Reverse };

struct IntegratorConfig {
  double initial_step = 1e-3;
  double min_step = 1e-14;
  double max_step = 1.0;
  double rel_tol = 1e-6;
  double abs_tol = 1e-9;
  double max_time = 100.0;  // integration time, not wall clock
  Direction direction = Direction::Forward;

  void validate() const;
};

struct StopCondition {
  // ||F(x)||_inf <= equilibrium_tol held for `equilibrium_hold` consecutive
  // accepted steps. A non-positive tolerance disables the check.
  double equilibrium_tol = 1e-6;
  int equilibrium_hold = 3;
  // ||x||_2 >= divergence_bound. Non-positive disables.
  double divergence_bound = 1e6;
  // Checked after every accepted step.
  std::function<bool(double t, const Eigen::VectorXd& x)> event;

  void validate() const;
};

enum class StopReason { Equilibrium, Divergence, TimeBudget, CustomEvent };

std::string_view to_string(StopReason reason);

struct TrajectoryOutcome {
  Eigen::VectorXd final_state;
  double final_time = 0.0;
  StopReason reason = StopReason::TimeBudget;
  std::size_t steps_taken = 0;
  std::size_t rejected_steps = 0;
  double field_norm = 0.0;  // ||F(final_state)||_inf of the integrated field
};

struct IntegrateHooks {
  // Called at t = 0 and after every accepted step.
  std::function<void(double t, const Eigen::VectorXd& x)> on_step;
  // Applied in place every `project_every` accepted steps (0 = never).
  std::function<void(Eigen::VectorXd& x)> project;
  std::size_t project_every = 0;
};

// Adaptive Dormand-Prince 5(4) integration with max-norm error control.
// Reverse direction integrates -F forward in time.
//
// Throws StiffnessError when a step below min_step still fails the tolerance
// and NumericError when the field returns a non-finite value.
TrajectoryOutcome integrate(const VectorField& field, const Eigen::VectorXd& x0,
                            const IntegratorConfig& config, const StopCondition& stop,
                            const IntegrateHooks& hooks = {});

// Exactly `count` classical RK4 steps of size `step`.
Eigen::VectorXd fixed_step(const VectorField& field, const Eigen::VectorXd& x0, double step,
                           std::size_t count);

VectorField negated(const VectorField& field);

// Writes `t,x_0,...,x_{d-1}` rows. Successive trajectories can be appended
// with a time offset so the column stays monotone.
class TraceWriter {
 public:
  TraceWriter(std::ostream& out, std::size_t dimension);

  void write(double t, const Eigen::VectorXd& x);
  // Hook suitable for IntegrateHooks::on_step; shifts time by the running offset.
  std::function<void(double, const Eigen::VectorXd&)> hook();
  void advance(double dt) { offset_ += dt; }

 private:
  std::ostream* out_;
  std::size_t dimension_;
  double offset_ = 0.0;
};

}  // namespace trajid
