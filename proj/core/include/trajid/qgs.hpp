#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>

#include <Eigen/Core>

#include "trajid/equilibrium.hpp"
#include "trajid/objective.hpp"
#include "trajid/trajectory.hpp"

namespace trajid {

struct QgsBudget {
  int max_equilibria = 5;
  int max_escape_attempts = 10;  // across the whole run
  IntegratorConfig forward{};
  IntegratorConfig reverse{.initial_step = 1e-3, .max_time = 10.0};
  double equilibrium_tol = 1e-6;
  double perturbation_scale = 1e-2;
  double dedup_tol = 1e-4;
  double eig_tol = 1e-8;
  // The reverse run checks curvature only where ||grad f||_inf is below this.
  double saddle_grad_tol = 1e-3;
  // A reverse run also stops once it is this far (2-norm) from its start.
  double escape_radius = 1e3;
  std::size_t lanczos_iterations = 30;
  std::uint64_t rng_seed = 0;
  TraceWriter* trace = nullptr;  // optional dump of every integration

  void validate() const;
};

// x' = -J(x)^T h(x), the negative gradient of f = 0.5 ||h||^2.
VectorField qgs_field(const ResidualModel& model);

// Forward-integrates the field from x0. Throws BudgetExceeded carrying the
// endpoint when the time budget runs out before the equilibrium test passes.
Equilibrium find_equilibrium(const ResidualModel& model, const Eigen::VectorXd& x0,
                             const QgsBudget& budget);

// Carries perturbation directions between escape calls. Attempt 2j uses
// direction d_j and attempt 2j+1 uses -d_j; d_0 is the softest Hessian
// direction of the equilibrium, later d_j are seeded random unit vectors.
struct EscapeState {
  explicit EscapeState(std::uint64_t seed) : rng(seed) {}

  int attempts = 0;  // total across the run
  std::size_t base_index = static_cast<std::size_t>(-1);
  int local = 0;  // attempts from the current base equilibrium
  Eigen::VectorXd direction;
  std::mt19937_64 rng;
};

// Perturbs `eq`, integrates the flow backwards until it stops climbing, reaches
// an unstable point, or exhausts the reverse budget, and returns a start point
// just beyond that exit. nullopt once max_escape_attempts have been spent.
std::optional<Eigen::VectorXd> escape(const ResidualModel& model, const Equilibrium& eq,
                                      const QgsBudget& budget, EscapeState& state);

// Alternates find_equilibrium and escape until max_equilibria distinct
// equilibria are found or escapes run out.
TrainResult qgs_train(const ResidualModel& model, const Eigen::VectorXd& init,
                      const QgsBudget& budget);

}  // namespace trajid
