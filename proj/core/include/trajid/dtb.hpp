#pragma once

#include <cstddef>
#include <cstdint>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "trajid/equilibrium.hpp"
#include "trajid/objective.hpp"
#include "trajid/trajectory.hpp"

namespace trajid {

// Per-parameter bounds |x_i| <= l_i.
struct BoxBounds {
  Eigen::VectorXd limits;

  static BoxBounds uniform(std::size_t count, double limit);
  std::size_t size() const { return static_cast<std::size_t>(limits.size()); }
  void validate() const;
};

// o = [x; s]: weights plus one slack per weight.
struct AugmentedPoint {
  Eigen::VectorXd x;
  Eigen::VectorXd s;

  Eigen::VectorXd stacked() const;
  static AugmentedPoint split(const Eigen::VectorXd& o);
};

// h_i = x_i^2 - l_i^2 + s_i^2.
Eigen::VectorXd constraints(const AugmentedPoint& o, const BoxBounds& bounds);

// s_i = sqrt(l_i^2 - x_i^2). Throws InfeasibleStart naming the first |x_i| > l_i.
AugmentedPoint slack_init(const Eigen::VectorXd& x, const BoxBounds& bounds);

// n_p x 2 n_p; row i holds 2 x_i at column i and 2 s_i at column n_p + i.
Eigen::SparseMatrix<double> constraint_jacobian(const AugmentedPoint& o, const BoxBounds& bounds);

// (I - Dh^T (Dh Dh^T)^{-1} Dh) v, using the diagonal form of Dh Dh^T.
Eigen::VectorXd project_tangent(const AugmentedPoint& o, const BoxBounds& bounds,
                                const Eigen::VectorXd& v, double singular_tol = 1e-12);

// Projected gradient flow on the box manifold (dimension 2 n_p). The slack
// block of grad f is zero. Throws ManifoldSingularity when some
// x_i^2 + s_i^2 < singular_tol.
VectorField pgs_field(const ResidualModel& model, const BoxBounds& bounds,
                      double singular_tol = 1e-12);

// o' = -Dh(o)^T h(o): pulls points onto the manifold.
VectorField qgs_phase_field(const BoxBounds& bounds);

// Rescales every (x_i, s_i) pair onto its circle of radius l_i. Feasible input
// (||h||_inf <= tol) is returned unchanged. Throws ManifoldSingularity for a
// pair at the origin.
AugmentedPoint feasibility_restore(const AugmentedPoint& o, const BoxBounds& bounds, double tol);

// Largest drift the trainer restores during integration (0.1 min l_i^2);
// dtb_train raises NumericError beyond it.
double recoverable_drift(const BoxBounds& bounds);

struct DtbBudget {
  int max_components = 3;
  int max_minima_per_component = 2;
  int max_escape_attempts = 4;     // PGS escapes per component
  int max_component_attempts = 3;  // QGS-phase retries per component change
  // Tight tolerances keep the drift between two restores below feasibility_tol.
  IntegratorConfig pgs_forward{.rel_tol = 1e-9, .abs_tol = 1e-12};
  IntegratorConfig pgs_reverse{.initial_step = 1e-3, .rel_tol = 1e-9, .abs_tol = 1e-12, .max_time = 10.0};
  IntegratorConfig qgs_forward{.initial_step = 1e-4, .max_time = 1.0};
  IntegratorConfig qgs_reverse{.initial_step = 1e-4, .max_time = 0.05};
  double feasibility_tol = 1e-8;
  double equilibrium_tol = 1e-6;
  double phase_tol = 1e-7;  // QGS-phase landing test on ||field||_inf
  double perturbation_scale = 1e-2;
  double component_perturbation = 0.1;
  // The reverse QGS phase exits once a pair radius leaves
  // [fraction l_i, l_i / fraction].
  double exit_radius_fraction = 0.5;
  double dedup_tol = 1e-4;
  double eig_tol = 1e-8;
  double saddle_grad_tol = 1e-3;
  // Reverse runs also stop this far (2-norm) from their start.
  double escape_radius = 1e3;
  std::size_t restore_every = 10;
  std::size_t lanczos_iterations = 30;
  std::uint64_t rng_seed = 0;
  TraceWriter* trace = nullptr;

  void validate() const;
};

// Alternates PGS phases (minima inside the current feasible component) and
// QGS phases (moves to another component). Minima are recorded on the x part,
// restored to the manifold, with cost 0.5 * SSE.
TrainResult dtb_train(const ResidualModel& model, const Eigen::VectorXd& init,
                      const BoxBounds& bounds, const DtbBudget& budget);

}  // namespace trajid
