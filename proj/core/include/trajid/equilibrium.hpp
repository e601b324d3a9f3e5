#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

namespace trajid {

enum class Stability { Stable, SaddleLike };

// A rest point located by one of the trainers.
struct Equilibrium {
  Eigen::VectorXd params;
  Eigen::VectorXd slacks;  // empty outside the box-constrained trainer
  double cost = 0.0;       // 0.5 * SSE
  double grad_norm = 0.0;  // ||(projected) gradient||_inf
  double hessian_min_eig = 0.0;
  Eigen::VectorXd softest_direction;  // eigenvector of hessian_min_eig
  Stability classification = Stability::Stable;
  // False when the integration budget ran out first; the point is then the
  // best one reached on that trajectory.
  bool converged = true;
  std::size_t index = 0;  // discovery order
  int escape_attempts = 0;
  std::size_t component = 0;
};

Stability classify(double min_eig, double eig_tol);

struct PhaseRecord {
  std::string phase;  // "PGS" or "QGS"
  std::size_t component_index = 0;
  std::string outcome;
};

struct SearchLog {
  std::string trainer;
  std::vector<Equilibrium> equilibria;  // discovery order
  std::vector<PhaseRecord> phases;

  nlohmann::json to_json() const;
};

struct TrainResult {
  Equilibrium best;
  std::vector<Equilibrium> all;  // ascending cost, ties by discovery index
  SearchLog log;

  std::size_t converged_count() const;
};

// Sorts by cost (stable) and fills `best`.
TrainResult finalize(std::vector<Equilibrium> found, SearchLog log);

bool within_tolerance(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double tol);

}  // namespace trajid
