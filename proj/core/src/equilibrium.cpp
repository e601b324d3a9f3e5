#include "trajid/equilibrium.hpp"

#include <algorithm>
#include <utility>

namespace trajid {

Stability classify(double min_eig, double eig_tol) {
  return min_eig < -eig_tol ? Stability::SaddleLike : Stability::Stable;
}

nlohmann::json SearchLog::to_json() const {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& eq : equilibria) {
    records.push_back({{"index", eq.index},
                       {"cost", eq.cost},
                       {"grad_norm", eq.grad_norm},
                       {"min_eig", eq.hessian_min_eig},
                       {"escape_attempts", eq.escape_attempts},
                       {"converged", eq.converged},
                       {"component", eq.component},
                       {"classification",
                        eq.classification == Stability::Stable ? "stable" : "saddle-like"}});
  }
  nlohmann::json phase_records = nlohmann::json::array();
  for (const auto& p : phases) {
    phase_records.push_back(
        {{"phase", p.phase}, {"component_index", p.component_index}, {"outcome", p.outcome}});
  }
  return {{"trainer", trainer}, {"equilibria", records}, {"phases", phase_records}};
}

std::size_t TrainResult::converged_count() const {
  return static_cast<std::size_t>(
      std::count_if(all.begin(), all.end(), [](const Equilibrium& e) { return e.converged; }));
}

TrainResult finalize(std::vector<Equilibrium> found, SearchLog log) {
  std::stable_sort(found.begin(), found.end(),
                   [](const Equilibrium& a, const Equilibrium& b) { return a.cost < b.cost; });
  TrainResult out;
  out.best = found.front();
  out.all = std::move(found);
  out.log = std::move(log);
  return out;
}

bool within_tolerance(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double tol) {
  return a.size() == b.size() && (a - b).lpNorm<Eigen::Infinity>() <= tol;
}

}  // namespace trajid
