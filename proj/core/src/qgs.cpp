#include "trajid/qgs.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "trajid/curvature.hpp"
#include "trajid/errors.hpp"

namespace trajid {

void QgsBudget::validate() const {
  if (max_equilibria < 1) throw ConfigError("max_equilibria must be positive");
  if (max_escape_attempts < 1) throw ConfigError("max_escape_attempts must be positive");
  if (max_escape_attempts < max_equilibria - 1) {
    throw ConfigError("max_escape_attempts must be at least max_equilibria - 1");
  }
  if (!(equilibrium_tol > 0.0)) throw ConfigError("equilibrium_tol must be positive");
  if (perturbation_scale < 0.0) throw ConfigError("perturbation_scale must be non-negative");
  if (!(dedup_tol > 0.0)) throw ConfigError("dedup_tol must be positive");
  if (!(escape_radius > 0.0)) throw ConfigError("escape_radius must be positive");
  forward.validate();
  reverse.validate();
}

VectorField qgs_field(const ResidualModel& model) {
  return {model.dimension(),
          [&model](const Eigen::VectorXd& x) -> Eigen::VectorXd { return -model.gradient(x); }};
}

namespace {

Equilibrium characterize(const ResidualModel& model, const Eigen::VectorXd& x,
                         const QgsBudget& budget, bool converged) {
  Equilibrium eq;
  eq.params = x;
  eq.cost = model.cost(x);
  eq.grad_norm = model.gradient(x).lpNorm<Eigen::Infinity>();
  const Eigenpair soft = smallest_eigenpair(
      hessian_operator([&model](const Eigen::VectorXd& p) { return model.gradient(p); }, x),
      model.dimension(), budget.lanczos_iterations);
  eq.hessian_min_eig = soft.value;
  eq.softest_direction = soft.vector;
  eq.classification = classify(soft.value, budget.eig_tol);
  eq.converged = converged;
  return eq;
}

IntegrateHooks trace_hooks(const QgsBudget& budget) {
  IntegrateHooks hooks;
  if (budget.trace != nullptr) hooks.on_step = budget.trace->hook();
  return hooks;
}

void advance_trace(const QgsBudget& budget, const TrajectoryOutcome& outcome) {
  if (budget.trace != nullptr) budget.trace->advance(outcome.final_time);
}

Equilibrium locate(const ResidualModel& model, const Eigen::VectorXd& x0, const QgsBudget& budget) {
  try {
    return find_equilibrium(model, x0, budget);
  } catch (const BudgetExceeded& e) {
    return characterize(model, e.best(), budget, false);
  }
}

Eigen::VectorXd random_unit(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
  do {
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
  } while (v.norm() == 0.0);
  return v.normalized();
}

}  // namespace

Equilibrium find_equilibrium(const ResidualModel& model, const Eigen::VectorXd& x0,
                             const QgsBudget& budget) {
  if (static_cast<std::size_t>(x0.size()) != model.dimension()) {
    throw ShapeError("start point dimension does not match the model");
  }
  IntegratorConfig config = budget.forward;
  config.direction = Direction::Forward;
  StopCondition stop;
  stop.equilibrium_tol = budget.equilibrium_tol;

  const TrajectoryOutcome outcome =
      integrate(qgs_field(model), x0, config, stop, trace_hooks(budget));
  advance_trace(budget, outcome);
  if (outcome.reason != StopReason::Equilibrium) {
    throw BudgetExceeded("no equilibrium within the forward budget (" +
                             std::string(to_string(outcome.reason)) + ")",
                         outcome.final_state, model.cost(outcome.final_state));
  }
  return characterize(model, outcome.final_state, budget, true);
}

std::optional<Eigen::VectorXd> escape(const ResidualModel& model, const Equilibrium& eq,
                                      const QgsBudget& budget, EscapeState& state) {
  const std::size_t dim = model.dimension();
  if (state.base_index != eq.index) {
    state.base_index = eq.index;
    state.local = 0;
  }

  IntegratorConfig config = budget.reverse;
  config.direction = Direction::Reverse;

  while (state.attempts < budget.max_escape_attempts) {
    const int local = state.local++;
    ++state.attempts;
    if (local % 2 == 0) {
      const bool use_softest =
          local == 0 && static_cast<std::size_t>(eq.softest_direction.size()) == dim;
      state.direction = use_softest ? eq.softest_direction : random_unit(dim, state.rng);
    }
    const Eigen::VectorXd dir = local % 2 == 0 ? state.direction : Eigen::VectorXd(-state.direction);
    const Eigen::VectorXd x0 = eq.params + budget.perturbation_scale * dir;

    // Exit rule: the cost stops increasing, or the gradient is small and the
    // Hessian has a negative eigenvalue (an unstable point of the forward flow).
    double previous = model.cost(x0);
    StopCondition stop;
    stop.equilibrium_tol = 0.0;
    stop.divergence_bound = 0.0;
    stop.event = [&](double, const Eigen::VectorXd& x) {
      if ((x - x0).norm() >= budget.escape_radius) return true;
      const double f = model.cost(x);
      if (f <= previous) return true;
      previous = f;
      const Eigen::VectorXd g = model.gradient(x);
      if (g.lpNorm<Eigen::Infinity>() > budget.saddle_grad_tol) return false;
      if (within_tolerance(x, eq.params, budget.dedup_tol)) return false;
      const Eigenpair soft = smallest_eigenpair(
          hessian_operator([&model](const Eigen::VectorXd& p) { return model.gradient(p); }, x),
          dim, budget.lanczos_iterations);
      return soft.value < -budget.eig_tol;
    };

    const TrajectoryOutcome outcome =
        integrate(qgs_field(model), x0, config, stop, trace_hooks(budget));
    advance_trace(budget, outcome);

    const Eigen::VectorXd step = outcome.final_state - eq.params;
    if (step.lpNorm<Eigen::Infinity>() <= budget.dedup_tol) continue;
    // Step just past the exit point so the forward flow leaves the old basin.
    return Eigen::VectorXd(outcome.final_state + budget.perturbation_scale * step.normalized());
  }
  return std::nullopt;
}

TrainResult qgs_train(const ResidualModel& model, const Eigen::VectorXd& init,
                      const QgsBudget& budget) {
  budget.validate();
  if (static_cast<std::size_t>(init.size()) != model.dimension()) {
    throw ShapeError("initial parameter vector has the wrong length");
  }

  SearchLog log;
  log.trainer = "qgs";
  std::vector<Equilibrium> found;
  EscapeState state(budget.rng_seed);

  Equilibrium first = locate(model, init, budget);
  first.index = 0;
  found.push_back(first);
  log.phases.push_back({"QGS", 0, first.converged ? "equilibrium" : "budget"});

  Equilibrium base = first;
  int attempts_at_last = 0;
  while (found.size() < static_cast<std::size_t>(budget.max_equilibria)) {
    const std::optional<Eigen::VectorXd> start = escape(model, base, budget, state);
    if (!start) {
      log.phases.push_back({"QGS", 0, "exhausted"});
      break;
    }
    Equilibrium candidate = locate(model, *start, budget);
    const bool duplicate = std::any_of(found.begin(), found.end(), [&](const Equilibrium& e) {
      return within_tolerance(e.params, candidate.params, budget.dedup_tol);
    });
    if (duplicate) {
      log.phases.push_back({"QGS", 0, "duplicate"});
      continue;
    }
    candidate.index = found.size();
    candidate.escape_attempts = state.attempts - attempts_at_last;
    attempts_at_last = state.attempts;
    log.phases.push_back({"QGS", 0, candidate.converged ? "equilibrium" : "budget"});
    found.push_back(candidate);
    base = candidate;
  }

  log.equilibria = found;
  return finalize(std::move(found), std::move(log));
}

}  // namespace trajid
