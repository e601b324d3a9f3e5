#include "trajid/dtb.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "trajid/curvature.hpp"
#include "trajid/errors.hpp"
#include "trajid/qgs.hpp"

namespace trajid {

BoxBounds BoxBounds::uniform(std::size_t count, double limit) {
  BoxBounds b{Eigen::VectorXd::Constant(static_cast<Eigen::Index>(count), limit)};
  b.validate();
  return b;
}

void BoxBounds::validate() const {
  if (limits.size() == 0) throw ConfigError("box bounds are empty");
  for (Eigen::Index i = 0; i < limits.size(); ++i) {
    if (!(limits[i] > 0.0) || !std::isfinite(limits[i])) {
      throw ConfigError("box bound " + std::to_string(i) + " must be positive and finite");
    }
  }
}

Eigen::VectorXd AugmentedPoint::stacked() const {
  Eigen::VectorXd o(x.size() + s.size());
  o << x, s;
  return o;
}

AugmentedPoint AugmentedPoint::split(const Eigen::VectorXd& o) {
  if (o.size() % 2 != 0) throw ShapeError("augmented vector must have even length");
  const Eigen::Index n = o.size() / 2;
  return {o.head(n), o.tail(n)};
}

namespace {

void check_dims(const AugmentedPoint& o, const BoxBounds& bounds) {
  if (o.x.size() != bounds.limits.size() || o.s.size() != bounds.limits.size()) {
    throw ShapeError("augmented point does not match the bounds");
  }
}

}  // namespace

Eigen::VectorXd constraints(const AugmentedPoint& o, const BoxBounds& bounds) {
  check_dims(o, bounds);
  return (o.x.array().square() - bounds.limits.array().square() + o.s.array().square()).matrix();
}

AugmentedPoint slack_init(const Eigen::VectorXd& x, const BoxBounds& bounds) {
  if (x.size() != bounds.limits.size()) throw ShapeError("weights do not match the bounds");
  AugmentedPoint o{x, Eigen::VectorXd(x.size())};
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double l = bounds.limits[i];
    if (std::abs(x[i]) > l) {
      throw InfeasibleStart("weight outside its bound", static_cast<std::size_t>(i));
    }
    o.s[i] = std::sqrt((l - x[i]) * (l + x[i]));
  }
  return o;
}

Eigen::SparseMatrix<double> constraint_jacobian(const AugmentedPoint& o, const BoxBounds& bounds) {
  check_dims(o, bounds);
  const Eigen::Index n = o.x.size();
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(2 * n));
  for (Eigen::Index i = 0; i < n; ++i) {
    entries.emplace_back(i, i, 2.0 * o.x[i]);
    entries.emplace_back(i, n + i, 2.0 * o.s[i]);
  }
  Eigen::SparseMatrix<double> dh(n, 2 * n);
  dh.setFromTriplets(entries.begin(), entries.end());
  return dh;
}

Eigen::VectorXd project_tangent(const AugmentedPoint& o, const BoxBounds& bounds,
                                const Eigen::VectorXd& v, double singular_tol) {
  const Eigen::SparseMatrix<double> dh = constraint_jacobian(o, bounds);
  const Eigen::Index n = o.x.size();
  if (v.size() != 2 * n) throw ShapeError("vector does not match the augmented dimension");
  // Dh Dh^T = diag(4 (x_i^2 + s_i^2)).
  Eigen::VectorXd gram = 4.0 * (o.x.array().square() + o.s.array().square()).matrix();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (gram[i] < 4.0 * singular_tol) {
      throw ManifoldSingularity("constraint Jacobian is singular at pair " + std::to_string(i), 0,
                                o.stacked());
    }
  }
  const Eigen::VectorXd multipliers = (dh * v).cwiseQuotient(gram);
  return v - dh.transpose() * multipliers;
}

VectorField pgs_field(const ResidualModel& model, const BoxBounds& bounds, double singular_tol) {
  const std::size_t n = bounds.size();
  if (model.dimension() != n) throw ShapeError("bounds do not match the model dimension");
  return {2 * n, [&model, bounds, singular_tol](const Eigen::VectorXd& ov) -> Eigen::VectorXd {
            const AugmentedPoint o = AugmentedPoint::split(ov);
            Eigen::VectorXd grad = Eigen::VectorXd::Zero(ov.size());
            grad.head(o.x.size()) = model.gradient(o.x);
            return -project_tangent(o, bounds, grad, singular_tol);
          }};
}

VectorField qgs_phase_field(const BoxBounds& bounds) {
  return {2 * bounds.size(), [bounds](const Eigen::VectorXd& ov) -> Eigen::VectorXd {
            const AugmentedPoint o = AugmentedPoint::split(ov);
            return -(constraint_jacobian(o, bounds).transpose() * constraints(o, bounds));
          }};
}

AugmentedPoint feasibility_restore(const AugmentedPoint& o, const BoxBounds& bounds, double tol) {
  const Eigen::VectorXd h = constraints(o, bounds);
  if (h.lpNorm<Eigen::Infinity>() <= tol) return o;
  AugmentedPoint out = o;
  for (Eigen::Index i = 0; i < o.x.size(); ++i) {
    const double r = std::hypot(o.x[i], o.s[i]);
    if (r == 0.0) {
      throw ManifoldSingularity("pair " + std::to_string(i) + " sits at the origin", 0,
                                o.stacked());
    }
    const double scale = bounds.limits[i] / r;
    out.x[i] *= scale;
    out.s[i] *= scale;
  }
  return out;
}

double recoverable_drift(const BoxBounds& bounds) {
  return 0.1 * bounds.limits.array().square().minCoeff();
}

void DtbBudget::validate() const {
  if (max_components < 1 || max_minima_per_component < 1 || max_escape_attempts < 1 ||
      max_component_attempts < 1) {
    throw ConfigError("dtb budget counts must be positive");
  }
  if (!(feasibility_tol > 0.0) || !(equilibrium_tol > 0.0) || !(phase_tol > 0.0)) {
    throw ConfigError("dtb tolerances must be positive");
  }
  if (!(exit_radius_fraction > 0.0 && exit_radius_fraction < 1.0)) {
    throw ConfigError("exit_radius_fraction must lie in (0, 1)");
  }
  if (perturbation_scale < 0.0 || component_perturbation < 0.0) {
    throw ConfigError("perturbation scales must be non-negative");
  }
  if (!(dedup_tol > 0.0)) throw ConfigError("dedup_tol must be positive");
  if (!(escape_radius > 0.0)) throw ConfigError("escape_radius must be positive");
  pgs_forward.validate();
  pgs_reverse.validate();
  qgs_forward.validate();
  qgs_reverse.validate();
}

namespace {

// One dtb_train run: keeps the model, bounds, and budget together.
class DtbSearch {
 public:
  DtbSearch(const ResidualModel& model, const BoxBounds& bounds, const DtbBudget& budget)
      : model_(model),
        bounds_(bounds),
        budget_(budget),
        pgs_(pgs_field(model, bounds)),
        phase_(qgs_phase_field(bounds)),
        rng_(budget.rng_seed) {}

  TrainResult run(const Eigen::VectorXd& init);

 private:
  AugmentedPoint restore(const AugmentedPoint& o) const {
    const double drift = constraints(o, bounds_).lpNorm<Eigen::Infinity>();
    if (!(drift <= recoverable_drift(bounds_))) {
      throw NumericError("constraint drift " + std::to_string(drift) +
                             " beyond the recoverable bound",
                         0, o.stacked());
    }
    return feasibility_restore(o, bounds_, budget_.feasibility_tol);
  }
  AugmentedPoint restore(const Eigen::VectorXd& o) const {
    return restore(AugmentedPoint::split(o));
  }

  IntegrateHooks hooks(bool project) const {
    IntegrateHooks h;
    if (budget_.trace != nullptr) h.on_step = budget_.trace->hook();
    if (project) {
      h.project = [this](Eigen::VectorXd& o) { o = restore(o).stacked(); };
      h.project_every = budget_.restore_every;
    }
    return h;
  }

  TrajectoryOutcome run_flow(const VectorField& f, const Eigen::VectorXd& o0,
                             const IntegratorConfig& config, const StopCondition& stop,
                             bool project) const {
    const TrajectoryOutcome out = integrate(f, o0, config, stop, hooks(project));
    if (budget_.trace != nullptr) budget_.trace->advance(out.final_time);
    return out;
  }

  Eigenpair tangent_curvature(const AugmentedPoint& o) const;
  Equilibrium characterize(const AugmentedPoint& o, bool converged) const;
  Equilibrium pgs_minimum(const AugmentedPoint& start) const;
  std::optional<AugmentedPoint> pgs_escape(const Equilibrium& base, EscapeState& state) const;
  std::optional<AugmentedPoint> component_jump(const AugmentedPoint& origin, std::size_t component,
                                               SearchLog& log);
  bool is_duplicate(const Equilibrium& candidate) const {
    return std::any_of(found_.begin(), found_.end(), [&](const Equilibrium& e) {
      return within_tolerance(e.params, candidate.params, budget_.dedup_tol);
    });
  }

  const ResidualModel& model_;
  const BoxBounds& bounds_;
  const DtbBudget& budget_;
  VectorField pgs_;
  VectorField phase_;
  std::mt19937_64 rng_;
  std::vector<Equilibrium> found_;
  std::vector<Eigen::VectorXd> visited_;
};

Eigenpair DtbSearch::tangent_curvature(const AugmentedPoint& o) const {
  const Eigen::VectorXd ov = o.stacked();
  const LinearOperator hess =
      hessian_operator([this](const Eigen::VectorXd& p) { return Eigen::VectorXd(-pgs_(p)); }, ov);
  const LinearOperator projected = [&](const Eigen::VectorXd& v) {
    return project_tangent(o, bounds_, hess(project_tangent(o, bounds_, v)));
  };
  std::mt19937_64 start_rng(0x5eed);
  std::normal_distribution<double> normal;
  Eigen::VectorXd start(ov.size());
  for (Eigen::Index i = 0; i < start.size(); ++i) start[i] = normal(start_rng);
  start = project_tangent(o, bounds_, start);
  return smallest_eigenpair(projected, static_cast<std::size_t>(ov.size()),
                            budget_.lanczos_iterations, start);
}

Equilibrium DtbSearch::characterize(const AugmentedPoint& o, bool converged) const {
  Equilibrium eq;
  eq.params = o.x;
  eq.slacks = o.s;
  eq.cost = model_.cost(o.x);
  eq.grad_norm = pgs_(o.stacked()).lpNorm<Eigen::Infinity>();
  const Eigenpair soft = tangent_curvature(o);
  eq.hessian_min_eig = soft.value;
  eq.softest_direction = soft.vector;
  eq.classification = classify(soft.value, budget_.eig_tol);
  eq.converged = converged;
  return eq;
}

Equilibrium DtbSearch::pgs_minimum(const AugmentedPoint& start) const {
  IntegratorConfig config = budget_.pgs_forward;
  config.direction = Direction::Forward;
  StopCondition stop;
  stop.equilibrium_tol = budget_.equilibrium_tol;
  const TrajectoryOutcome out = run_flow(pgs_, start.stacked(), config, stop, true);
  const AugmentedPoint end = restore(out.final_state);
  Equilibrium eq = characterize(end, out.reason == StopReason::Equilibrium);
  // Restoration can nudge the field; the certificate is re-checked on the restored point.
  if (eq.converged && eq.grad_norm > budget_.equilibrium_tol) eq.converged = false;
  return eq;
}

std::optional<AugmentedPoint> DtbSearch::pgs_escape(const Equilibrium& base,
                                                    EscapeState& state) const {
  const AugmentedPoint base_o{base.params, base.slacks};
  const Eigen::VectorXd base_v = base_o.stacked();
  if (state.base_index != base.index) {
    state.base_index = base.index;
    state.local = 0;
  }
  IntegratorConfig config = budget_.pgs_reverse;
  config.direction = Direction::Reverse;

  while (state.attempts < budget_.max_escape_attempts) {
    const int local = state.local++;
    ++state.attempts;
    if (local % 2 == 0) {
      if (local == 0 && base.softest_direction.size() == base_v.size()) {
        state.direction = base.softest_direction;
      } else {
        std::normal_distribution<double> normal;
        Eigen::VectorXd v(base_v.size());
        for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(state.rng);
        v = project_tangent(base_o, bounds_, v);
        state.direction = v.norm() > 0.0 ? Eigen::VectorXd(v.normalized()) : v;
      }
    }
    const Eigen::VectorXd dir =
        local % 2 == 0 ? state.direction : Eigen::VectorXd(-state.direction);
    const AugmentedPoint o0 = restore(base_v + budget_.perturbation_scale * dir);

    double previous = model_.cost(o0.x);
    StopCondition stop;
    stop.equilibrium_tol = 0.0;
    stop.divergence_bound = 0.0;
    const Eigen::VectorXd start = o0.stacked();
    stop.event = [&](double, const Eigen::VectorXd& ov) {
      if ((ov - start).norm() >= budget_.escape_radius) return true;
      const AugmentedPoint o = AugmentedPoint::split(ov);
      const double f = model_.cost(o.x);
      if (f <= previous) return true;
      previous = f;
      if (pgs_(ov).lpNorm<Eigen::Infinity>() > budget_.saddle_grad_tol) return false;
      if (within_tolerance(ov, base_v, budget_.dedup_tol)) return false;
      return tangent_curvature(o).value < -budget_.eig_tol;
    };
    const TrajectoryOutcome out = run_flow(pgs_, o0.stacked(), config, stop, true);
    const AugmentedPoint exit = restore(out.final_state);
    const Eigen::VectorXd step = exit.stacked() - base_v;
    if (step.lpNorm<Eigen::Infinity>() <= budget_.dedup_tol) continue;
    Eigen::VectorXd across = project_tangent(exit, bounds_, step);
    if (across.norm() == 0.0) across = step;
    return restore(exit.stacked() + budget_.perturbation_scale * across.normalized());
  }
  return std::nullopt;
}

std::optional<AugmentedPoint> DtbSearch::component_jump(const AugmentedPoint& origin,
                                                        std::size_t component, SearchLog& log) {
  const Eigen::VectorXd origin_v = origin.stacked();
  const double lo = budget_.exit_radius_fraction;
  const double hi = 1.0 / budget_.exit_radius_fraction;
  IntegratorConfig reverse = budget_.qgs_reverse;
  reverse.direction = Direction::Reverse;
  IntegratorConfig forward = budget_.qgs_forward;
  forward.direction = Direction::Forward;

  for (int attempt = 0; attempt < budget_.max_component_attempts; ++attempt) {
    std::normal_distribution<double> normal;
    Eigen::VectorXd o0 = origin_v;
    for (Eigen::Index i = 0; i < o0.size(); ++i) {
      o0[i] += budget_.component_perturbation * normal(rng_);
    }

    // Backward until some pair approaches an unstable point of the phase flow.
    StopCondition leave;
    leave.equilibrium_tol = 0.0;
    leave.divergence_bound = 0.0;
    leave.event = [&](double, const Eigen::VectorXd& ov) {
      if ((ov - o0).norm() >= budget_.escape_radius) return true;
      const AugmentedPoint o = AugmentedPoint::split(ov);
      for (Eigen::Index i = 0; i < o.x.size(); ++i) {
        const double ratio = std::hypot(o.x[i], o.s[i]) / bounds_.limits[i];
        if (ratio < lo || ratio > hi) return true;
      }
      return false;
    };
    const TrajectoryOutcome out = run_flow(phase_, o0, reverse, leave, false);

    StopCondition land;
    land.equilibrium_tol = budget_.phase_tol;
    const TrajectoryOutcome back = run_flow(phase_, out.final_state, forward, land, false);

    AugmentedPoint landing;
    try {
      landing = restore(back.final_state);
    } catch (const NumericError&) {
      log.phases.push_back({"QGS", component, "collapsed"});
      continue;
    }
    const bool revisit = std::any_of(visited_.begin(), visited_.end(), [&](const auto& v) {
      return within_tolerance(v, landing.x, budget_.dedup_tol);
    });
    if (revisit) {
      log.phases.push_back({"QGS", component, "revisited"});
      continue;
    }
    log.phases.push_back({"QGS", component, "landed"});
    return landing;
  }
  return std::nullopt;
}

TrainResult DtbSearch::run(const Eigen::VectorXd& init) {
  for (Eigen::Index i = 0; i < init.size(); ++i) {
    if (std::abs(init[i]) >= bounds_.limits[i]) {
      throw InfeasibleStart("initial weight not strictly inside its bound",
                            static_cast<std::size_t>(i));
    }
  }
  SearchLog log;
  log.trainer = "dtb";
  AugmentedPoint o = slack_init(init, bounds_);

  for (int comp = 0; comp < budget_.max_components; ++comp) {
    const auto component = static_cast<std::size_t>(comp);
    if (comp > 0) {
      const auto best = std::min_element(
          found_.begin(), found_.end(),
          [](const Equilibrium& a, const Equilibrium& b) { return a.cost < b.cost; });
      const std::optional<AugmentedPoint> landing =
          component_jump({best->params, best->slacks}, component, log);
      if (!landing) {
        log.phases.push_back({"QGS", component, "exhausted"});
        break;
      }
      o = *landing;
    }
    visited_.push_back(o.x);

    auto record = [&](Equilibrium eq, int attempts) -> std::optional<Equilibrium> {
      eq.component = component;
      if (is_duplicate(eq)) {
        log.phases.push_back({"PGS", component, "duplicate"});
        return std::nullopt;
      }
      eq.index = found_.size();
      eq.escape_attempts = attempts;
      log.phases.push_back({"PGS", component, eq.converged ? "minimum" : "budget"});
      found_.push_back(eq);
      return eq;
    };

    Equilibrium base = pgs_minimum(o);
    int in_component = 0;
    if (const auto added = record(base, 0)) {
      base = *added;
      ++in_component;
    }

    EscapeState state(rng_());
    int attempts_at_last = 0;
    while (in_component < budget_.max_minima_per_component) {
      const std::optional<AugmentedPoint> start = pgs_escape(base, state);
      if (!start) {
        log.phases.push_back({"PGS", component, "exhausted"});
        break;
      }
      const auto added = record(pgs_minimum(*start), state.attempts - attempts_at_last);
      if (!added) continue;
      attempts_at_last = state.attempts;
      base = *added;
      ++in_component;
    }
  }

  if (found_.empty()) throw Error("dtb search produced no minimum");
  log.equilibria = found_;
  return finalize(found_, std::move(log));
}

}  // namespace

TrainResult dtb_train(const ResidualModel& model, const Eigen::VectorXd& init,
                      const BoxBounds& bounds, const DtbBudget& budget) {
  budget.validate();
  bounds.validate();
  if (static_cast<std::size_t>(init.size()) != model.dimension() ||
      bounds.size() != model.dimension()) {
    throw ShapeError("initial vector, bounds, and model dimensions disagree");
  }
  DtbSearch search(model, bounds, budget);
  return search.run(init);
}

}  // namespace trajid
