#include "trajid/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "trajid/errors.hpp"

namespace trajid {

void IntegratorConfig::validate() const {
  if (!(min_step > 0.0) || !(initial_step > 0.0) || !(max_step > 0.0)) {
    throw ConfigError("integrator steps must be positive");
  }
  if (min_step > initial_step || initial_step > max_step) {
    throw ConfigError("integrator requires min_step <= initial_step <= max_step");
  }
  if (!(rel_tol > 0.0) || !(abs_tol > 0.0)) {
    throw ConfigError("integrator tolerances must be positive");
  }
  if (!(max_time > 0.0)) throw ConfigError("integrator max_time must be positive");
}

void StopCondition::validate() const {
  if (equilibrium_tol <= 0.0 && divergence_bound <= 0.0 && !event) {
    throw ConfigError("stop condition needs at least one enabled criterion");
  }
  if (equilibrium_tol > 0.0 && equilibrium_hold < 1) {
    throw ConfigError("equilibrium_hold must be at least 1");
  }
}

std::string_view to_string(StopReason reason) {
  switch (reason) {
    case StopReason::Equilibrium: return "equilibrium";
    case StopReason::Divergence: return "divergence";
    case StopReason::TimeBudget: return "time_budget";
    case StopReason::CustomEvent: return "custom_event";
  }
  return "unknown";
}

VectorField negated(const VectorField& field) {
  return {field.dimension, [f = field.evaluate](const Eigen::VectorXd& x) -> Eigen::VectorXd {
            return -f(x);
          }};
}

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
// b - b_hat (fifth minus fourth order weights).
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

// Real-axis stability interval of the pair is about [-3.3, 0].
constexpr double kStabilityLimit = 3.0;

Eigen::VectorXd checked_eval(const VectorField& f, const Eigen::VectorXd& x, std::size_t step) {
  Eigen::VectorXd dx = f.evaluate(x);
  if (static_cast<std::size_t>(dx.size()) != f.dimension) {
    throw ShapeError("vector field returned a vector of the wrong dimension");
  }
  if (!dx.allFinite()) throw NumericError("non-finite vector field value", step, x);
  return dx;
}

}  // namespace

TrajectoryOutcome integrate(const VectorField& field, const Eigen::VectorXd& x0,
                            const IntegratorConfig& config, const StopCondition& stop,
                            const IntegrateHooks& hooks) {
  config.validate();
  stop.validate();
  if (static_cast<std::size_t>(x0.size()) != field.dimension) {
    throw ShapeError("initial state dimension does not match the vector field");
  }
  if (!x0.allFinite()) throw NumericError("non-finite initial state", 0, x0);

  const VectorField f = config.direction == Direction::Reverse ? negated(field) : field;

  TrajectoryOutcome out;
  Eigen::VectorXd x = x0;
  Eigen::VectorXd k1 = checked_eval(f, x, 0);
  double t = 0.0;
  double h = config.initial_step;
  int hold = 0;

  if (hooks.on_step) hooks.on_step(t, x);

  auto finish = [&](StopReason reason) {
    out.final_state = x;
    out.final_time = t;
    out.reason = reason;
    out.field_norm = k1.lpNorm<Eigen::Infinity>();
    return out;
  };

  if (stop.equilibrium_tol > 0.0 && k1.lpNorm<Eigen::Infinity>() <= stop.equilibrium_tol) {
    return finish(StopReason::Equilibrium);
  }

  const Eigen::Index d = x.size();
  Eigen::VectorXd k2(d), k3(d), k4(d), k5(d), k6(d), k7(d), xs(d), xn(d), err(d);

  while (t < config.max_time) {
    const double remaining = config.max_time - t;
    const bool clipped = h >= remaining;
    const double step = clipped ? remaining : h;
    const std::size_t idx = out.steps_taken + 1;

    // A trial step whose stages leave the finite range is rejected like one
    // that fails the error test.
    bool finite = true;
    auto stage = [&](Eigen::VectorXd& k) {
      k = f.evaluate(xs);
      if (static_cast<std::size_t>(k.size()) != f.dimension) {
        throw ShapeError("vector field returned a vector of the wrong dimension");
      }
      finite = finite && k.allFinite();
      return finite;
    };
    xs = x + step * (a21 * k1);
    double err_norm = std::numeric_limits<double>::infinity();
    if (stage(k2)) {
      xs = x + step * (a31 * k1 + a32 * k2);
      stage(k3);
    }
    if (finite) {
      xs = x + step * (a41 * k1 + a42 * k2 + a43 * k3);
      stage(k4);
    }
    if (finite) {
      xs = x + step * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
      stage(k5);
    }
    if (finite) {
      xs = x + step * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
      stage(k6);
    }
    if (finite) {
      xn = x + step * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
      std::swap(xs, xn);
      stage(k7);
      std::swap(xs, xn);
    }
    if (finite) {
      err = step * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
      err_norm = 0.0;
      for (Eigen::Index i = 0; i < d; ++i) {
        const double scale =
            config.abs_tol + config.rel_tol * std::max(std::abs(x[i]), std::abs(xn[i]));
        err_norm = std::max(err_norm, std::abs(err[i]) / scale);
      }
      if (std::isnan(err_norm)) err_norm = std::numeric_limits<double>::infinity();
    }

    if (err_norm > 1.0) {
      ++out.rejected_steps;
      if (step <= config.min_step) {
        if (!finite) throw NumericError("non-finite vector field value", idx, xs);
        throw StiffnessError("step size underflow below min_step", out.steps_taken, x);
      }
      const double factor = finite ? std::max(0.2, 0.9 * std::pow(err_norm, -0.2)) : 0.2;
      h = std::max(step * factor, config.min_step);
      continue;
    }

    // Stage 6 and the new point share the abscissa t + step, so their field
    // difference estimates the dominant eigenvalue along the step.
    // Skipped when that spread is at rounding level.
    const double spread = (xn - xs).norm();
    const double noise = 1e3 * std::numeric_limits<double>::epsilon() * (1.0 + xn.norm());
    const double rho = spread > noise ? (k7 - k6).norm() / spread : 0.0;

    t = clipped ? config.max_time : t + step;
    x.swap(xn);
    k1.swap(k7);
    ++out.steps_taken;

    if (hooks.project && hooks.project_every > 0 && out.steps_taken % hooks.project_every == 0) {
      hooks.project(x);
      k1 = checked_eval(f, x, out.steps_taken);
    }
    if (hooks.on_step) hooks.on_step(t, x);

    const double factor =
        err_norm == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err_norm, -0.2), 0.2, 5.0);
    h = std::clamp(step * factor, config.min_step, config.max_step);
    if (rho > 0.0) h = std::max(std::min(h, kStabilityLimit / rho), config.min_step);
    if (clipped) h = std::max(h, config.initial_step);

    if (stop.equilibrium_tol > 0.0) {
      if (k1.lpNorm<Eigen::Infinity>() <= stop.equilibrium_tol) {
        if (++hold >= stop.equilibrium_hold) return finish(StopReason::Equilibrium);
      } else {
        hold = 0;
      }
    }
    if (stop.divergence_bound > 0.0 && x.norm() >= stop.divergence_bound) {
      return finish(StopReason::Divergence);
    }
    if (stop.event && stop.event(t, x)) return finish(StopReason::CustomEvent);
  }
  return finish(StopReason::TimeBudget);
}

Eigen::VectorXd fixed_step(const VectorField& field, const Eigen::VectorXd& x0, double step,
                           std::size_t count) {
  if (!(step > 0.0)) throw ConfigError("fixed_step requires a positive step");
  if (static_cast<std::size_t>(x0.size()) != field.dimension) {
    throw ShapeError("initial state dimension does not match the vector field");
  }
  Eigen::VectorXd x = x0;
  for (std::size_t i = 0; i < count; ++i) {
    const Eigen::VectorXd k1 = checked_eval(field, x, i + 1);
    const Eigen::VectorXd k2 = checked_eval(field, x + 0.5 * step * k1, i + 1);
    const Eigen::VectorXd k3 = checked_eval(field, x + 0.5 * step * k2, i + 1);
    const Eigen::VectorXd k4 = checked_eval(field, x + step * k3, i + 1);
    x += (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return x;
}

TraceWriter::TraceWriter(std::ostream& out, std::size_t dimension)
    : out_(&out), dimension_(dimension) {
  *out_ << std::setprecision(12) << "t";
  for (std::size_t i = 0; i < dimension_; ++i) *out_ << ",x_" << i;
  *out_ << '\n';
}

void TraceWriter::write(double t, const Eigen::VectorXd& x) {
  *out_ << t + offset_;
  for (Eigen::Index i = 0; i < x.size(); ++i) *out_ << ',' << x[i];
  *out_ << '\n';
}

std::function<void(double, const Eigen::VectorXd&)> TraceWriter::hook() {
  return [this](double t, const Eigen::VectorXd& x) { write(t, x); };
}

}  // namespace trajid
