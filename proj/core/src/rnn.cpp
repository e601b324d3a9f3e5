#include "trajid/rnn.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "trajid/errors.hpp"

namespace trajid {

std::size_t NetworkShape::param_count() const {
  const auto n = static_cast<std::size_t>(inputs);
  const auto m = static_cast<std::size_t>(hidden);
  const auto t = static_cast<std::size_t>(outputs);
  return m * m + m * (n + t);
}

void NetworkShape::validate() const {
  if (inputs < 1 || hidden < 1 || outputs < 1) {
    throw ShapeError("network shape needs n, m, t >= 1, got (" + std::to_string(inputs) + ", " +
                     std::to_string(hidden) + ", " + std::to_string(outputs) + ")");
  }
}

RnnWeights RnnWeights::zeros(const NetworkShape& shape) {
  shape.validate();
  return {Eigen::MatrixXd::Zero(shape.hidden, shape.inputs),
          Eigen::MatrixXd::Zero(shape.hidden, shape.hidden),
          Eigen::MatrixXd::Zero(shape.outputs, shape.hidden)};
}

void RnnWeights::check(const NetworkShape& shape) const {
  shape.validate();
  if (W.rows() != shape.hidden || W.cols() != shape.inputs || S.rows() != shape.hidden ||
      S.cols() != shape.hidden || V.rows() != shape.outputs || V.cols() != shape.hidden) {
    throw ShapeError("weight matrices do not match the network shape");
  }
  if (!W.allFinite() || !S.allFinite() || !V.allFinite()) {
    throw ShapeError("weight matrices hold non-finite entries");
  }
}

ParamLayout::ParamLayout(const NetworkShape& shape)
    : n(static_cast<std::size_t>(shape.inputs)),
      m(static_cast<std::size_t>(shape.hidden)),
      t(static_cast<std::size_t>(shape.outputs)),
      v_offset(0),
      w_offset(t * m),
      s_offset(t * m + m * n),
      size(shape.param_count()) {}

ParamVector flatten(const RnnWeights& weights, const NetworkShape& shape) {
  weights.check(shape);
  const ParamLayout layout(shape);
  ParamVector x(layout.size);
  for (int r = 0; r < shape.outputs; ++r)
    for (int c = 0; c < shape.hidden; ++c) x[layout.v(r, c)] = weights.V(r, c);
  for (int r = 0; r < shape.hidden; ++r)
    for (int c = 0; c < shape.inputs; ++c) x[layout.w(r, c)] = weights.W(r, c);
  for (int r = 0; r < shape.hidden; ++r)
    for (int c = 0; c < shape.hidden; ++c) x[layout.s(r, c)] = weights.S(r, c);
  return x;
}

RnnWeights unflatten(const ParamVector& params, const NetworkShape& shape) {
  shape.validate();
  const ParamLayout layout(shape);
  if (static_cast<std::size_t>(params.size()) != layout.size) {
    throw ShapeError("parameter vector has length " + std::to_string(params.size()) +
                     ", expected " + std::to_string(layout.size));
  }
  RnnWeights w = RnnWeights::zeros(shape);
  for (int r = 0; r < shape.outputs; ++r)
    for (int c = 0; c < shape.hidden; ++c) w.V(r, c) = params[layout.v(r, c)];
  for (int r = 0; r < shape.hidden; ++r)
    for (int c = 0; c < shape.inputs; ++c) w.W(r, c) = params[layout.w(r, c)];
  for (int r = 0; r < shape.hidden; ++r)
    for (int c = 0; c < shape.hidden; ++c) w.S(r, c) = params[layout.s(r, c)];
  return w;
}

namespace {

double tanh_value(double a) { return std::tanh(a); }
double tanh_derivative(double a) {
  const double y = std::tanh(a);
  return 1.0 - y * y;
}
double tanh_slope(double y) { return 1.0 - y * y; }

NetworkShape shape_of(const RnnWeights& w) {
  return {static_cast<int>(w.W.cols()), static_cast<int>(w.W.rows()), static_cast<int>(w.V.rows())};
}

// Pre-activations, states and activation slopes for a full pass; shared by
// the gradient and the Jacobian.
struct Pass {
  Eigen::MatrixXd pre;     // m x N
  Eigen::MatrixXd states;  // m x N
  Eigen::MatrixXd slopes;  // m x N, psi'(pre)
  Eigen::MatrixXd outputs; // t x N
};

Pass run(const RnnWeights& w, const Eigen::MatrixXd& inputs, const Eigen::VectorXd& z0,
         Activation psi) {
  const Eigen::Index m = w.S.rows();
  const Eigen::Index steps = inputs.cols();
  Pass p;
  p.pre.noalias() = w.W * inputs;
  p.states.resize(m, steps);
  p.slopes.resize(m, steps);
  Eigen::VectorXd z = z0;
  for (Eigen::Index k = 0; k < steps; ++k) {
    auto a = p.pre.col(k);
    a.noalias() += w.S * z;
    for (Eigen::Index i = 0; i < m; ++i) z[i] = psi.value(a[i]);
    if (!z.allFinite()) throw NumericError("non-finite network state", static_cast<std::size_t>(k), z);
    p.states.col(k) = z;
  }
  if (psi.slope_from_value) {
    p.slopes = p.states.unaryExpr(psi.slope_from_value);
  } else {
    p.slopes = p.pre.unaryExpr(psi.derivative);
  }
  p.outputs.noalias() = w.V * p.states;
  for (Eigen::Index k = 0; k < steps; ++k) {
    if (!p.outputs.col(k).allFinite()) {
      throw NumericError("non-finite network output", static_cast<std::size_t>(k), p.states.col(k));
    }
  }
  return p;
}

const Eigen::VectorXd& initial_state(const ResidualSystem& system, Eigen::VectorXd& storage) {
  if (system.z0.size() == 0) {
    storage = Eigen::VectorXd::Zero(system.shape.hidden);
    return storage;
  }
  return system.z0;
}

}  // namespace

Activation tanh_activation() { return {&tanh_value, &tanh_derivative, &tanh_slope}; }

ForwardResult forward(const RnnWeights& weights, const Eigen::MatrixXd& inputs,
                      const Eigen::VectorXd& z0, Activation psi) {
  const NetworkShape shape = shape_of(weights);
  weights.check(shape);
  if (inputs.rows() != shape.inputs) {
    throw ShapeError("input vectors have length " + std::to_string(inputs.rows()) +
                     ", network expects " + std::to_string(shape.inputs));
  }
  if (z0.size() != shape.hidden) {
    throw ShapeError("initial state has length " + std::to_string(z0.size()) +
                     ", network has " + std::to_string(shape.hidden) + " hidden nodes");
  }
  Pass p = run(weights, inputs, z0, psi);
  return {std::move(p.outputs), std::move(p.states)};
}

ResidualSystem::ResidualSystem(NetworkShape shape_, RegressorTable table_)
    : ResidualSystem(shape_, std::move(table_), Eigen::VectorXd::Zero(shape_.hidden)) {}

ResidualSystem::ResidualSystem(NetworkShape shape_, RegressorTable table_, Eigen::VectorXd z0_)
    : shape(shape_), table(std::move(table_)), z0(std::move(z0_)) {
  shape.validate();
  if (table.inputs.rows() != shape.inputs) {
    throw ShapeError("regressor dimension " + std::to_string(table.inputs.rows()) +
                     " does not match network input count " + std::to_string(shape.inputs));
  }
  if (table.targets.rows() != shape.outputs || table.targets.cols() != table.inputs.cols()) {
    throw ShapeError("target table does not match the regressor table");
  }
  if (z0.size() != 0 && z0.size() != shape.hidden) {
    throw ShapeError("initial state length does not match the hidden layer");
  }
}

std::size_t ResidualSystem::residual_count() const {
  return table.rows() * static_cast<std::size_t>(shape.outputs);
}

Eigen::VectorXd residuals(const ParamVector& params, const ResidualSystem& system) {
  const RnnWeights w = unflatten(params, system.shape);
  Eigen::VectorXd storage;
  const Pass p = run(w, system.table.inputs, initial_state(system, storage), system.psi);
  const Eigen::MatrixXd diff = p.outputs - system.table.targets;
  return Eigen::Map<const Eigen::VectorXd>(diff.data(), diff.size());
}

double sse(const ParamVector& params, const ResidualSystem& system) {
  return residuals(params, system).squaredNorm();
}

Eigen::MatrixXd residual_jacobian(const ParamVector& params, const ResidualSystem& system) {
  const NetworkShape& shape = system.shape;
  const ParamLayout layout(shape);
  const RnnWeights w = unflatten(params, shape);
  Eigen::VectorXd storage;
  const Eigen::VectorXd& z0 = initial_state(system, storage);
  const Pass p = run(w, system.table.inputs, z0, system.psi);

  const int m = shape.hidden;
  const int n = shape.inputs;
  const int t = shape.outputs;
  const auto np = static_cast<Eigen::Index>(layout.size);
  const Eigen::Index steps = system.table.inputs.cols();

  Eigen::MatrixXd jac(steps * t, np);
  Eigen::MatrixXd sens = Eigen::MatrixXd::Zero(m, np);  // dz(k-1)/dx
  Eigen::MatrixXd next(m, np);
  Eigen::VectorXd z_prev = z0;

  for (Eigen::Index k = 0; k < steps; ++k) {
    const auto u = system.table.inputs.col(k);
    next.noalias() = w.S * sens;
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) next(i, layout.w(i, j)) += u[j];
      for (int j = 0; j < m; ++j) next(i, layout.s(i, j)) += z_prev[j];
      next.row(i) *= p.slopes(i, k);
    }
    sens.swap(next);
    for (int r = 0; r < t; ++r) {
      auto row = jac.row(k * t + r);
      row.noalias() = w.V.row(r) * sens;
      for (int j = 0; j < m; ++j) row[layout.v(r, j)] += p.states(j, k);
    }
    z_prev = p.states.col(k);
  }
  return jac;
}

Eigen::VectorXd cost_gradient(const ParamVector& params, const ResidualSystem& system) {
  const NetworkShape& shape = system.shape;
  const ParamLayout layout(shape);
  const RnnWeights w = unflatten(params, shape);
  Eigen::VectorXd storage;
  const Eigen::VectorXd& z0 = initial_state(system, storage);
  const Pass p = run(w, system.table.inputs, z0, system.psi);

  const Eigen::Index m = shape.hidden;
  const Eigen::Index steps = system.table.inputs.cols();
  const Eigen::MatrixXd err = p.outputs - system.table.targets;
  // Backward sweep for delta(k) = dF/da(k); the weight gradients are then
  // three dense products.
  Eigen::MatrixXd delta(m, steps);
  Eigen::VectorXd carry = Eigen::VectorXd::Zero(m);  // S^T delta(k+1)
  const Eigen::MatrixXd Vt = w.V.transpose();
  const Eigen::MatrixXd St = w.S.transpose();
  for (Eigen::Index k = steps - 1; k >= 0; --k) {
    auto d = delta.col(k);
    d.noalias() = Vt * err.col(k);
    d += carry;
    d.array() *= p.slopes.col(k).array();
    carry.noalias() = St * d;
  }
  Eigen::MatrixXd gV = err * p.states.transpose();
  Eigen::MatrixXd gW = delta * system.table.inputs.transpose();
  Eigen::MatrixXd gS = delta.col(0) * z0.transpose();
  if (steps > 1) {
    gS.noalias() += delta.rightCols(steps - 1) * p.states.leftCols(steps - 1).transpose();
  }
  return flatten(RnnWeights{gW, gS, gV}, shape);
}

}  // namespace trajid
