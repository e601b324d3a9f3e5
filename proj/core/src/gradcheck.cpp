#include "trajid/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "trajid/objective.hpp"
#include "trajid/qgs.hpp"

namespace trajid {

double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double scale = std::max({a.lpNorm<Eigen::Infinity>(), b.lpNorm<Eigen::Infinity>(), 1e-12});
  return (a - b).lpNorm<Eigen::Infinity>() / scale;
}

Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double step = h * (1.0 + std::abs(x[i]));
    xp[i] = x[i] + step;
    const double fp = f(xp);
    xp[i] = x[i] - step;
    const double fm = f(xp);
    xp[i] = x[i];
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x, double h) {
  Eigen::MatrixXd jac;
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double step = h * (1.0 + std::abs(x[i]));
    xp[i] = x[i] + step;
    const Eigen::VectorXd fp = f(xp);
    xp[i] = x[i] - step;
    const Eigen::VectorXd fm = f(xp);
    xp[i] = x[i];
    if (i == 0) jac.resize(fp.size(), x.size());
    jac.col(i) = (fp - fm) / (2.0 * step);
  }
  return jac;
}

nlohmann::json GradcheckReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& c : cases) {
    rows.push_back({{"shape", {c.shape.inputs, c.shape.hidden, c.shape.outputs}},
                    {"samples", c.samples},
                    {"gradient_error", c.gradient_error},
                    {"jacobian_error", c.jacobian_error},
                    {"adjoint_error", c.adjoint_error},
                    {"field_error", c.field_error}});
  }
  return {{"cases", rows},
          {"max_gradient_error", max_gradient_error},
          {"max_jacobian_error", max_jacobian_error},
          {"max_adjoint_error", max_adjoint_error},
          {"max_field_error", max_field_error}};
}

GradcheckReport run_gradcheck(std::size_t configurations, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> n_dist(1, 3), m_dist(1, 4), len_dist(5, 50);
  std::normal_distribution<double> normal(0.0, 1.0);
  GradcheckReport report;
  for (std::size_t c = 0; c < configurations; ++c) {
    const NetworkShape shape{n_dist(rng), m_dist(rng), 1};
    const int len = len_dist(rng);
    RegressorTable table;
    table.inputs = Eigen::MatrixXd::NullaryExpr(shape.inputs, len, [&] { return normal(rng); });
    table.targets = Eigen::MatrixXd::NullaryExpr(1, len, [&] { return normal(rng); });
    const ResidualSystem system(shape, table);
    const Eigen::VectorXd x = Eigen::VectorXd::NullaryExpr(
        static_cast<Eigen::Index>(shape.param_count()), [&] { return 0.5 * normal(rng); });

    const Eigen::VectorXd g = cost_gradient(x, system);
    const Eigen::MatrixXd J = residual_jacobian(x, system);
    const Eigen::VectorXd h = residuals(x, system);
    const RnnResidualModel model(system);

    GradcheckCase row;
    row.shape = shape;
    row.samples = static_cast<std::size_t>(len);
    row.gradient_error =
        relative_error(g, fd_gradient([&](const Eigen::VectorXd& p) { return 0.5 * sse(p, system); }, x));
    const Eigen::MatrixXd Jfd = fd_jacobian([&](const Eigen::VectorXd& p) { return residuals(p, system); }, x);
    row.jacobian_error = relative_error(Eigen::Map<const Eigen::VectorXd>(J.data(), J.size()),
                                        Eigen::Map<const Eigen::VectorXd>(Jfd.data(), Jfd.size()));
    row.adjoint_error = relative_error(g, J.transpose() * h);
    row.field_error = (qgs_field(model)(x) + g).lpNorm<Eigen::Infinity>();

    report.max_gradient_error = std::max(report.max_gradient_error, row.gradient_error);
    report.max_jacobian_error = std::max(report.max_jacobian_error, row.jacobian_error);
    report.max_adjoint_error = std::max(report.max_adjoint_error, row.adjoint_error);
    report.max_field_error = std::max(report.max_field_error, row.field_error);
    report.cases.push_back(row);
  }
  return report;
}

}  // namespace trajid
