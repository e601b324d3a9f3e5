#include "trajid/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "json_fields.hpp"
#include "trajid/errors.hpp"
#include "trajid/objective.hpp"

namespace trajid {

using nlohmann::json;
using detail::read_field;
using detail::require_known_keys;

namespace {

// Decorrelates seeds derived from the same user-facing seed.
constexpr std::uint64_t kValidationSalt = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kMeasurementSalt = 0xbf58476d1ce4e5b9ULL;

RegressorTable take_rows(const RegressorTable& table, std::size_t begin, std::size_t count) {
  RegressorTable out;
  out.inputs = table.inputs.middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
  out.targets = table.targets.middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
  out.first_index = table.first_index + begin;
  return out;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v, double mean) {
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size()));
}

Dataset head(const Dataset& data, std::size_t count) {
  Dataset out = data;
  out.input.resize(count);
  out.output.resize(count);
  return out;
}

template <class F>
auto stage(const char* name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const StiffnessError& e) {
    throw StiffnessError(std::string(name) + ": " + e.what(), e.step(), e.snapshot());
  } catch (const NumericError& e) {
    throw NumericError(std::string(name) + ": " + e.what(), e.step(), e.snapshot());
  } catch (const ShapeError& e) {
    throw ShapeError(std::string(name) + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(name) + ": " + e.what());
  } catch (const BudgetExceeded& e) {
    throw BudgetExceeded(std::string(name) + ": " + e.what(), e.best(), e.best_cost());
  }
}

std::string prediction_csv(const RegressorTable& table, const Evaluation& eval, const Normalizer& norm) {
  std::ostringstream out;
  out << "k,y,yhat,err\n" << std::setprecision(17);
  for (std::size_t r = 0; r < table.rows(); ++r) {
    const double y = norm.output_value(table.targets(0, static_cast<Eigen::Index>(r)));
    const double yhat = eval.diverged ? std::nan("") : norm.output_value(eval.predictions(static_cast<Eigen::Index>(r)));
    out << table.first_index + r << ',' << y << ',' << yhat << ',' << yhat - y << '\n';
  }
  return out.str();
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

// ----------------------------------------------------------- regressors

std::size_t RegressorConfig::dimension() const {
  return (include_bias ? 1u : 0u) + static_cast<std::size_t>(input_lags) + static_cast<std::size_t>(output_lags);
}

std::size_t RegressorConfig::first_index() const {
  return static_cast<std::size_t>(std::max(input_lags - 1, output_lags));
}

void RegressorConfig::validate() const {
  if (input_lags < 1) throw ConfigError("input_lags must be at least 1");
  if (output_lags < 0) throw ConfigError("output_lags must be non-negative");
}

RegressorConfig tanks_regressors() { return {.include_bias = true, .input_lags = 10, .output_lags = 9}; }

RegressorConfig boucwen_regressors() { return {.include_bias = false, .input_lags = 6, .output_lags = 5}; }

RegressorTable build_regressors(const Dataset& data, const RegressorConfig& config) {
  config.validate();
  data.validate();
  const std::size_t first = config.first_index();
  if (data.size() <= first) {
    throw ConfigError("dataset has " + std::to_string(data.size()) + " samples; at least " +
                      std::to_string(first + 1) + " are needed for these lags");
  }
  const std::size_t rows = data.size() - first;
  RegressorTable table;
  table.first_index = first;
  table.inputs.resize(static_cast<Eigen::Index>(config.dimension()), static_cast<Eigen::Index>(rows));
  table.targets.resize(1, static_cast<Eigen::Index>(rows));
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t k = first + r;
    const auto c = static_cast<Eigen::Index>(r);
    Eigen::Index i = 0;
    if (config.include_bias) table.inputs(i++, c) = 1.0;
    for (int j = 0; j < config.input_lags; ++j) table.inputs(i++, c) = data.input[k - j];
    for (int j = 1; j <= config.output_lags; ++j) table.inputs(i++, c) = data.output[k - j];
    table.targets(0, c) = data.output[k];
  }
  return table;
}

void SplitFractions::validate() const {
  if (!(train > 0.0 && train <= 1.0)) throw ConfigError("train fraction must lie in (0, 1]");
  if (!(validation >= 0.0 && validation <= 1.0)) throw ConfigError("validation fraction must lie in [0, 1]");
  if (train + validation > 1.0 + 1e-12) throw ConfigError("split fractions sum to more than 1");
}

std::pair<RegressorTable, RegressorTable> split(const RegressorTable& table, const SplitFractions& fractions,
                                                bool contiguous) {
  fractions.validate();
  if (!contiguous) throw ConfigError("only contiguous splits are supported");
  const double rows = static_cast<double>(table.rows());
  const auto n_train = static_cast<std::size_t>(std::floor(fractions.train * rows + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(fractions.validation * rows + 1e-9));
  if (n_train == 0) throw ConfigError("training partition is empty");
  if (fractions.validation > 0.0 && n_val == 0) throw ConfigError("validation partition is empty");
  return {take_rows(table, 0, n_train), take_rows(table, n_train, n_val)};
}

Normalizer Normalizer::fit(const Dataset& data) {
  data.validate();
  if (data.size() < 2) throw ConfigError("normalization needs at least two samples");
  Normalizer n;
  n.input_mean = mean_of(data.input);
  n.input_std = std_of(data.input, n.input_mean);
  n.output_mean = mean_of(data.output);
  n.output_std = std_of(data.output, n.output_mean);
  if (!(n.input_std > 0.0)) n.input_std = 1.0;
  if (!(n.output_std > 0.0)) n.output_std = 1.0;
  return n;
}

Dataset Normalizer::apply(const Dataset& data) const {
  Dataset out = data;
  for (double& v : out.input) v = (v - input_mean) / input_std;
  for (double& v : out.output) v = (v - output_mean) / output_std;
  return out;
}

ParamVector init_params(const NetworkShape& shape, double init_std, std::uint64_t seed) {
  shape.validate();
  if (!(init_std > 0.0)) throw ConfigError("init_std must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, init_std);
  ParamVector p(static_cast<Eigen::Index>(shape.param_count()));
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = normal(rng);
  return p;
}

// ------------------------------------------------------------ evaluation

Evaluation evaluate(const ParamVector& params, const NetworkShape& shape, const RegressorTable& table,
                    const RegressorConfig& regressors, EvalMode mode) {
  if (table.rows() == 0) throw ConfigError("cannot evaluate on an empty table");
  if (table.input_dim() != static_cast<std::size_t>(shape.inputs) ||
      table.output_dim() != static_cast<std::size_t>(shape.outputs)) {
    throw ShapeError("table does not match the network shape");
  }
  const RnnWeights w = unflatten(params, shape);
  Evaluation eval;
  const auto rows = static_cast<Eigen::Index>(table.rows());
  if (mode == EvalMode::OneStep) {
    const ForwardResult fr = forward(w, table.inputs, Eigen::VectorXd::Zero(shape.hidden));
    eval.predictions = fr.outputs.row(0).transpose();
  } else {
    if (shape.outputs != 1) throw ShapeError("free-run evaluation needs a single output");
    if (regressors.dimension() != table.input_dim()) throw ShapeError("regressor layout does not match the table");
    const auto off = static_cast<Eigen::Index>(regressors.output_lag_offset());
    Eigen::VectorXd z = Eigen::VectorXd::Zero(shape.hidden);
    Eigen::VectorXd u(table.inputs.rows());
    eval.predictions.resize(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
      u = table.inputs.col(r);
      for (int j = 1; j <= regressors.output_lags; ++j) {
        if (r - j >= 0) u(off + j - 1) = eval.predictions(r - j);
      }
      z = (w.W * u + w.S * z).array().tanh().matrix();
      const double yhat = w.V.row(0).dot(z);
      if (!std::isfinite(yhat)) {
        eval.diverged = true;
        eval.predictions.resize(0);
        eval.sse = std::numeric_limits<double>::infinity();
        eval.mse = eval.sse;
        return eval;
      }
      eval.predictions(r) = yhat;
    }
  }
  const Eigen::VectorXd err = eval.predictions - table.targets.row(0).transpose();
  eval.sse = err.squaredNorm();
  eval.mse = eval.sse / static_cast<double>(rows);
  return eval;
}

// ---------------------------------------------------------------- config

std::string to_string(Plant plant) { return plant == Plant::Tanks ? "tanks" : "boucwen"; }

std::string to_string(Trainer trainer) { return trainer == Trainer::Qgs ? "qgs" : "dtb"; }

Plant parse_plant(const std::string& name) {
  if (name == "tanks") return Plant::Tanks;
  if (name == "boucwen") return Plant::BoucWen;
  throw ConfigError("unknown plant '" + name + "' (expected tanks or boucwen)");
}

Trainer parse_trainer(const std::string& name) {
  if (name == "qgs") return Trainer::Qgs;
  if (name == "dtb") return Trainer::Dtb;
  throw ConfigError("unknown trainer '" + name + "' (expected qgs or dtb)");
}

NetworkShape ExperimentConfig::shape() const {
  return {static_cast<int>(regressors.dimension()), hidden, 1};
}

void ExperimentConfig::validate() const {
  if (plant == Plant::Tanks) {
    tanks.validate();
    if (std::abs(excitation.Ts - tanks.Ts) > 1e-12 * tanks.Ts) {
      throw ConfigError("excitation.Ts must equal tanks.Ts");
    }
  } else {
    boucwen.validate();
    if (std::abs(excitation.Ts * boucwen.out_rate - 1.0) > 1e-12) {
      throw ConfigError("excitation.Ts must equal 1 / boucwen.out_rate");
    }
  }
  excitation.validate();
  regressors.validate();
  split.validate();
  if (hidden < 1) throw ConfigError("hidden must be at least 1");
  if (!(init_std > 0.0)) throw ConfigError("init_std must be positive");
  if (!(bound > 0.0)) throw ConfigError("bound must be positive");
  if (data.train_samples <= regressors.first_index()) throw ConfigError("train_samples is too small for the lags");
  if (split.validation > 0.0 && data.validation_samples > 0) {
    throw ConfigError("use either split.validation or data.validation_samples, not both");
  }
  if (split.validation == 0.0 && data.validation_samples <= regressors.first_index()) {
    throw ConfigError("no validation data: set data.validation_samples or split.validation");
  }
  qgs.validate();
  dtb.validate();
}

ExperimentConfig default_experiment(Plant plant) {
  ExperimentConfig c;
  c.plant = plant;
  if (plant == Plant::Tanks) {
    c.name = "tanks";
    c.excitation = MultisineConfig{.f_min = 0.0,
                                   .f_max = 0.0144,
                                   .n_samples = 1024,
                                   .Ts = c.tanks.Ts,
                                   .amplitude_profile = AmplitudeProfile::LinearRolloff,
                                   .rms_target = 0.75,
                                   .phase_seed = 0,
                                   .offset = 2.5};
    c.regressors = tanks_regressors();
    c.hidden = 9;
  } else {
    c.name = "boucwen";
    c.excitation = MultisineConfig{.f_min = 5.0,
                                   .f_max = 150.0,
                                   .n_samples = 1024,
                                   .Ts = 1.0 / c.boucwen.out_rate,
                                   .amplitude_profile = AmplitudeProfile::Flat,
                                   .rms_target = 50.0,
                                   .phase_seed = 0,
                                   .offset = 0.0};
    c.regressors = boucwen_regressors();
    c.hidden = 7;
  }
  // The loss is stiff (Hessian spectrum spans many decades), so each forward
  // phase gets a fixed time slice and reverse phases stay near their base.
  c.qgs.forward.max_time = 1.0;
  c.qgs.escape_radius = 1.0;
  c.dtb.pgs_forward.max_time = 1.0;
  c.dtb.escape_radius = 1.0;
  return c;
}

void to_json(json& j, const IntegratorConfig& c) {
  j = {{"initial_step", c.initial_step}, {"min_step", c.min_step}, {"max_step", c.max_step},
       {"rel_tol", c.rel_tol},           {"abs_tol", c.abs_tol},   {"max_time", c.max_time}};
}

void from_json(const json& j, IntegratorConfig& c) {
  require_known_keys(j, {"initial_step", "min_step", "max_step", "rel_tol", "abs_tol", "max_time"},
                     "integrator config");
  read_field(j, "initial_step", c.initial_step);
  read_field(j, "min_step", c.min_step);
  read_field(j, "max_step", c.max_step);
  read_field(j, "rel_tol", c.rel_tol);
  read_field(j, "abs_tol", c.abs_tol);
  read_field(j, "max_time", c.max_time);
}

void to_json(json& j, const QgsBudget& b) {
  j = {{"max_equilibria", b.max_equilibria},
       {"max_escape_attempts", b.max_escape_attempts},
       {"forward", b.forward},
       {"reverse", b.reverse},
       {"equilibrium_tol", b.equilibrium_tol},
       {"perturbation_scale", b.perturbation_scale},
       {"dedup_tol", b.dedup_tol},
       {"eig_tol", b.eig_tol},
       {"saddle_grad_tol", b.saddle_grad_tol},
       {"escape_radius", b.escape_radius},
       {"lanczos_iterations", b.lanczos_iterations},
       {"rng_seed", b.rng_seed}};
}

void from_json(const json& j, QgsBudget& b) {
  require_known_keys(j, {"max_equilibria", "max_escape_attempts", "forward", "reverse", "equilibrium_tol",
                         "perturbation_scale", "dedup_tol", "eig_tol", "saddle_grad_tol",
                         "escape_radius", "lanczos_iterations", "rng_seed"},
                     "qgs budget");
  read_field(j, "max_equilibria", b.max_equilibria);
  read_field(j, "max_escape_attempts", b.max_escape_attempts);
  if (j.contains("forward")) from_json(j.at("forward"), b.forward);
  if (j.contains("reverse")) from_json(j.at("reverse"), b.reverse);
  read_field(j, "equilibrium_tol", b.equilibrium_tol);
  read_field(j, "perturbation_scale", b.perturbation_scale);
  read_field(j, "dedup_tol", b.dedup_tol);
  read_field(j, "eig_tol", b.eig_tol);
  read_field(j, "saddle_grad_tol", b.saddle_grad_tol);
  read_field(j, "escape_radius", b.escape_radius);
  read_field(j, "lanczos_iterations", b.lanczos_iterations);
  read_field(j, "rng_seed", b.rng_seed);
}

void to_json(json& j, const DtbBudget& b) {
  j = {{"max_components", b.max_components},
       {"max_minima_per_component", b.max_minima_per_component},
       {"max_escape_attempts", b.max_escape_attempts},
       {"max_component_attempts", b.max_component_attempts},
       {"pgs_forward", b.pgs_forward},
       {"pgs_reverse", b.pgs_reverse},
       {"qgs_forward", b.qgs_forward},
       {"qgs_reverse", b.qgs_reverse},
       {"feasibility_tol", b.feasibility_tol},
       {"equilibrium_tol", b.equilibrium_tol},
       {"phase_tol", b.phase_tol},
       {"perturbation_scale", b.perturbation_scale},
       {"component_perturbation", b.component_perturbation},
       {"exit_radius_fraction", b.exit_radius_fraction},
       {"dedup_tol", b.dedup_tol},
       {"eig_tol", b.eig_tol},
       {"saddle_grad_tol", b.saddle_grad_tol},
       {"escape_radius", b.escape_radius},
       {"restore_every", b.restore_every},
       {"lanczos_iterations", b.lanczos_iterations},
       {"rng_seed", b.rng_seed}};
}

void from_json(const json& j, DtbBudget& b) {
  require_known_keys(j, {"max_components", "max_minima_per_component", "max_escape_attempts",
                         "max_component_attempts", "pgs_forward", "pgs_reverse", "qgs_forward", "qgs_reverse",
                         "feasibility_tol", "equilibrium_tol", "phase_tol", "perturbation_scale",
                         "component_perturbation", "exit_radius_fraction", "dedup_tol", "eig_tol",
                         "saddle_grad_tol", "escape_radius", "restore_every", "lanczos_iterations",
                         "rng_seed"},
                     "dtb budget");
  read_field(j, "max_components", b.max_components);
  read_field(j, "max_minima_per_component", b.max_minima_per_component);
  read_field(j, "max_escape_attempts", b.max_escape_attempts);
  read_field(j, "max_component_attempts", b.max_component_attempts);
  if (j.contains("pgs_forward")) from_json(j.at("pgs_forward"), b.pgs_forward);
  if (j.contains("pgs_reverse")) from_json(j.at("pgs_reverse"), b.pgs_reverse);
  if (j.contains("qgs_forward")) from_json(j.at("qgs_forward"), b.qgs_forward);
  if (j.contains("qgs_reverse")) from_json(j.at("qgs_reverse"), b.qgs_reverse);
  read_field(j, "feasibility_tol", b.feasibility_tol);
  read_field(j, "equilibrium_tol", b.equilibrium_tol);
  read_field(j, "phase_tol", b.phase_tol);
  read_field(j, "perturbation_scale", b.perturbation_scale);
  read_field(j, "component_perturbation", b.component_perturbation);
  read_field(j, "exit_radius_fraction", b.exit_radius_fraction);
  read_field(j, "dedup_tol", b.dedup_tol);
  read_field(j, "eig_tol", b.eig_tol);
  read_field(j, "saddle_grad_tol", b.saddle_grad_tol);
  read_field(j, "escape_radius", b.escape_radius);
  read_field(j, "restore_every", b.restore_every);
  read_field(j, "lanczos_iterations", b.lanczos_iterations);
  read_field(j, "rng_seed", b.rng_seed);
}

void to_json(json& j, const ExperimentConfig& c) {
  json regressors = {{"include_bias", c.regressors.include_bias},
                     {"input_lags", c.regressors.input_lags},
                     {"output_lags", c.regressors.output_lags}};
  j = {{"name", c.name},
       {"plant", to_string(c.plant)},
       {"tanks", c.tanks},
       {"boucwen", c.boucwen},
       {"excitation", c.excitation},
       {"data", {{"train_samples", c.data.train_samples}, {"validation_samples", c.data.validation_samples}}},
       {"regressors", regressors},
       {"hidden", c.hidden},
       {"trainer", to_string(c.trainer)},
       {"qgs", c.qgs},
       {"dtb", c.dtb},
       {"bound", c.bound},
       {"init_std", c.init_std},
       {"split", {{"train", c.split.train}, {"validation", c.split.validation}}},
       {"seeds", {{"init", c.seeds.init}, {"noise", c.seeds.noise}, {"phases", c.seeds.phases}}}};
}

ExperimentConfig experiment_from_json(const json& j) {
  require_known_keys(j, {"name", "plant", "tanks", "boucwen", "excitation", "data", "regressors", "hidden",
                         "trainer", "qgs", "dtb", "bound", "init_std", "split", "seeds"},
                     "experiment config");
  std::string plant = "boucwen";
  read_field(j, "plant", plant);
  ExperimentConfig c = default_experiment(parse_plant(plant));
  read_field(j, "name", c.name);
  if (j.contains("tanks")) from_json(j.at("tanks"), c.tanks);
  if (j.contains("boucwen")) from_json(j.at("boucwen"), c.boucwen);
  if (j.contains("excitation")) from_json(j.at("excitation"), c.excitation);
  if (j.contains("data")) {
    const json& d = j.at("data");
    require_known_keys(d, {"train_samples", "validation_samples"}, "data");
    read_field(d, "train_samples", c.data.train_samples);
    read_field(d, "validation_samples", c.data.validation_samples);
  }
  if (j.contains("regressors")) {
    const json& r = j.at("regressors");
    require_known_keys(r, {"include_bias", "input_lags", "output_lags"}, "regressors");
    read_field(r, "include_bias", c.regressors.include_bias);
    read_field(r, "input_lags", c.regressors.input_lags);
    read_field(r, "output_lags", c.regressors.output_lags);
  }
  read_field(j, "hidden", c.hidden);
  std::string trainer = to_string(c.trainer);
  read_field(j, "trainer", trainer);
  c.trainer = parse_trainer(trainer);
  if (j.contains("qgs")) from_json(j.at("qgs"), c.qgs);
  if (j.contains("dtb")) from_json(j.at("dtb"), c.dtb);
  read_field(j, "bound", c.bound);
  read_field(j, "init_std", c.init_std);
  if (j.contains("split")) {
    const json& s = j.at("split");
    require_known_keys(s, {"train", "validation"}, "split");
    read_field(s, "train", c.split.train);
    read_field(s, "validation", c.split.validation);
  }
  if (j.contains("seeds")) {
    const json& s = j.at("seeds");
    require_known_keys(s, {"init", "noise", "phases"}, "seeds");
    read_field(s, "init", c.seeds.init);
    read_field(s, "noise", c.seeds.noise);
    read_field(s, "phases", c.seeds.phases);
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return experiment_from_json(j);
}

// ------------------------------------------------------------ experiment

ExperimentData prepare_data(const ExperimentConfig& config) {
  config.validate();
  auto simulate = [&](std::size_t length, std::uint64_t phase_seed, std::uint64_t noise_seed) {
    MultisineConfig ms = config.excitation;
    ms.phase_seed = phase_seed;
    const std::vector<double> u = multisine(ms, length);
    Dataset d = config.plant == Plant::Tanks
                    ? tanks_simulate(config.tanks, u, {}, {noise_seed, noise_seed ^ kMeasurementSalt})
                    : boucwen_simulate(config.boucwen, u);
    d.meta["excitation"] = ms;
    return d;
  };

  ExperimentData out;
  out.train_raw = simulate(config.data.train_samples, config.seeds.phases, config.seeds.noise);
  const bool independent = config.split.validation == 0.0;
  if (independent) {
    out.validation_raw = simulate(config.data.validation_samples, config.seeds.phases ^ kValidationSalt,
                                  config.seeds.noise ^ kValidationSalt);
    out.normalizer = Normalizer::fit(out.train_raw);
    out.train = build_regressors(out.normalizer.apply(out.train_raw), config.regressors);
    out.validation = build_regressors(out.normalizer.apply(out.validation_raw), config.regressors);
    if (config.split.train < 1.0) out.train = split(out.train, config.split).first;
  } else {
    const auto fit_len = static_cast<std::size_t>(
        std::floor(config.split.train * static_cast<double>(out.train_raw.size()) + 1e-9));
    out.normalizer = Normalizer::fit(head(out.train_raw, std::max<std::size_t>(fit_len, 2)));
    auto parts = split(build_regressors(out.normalizer.apply(out.train_raw), config.regressors), config.split);
    out.train = std::move(parts.first);
    out.validation = std::move(parts.second);
  }
  return out;
}

json Metrics::to_json() const {
  auto finite_or_null = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  return {{"train_sse", train_sse},
          {"train_mse", train_mse},
          {"validation_mse_onestep", validation_mse_onestep},
          {"validation_mse_freerun", finite_or_null(validation_mse_freerun)},
          {"normalized",
           {{"train_sse", normalized_train_sse},
            {"train_mse", normalized_train_mse},
            {"validation_mse_onestep", normalized_validation_mse_onestep},
            {"validation_mse_freerun", finite_or_null(normalized_validation_mse_freerun)}}},
          {"freerun_diverged", freerun_diverged},
          {"train_rows", train_rows},
          {"validation_rows", validation_rows},
          {"equilibria", equilibria},
          {"converged_equilibria", converged_equilibria},
          {"trainer", trainer},
          {"seeds", {{"init", seeds.init}, {"noise", seeds.noise}, {"phases", seeds.phases}}}};
}

json to_json(const StoredParams& s) {
  return {{"shape", {{"inputs", s.shape.inputs}, {"hidden", s.shape.hidden}, {"outputs", s.shape.outputs}}},
          {"regressors",
           {{"include_bias", s.regressors.include_bias},
            {"input_lags", s.regressors.input_lags},
            {"output_lags", s.regressors.output_lags}}},
          {"normalizer",
           {{"input_mean", s.normalizer.input_mean},
            {"input_std", s.normalizer.input_std},
            {"output_mean", s.normalizer.output_mean},
            {"output_std", s.normalizer.output_std}}},
          {"params", vector_json(s.params)}};
}

StoredParams stored_params_from_json(const json& j) {
  try {
    StoredParams s;
    const json& sh = j.at("shape");
    s.shape = {sh.at("inputs").get<int>(), sh.at("hidden").get<int>(), sh.at("outputs").get<int>()};
    const json& r = j.at("regressors");
    s.regressors = {r.at("include_bias").get<bool>(), r.at("input_lags").get<int>(), r.at("output_lags").get<int>()};
    const json& n = j.at("normalizer");
    s.normalizer = {n.at("input_mean").get<double>(), n.at("input_std").get<double>(),
                    n.at("output_mean").get<double>(), n.at("output_std").get<double>()};
    const auto p = j.at("params").get<std::vector<double>>();
    s.params = Eigen::Map<const Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(p.size()));
    s.shape.validate();
    s.regressors.validate();
    if (s.regressors.dimension() != static_cast<std::size_t>(s.shape.inputs)) {
      throw ShapeError("regressor dimension does not match shape.inputs");
    }
    if (static_cast<std::size_t>(s.params.size()) != s.shape.param_count()) {
      throw ShapeError("params has " + std::to_string(s.params.size()) + " entries, shape needs " +
                       std::to_string(s.shape.param_count()));
    }
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("params file: ") + e.what());
  }
}

Metrics evaluate_dataset(const StoredParams& stored, const Dataset& data) {
  const RegressorTable table = build_regressors(stored.normalizer.apply(data), stored.regressors);
  const Evaluation one = evaluate(stored.params, stored.shape, table, stored.regressors, EvalMode::OneStep);
  const Evaluation free = evaluate(stored.params, stored.shape, table, stored.regressors, EvalMode::FreeRun);
  const double scale = stored.normalizer.output_std * stored.normalizer.output_std;
  Metrics m;
  m.validation_rows = table.rows();
  m.normalized_validation_mse_onestep = one.mse;
  m.normalized_validation_mse_freerun = free.mse;
  m.validation_mse_onestep = one.mse * scale;
  m.validation_mse_freerun = free.mse * scale;
  m.freerun_diverged = free.diverged;
  return m;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + tmp.string());
    out << text;
    if (!out) throw ConfigError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ExperimentResult run_experiment(const ExperimentConfig& config, const std::optional<std::filesystem::path>& out_dir,
                                TraceWriter* trace) {
  const auto start = std::chrono::steady_clock::now();
  stage("config", [&] { config.validate(); });
  const ExperimentData data = stage("data", [&] { return prepare_data(config); });
  const NetworkShape shape = config.shape();
  const ParamVector init = stage("init", [&] { return init_params(shape, config.init_std, config.seeds.init); });

  ExperimentResult result;
  result.training = stage("train", [&] {
    const RnnResidualModel model(ResidualSystem(shape, data.train));
    if (config.trainer == Trainer::Qgs) {
      QgsBudget budget = config.qgs;
      budget.trace = trace;
      return qgs_train(model, init, budget);
    }
    DtbBudget budget = config.dtb;
    budget.trace = trace;
    return dtb_train(model, init, BoxBounds::uniform(shape.param_count(), config.bound), budget);
  });
  result.params = result.training.best.params;

  stage("evaluate", [&] {
    const Evaluation train_eval = evaluate(result.params, shape, data.train, config.regressors, EvalMode::OneStep);
    result.validation_onestep = evaluate(result.params, shape, data.validation, config.regressors, EvalMode::OneStep);
    result.validation_freerun = evaluate(result.params, shape, data.validation, config.regressors, EvalMode::FreeRun);
    const double scale = data.normalizer.output_std * data.normalizer.output_std;
    Metrics& m = result.metrics;
    m.normalized_train_sse = train_eval.sse;
    m.normalized_train_mse = train_eval.mse;
    m.normalized_validation_mse_onestep = result.validation_onestep.mse;
    m.normalized_validation_mse_freerun = result.validation_freerun.mse;
    m.train_sse = train_eval.sse * scale;
    m.train_mse = m.train_sse / static_cast<double>(data.train.rows());
    m.validation_mse_onestep = result.validation_onestep.mse * scale;
    m.validation_mse_freerun = result.validation_freerun.mse * scale;
    m.freerun_diverged = result.validation_freerun.diverged;
    m.train_rows = data.train.rows();
    m.validation_rows = data.validation.rows();
    m.equilibria = result.training.all.size();
    m.converged_equilibria = result.training.converged_count();
    m.trainer = to_string(config.trainer);
    m.seeds = config.seeds;
  });
  result.metrics.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (out_dir) {
    stage("write", [&] {
      const auto& dir = *out_dir;
      write_file_atomic(dir / "metrics.json", result.metrics.to_json().dump(2) + "\n");
      write_file_atomic(dir / "timing.json",
                        json{{"wall_time_seconds", result.metrics.wall_time_seconds}}.dump(2) + "\n");
      write_file_atomic(dir / "predictions.csv",
                        prediction_csv(data.validation, result.validation_onestep, data.normalizer));
      write_file_atomic(dir / "predictions_freerun.csv",
                        prediction_csv(data.validation, result.validation_freerun, data.normalizer));
      write_file_atomic(dir / "search_log.json", result.training.log.to_json().dump(2) + "\n");
      const StoredParams stored{shape, config.regressors, data.normalizer, result.params};
      write_file_atomic(dir / "params.json", to_json(stored).dump(2) + "\n");
      write_file_atomic(dir / "config.json", json(config).dump(2) + "\n");
    });
  }
  return result;
}

// ------------------------------------------------------------ comparison

double median(std::vector<double> values) {
  if (values.empty()) throw ConfigError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

json ComparisonReport::to_json() const {
  json slots = json::array();
  for (std::size_t s = 0; s < trainers.size(); ++s) {
    slots.push_back({{"trainer", trainers[s]},
                     {"validation_mse_onestep", mse[s]},
                     {"normalized_validation_mse_onestep", normalized_mse[s]},
                     {"median", median[s]},
                     {"normalized_median", normalized_median[s]}});
  }
  return {{"note", "validation records are simulated locally from independently seeded excitations"},
          {"plant", plant},
          {"seeds", seeds},
          {"slots", slots},
          {"median_ratio", ratio}};
}

ComparisonReport compare(const ExperimentConfig& config, std::size_t n_seeds, std::pair<Trainer, Trainer> trainers,
                         const std::optional<std::filesystem::path>& out_dir) {
  if (n_seeds < 1) throw ConfigError("compare needs at least one seed");
  config.validate();
  ComparisonReport report;
  report.plant = to_string(config.plant);
  const Trainer slots[2] = {trainers.first, trainers.second};
  report.trainers = {to_string(slots[0]), to_string(slots[1])};
  report.mse.assign(2, {});
  report.normalized_mse.assign(2, {});
  for (std::size_t i = 0; i < n_seeds; ++i) {
    ExperimentConfig run = config;
    run.seeds.init = config.seeds.init + i;
    report.seeds.push_back(run.seeds.init);
    for (int s = 0; s < 2; ++s) {
      run.trainer = slots[s];
      std::optional<std::filesystem::path> dir;
      if (out_dir) {
        dir = *out_dir / ("seed_" + std::to_string(run.seeds.init)) /
              (std::string("slot") + std::to_string(s) + "_" + to_string(slots[s]));
      }
      const ExperimentResult r = run_experiment(run, dir);
      report.mse[s].push_back(r.metrics.validation_mse_onestep);
      report.normalized_mse[s].push_back(r.metrics.normalized_validation_mse_onestep);
    }
  }
  for (int s = 0; s < 2; ++s) {
    report.median.push_back(median(report.mse[s]));
    report.normalized_median.push_back(median(report.normalized_mse[s]));
  }
  report.ratio = report.median[1] / report.median[0];
  if (out_dir) write_file_atomic(*out_dir / "report.json", report.to_json().dump(2) + "\n");
  return report;
}

}  // namespace trajid
