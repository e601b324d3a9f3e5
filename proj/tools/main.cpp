#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "trajid/errors.hpp"
#include "trajid/gradcheck.hpp"
#include "trajid/harness.hpp"
#include "trajid/plants.hpp"

using namespace trajid;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kConfig = 1, kNumeric = 2, kNoEquilibrium = 3 };

struct Common {
  std::string config;
  std::string plant;
  std::string trainer;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c, bool with_trainer) {
  cmd->add_option("--config", c.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--plant", c.plant, "tanks or boucwen; ignored when --config is given");
  if (with_trainer) cmd->add_option("--trainer", c.trainer, "qgs or dtb (overrides the config)");
  cmd->add_option("--seed", c.seed, "Seed override");
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig config = !c.config.empty() ? load_experiment(c.config)
                                               : default_experiment(parse_plant(c.plant.empty() ? "boucwen" : c.plant));
  if (!c.trainer.empty()) config.trainer = parse_trainer(c.trainer);
  config.validate();
  return config;
}

void print_metrics(const Metrics& m, bool with_train = true) {
  if (with_train) std::printf("train mse            %.6e\n", m.train_mse);
  std::printf("validation one-step  %.6e  (normalized %.6e)\n", m.validation_mse_onestep,
              m.normalized_validation_mse_onestep);
  if (m.freerun_diverged) {
    std::printf("validation free-run  diverged\n");
  } else {
    std::printf("validation free-run  %.6e  (normalized %.6e)\n", m.validation_mse_freerun,
                m.normalized_validation_mse_freerun);
  }
}

int simulate_cmd(const Common& c, const fs::path& out, const std::string& trace) {
  ExperimentConfig config = resolve(c);
  if (c.seed) config.seeds.phases = *c.seed;
  const ExperimentData data = prepare_data(config);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_dataset(data.train_raw, out);
  std::printf("wrote %s (%zu samples)\n", out.c_str(), data.train_raw.size());
  if (!data.validation_raw.input.empty()) {
    fs::path val = out;
    val.replace_filename(out.stem().string() + "_validation" + out.extension().string());
    write_dataset(data.validation_raw, val);
    std::printf("wrote %s (%zu samples)\n", val.c_str(), data.validation_raw.size());
  }
  if (!trace.empty()) {
    // Noise-free state trajectory under the training excitation.
    std::ofstream f(trace);
    if (!f) throw ConfigError("cannot open trace file " + trace);
    f.precision(17);
    const std::vector<double>& u = data.train_raw.input;
    if (config.plant == Plant::Tanks) {
      f << "k,u,x1,x2\n";
      const auto xs = tanks_states(config.tanks, u);
      for (std::size_t k = 0; k < xs.size(); ++k) f << k << ',' << u[k] << ',' << xs[k].x1 << ',' << xs[k].x2 << '\n';
    } else {
      f << "k,u,y,ydot,z\n";
      const auto xs = boucwen_states(config.boucwen, u);
      for (std::size_t k = 0; k < xs.size(); ++k) {
        f << k << ',' << u[k] << ',' << xs[k].y << ',' << xs[k].ydot << ',' << xs[k].z << '\n';
      }
    }
  }
  return kOk;
}

int train_cmd(const Common& c, const fs::path& out, const std::string& trace) {
  ExperimentConfig config = resolve(c);
  if (c.seed) config.seeds.init = *c.seed;
  fs::create_directories(out);
  std::optional<std::ofstream> trace_file;
  std::optional<TraceWriter> writer;
  if (!trace.empty()) {
    trace_file.emplace(trace);
    if (!*trace_file) throw ConfigError("cannot open trace file " + trace);
    writer.emplace(*trace_file, config.trainer == Trainer::Dtb ? 2 * config.shape().param_count()
                                                               : config.shape().param_count());
  }
  const ExperimentResult r = run_experiment(config, out, writer ? &*writer : nullptr);
  std::printf("%s on %s, init seed %llu: %zu equilibria (%zu converged), %.1f s\n", r.metrics.trainer.c_str(),
              to_string(config.plant).c_str(), static_cast<unsigned long long>(config.seeds.init),
              r.metrics.equilibria, r.metrics.converged_equilibria, r.metrics.wall_time_seconds);
  print_metrics(r.metrics);
  std::printf("artifacts in %s\n", out.c_str());
  if (r.metrics.converged_equilibria == 0) {
    std::fprintf(stderr, "budget exhausted without a converged equilibrium; best point reached was stored\n");
    return kNoEquilibrium;
  }
  return kOk;
}

int evaluate_cmd(const Common& c, const std::string& params, const std::string& data_path, const fs::path& out) {
  const StoredParams stored = stored_params_from_json([&] {
    std::ifstream in(params);
    if (!in) throw ConfigError("cannot open params file " + params);
    try {
      return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("params file: ") + e.what());
    }
  }());
  Dataset data;
  if (!data_path.empty()) {
    data = read_dataset(data_path);
  } else {
    // Fresh validation record from the config.
    ExperimentConfig config = resolve(c);
    if (c.seed) config.seeds.phases = *c.seed;
    ExperimentData d = prepare_data(config);
    data = d.validation_raw.input.empty() ? d.train_raw : d.validation_raw;
  }
  const Metrics m = evaluate_dataset(stored, data);
  print_metrics(m, false);
  if (!out.empty()) {
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_file_atomic(out, m.to_json().dump(2) + "\n");
  }
  return kOk;
}

int compare_cmd(const Common& c, std::size_t n_seeds, const fs::path& out) {
  ExperimentConfig config = resolve(c);
  if (c.seed) config.seeds.init = *c.seed;
  const ComparisonReport r = compare(config, n_seeds, {Trainer::Qgs, Trainer::Dtb}, out);
  std::printf("%s, validation one-step MSE\n%-6s %-14s %-14s\n", r.plant.c_str(), "seed", r.trainers[0].c_str(),
              r.trainers[1].c_str());
  for (std::size_t i = 0; i < r.seeds.size(); ++i) {
    std::printf("%-6llu %-14.6e %-14.6e\n", static_cast<unsigned long long>(r.seeds[i]), r.mse[0][i], r.mse[1][i]);
  }
  std::printf("%-6s %-14.6e %-14.6e\nmedian ratio %s/%s = %.4f\n", "median", r.median[0], r.median[1],
              r.trainers[1].c_str(), r.trainers[0].c_str(), r.ratio);
  std::printf("report in %s\n", (out / "report.json").c_str());
  return kOk;
}

int gradcheck_cmd(std::size_t configurations, std::uint64_t seed, double tol, const std::string& out) {
  const GradcheckReport r = run_gradcheck(configurations, seed);
  std::printf("configurations        %zu\n", r.cases.size());
  std::printf("gradient vs fd        %.3e\n", r.max_gradient_error);
  std::printf("jacobian vs fd        %.3e\n", r.max_jacobian_error);
  std::printf("adjoint vs J^T h      %.3e\n", r.max_adjoint_error);
  std::printf("qgs field + gradient  %.3e\n", r.max_field_error);
  if (!out.empty()) write_file_atomic(out, r.to_json().dump(2) + "\n");
  const bool ok = r.max_gradient_error <= tol && r.max_jacobian_error <= tol && r.max_adjoint_error <= tol;
  std::printf("%s (tolerance %.0e)\n", ok ? "ok" : "exceeded", tol);
  return ok ? kOk : kNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recurrent network identification by trajectory-based global search"};
  app.require_subcommand(1);

  Common common;
  fs::path out;
  std::string trace;

  auto* sim = app.add_subcommand("simulate", "Simulate a plant under its configured excitation");
  add_common(sim, common, false);
  sim->add_option("--out", out, "Dataset CSV path")->default_str("data.csv");
  sim->add_option("--trace", trace, "Write the noise-free state trajectory to this CSV");

  auto* train = app.add_subcommand("train", "Train and evaluate one experiment");
  add_common(train, common, true);
  train->add_option("--out", out, "Output directory")->default_str("run");
  train->add_option("--trace", trace, "Write every trainer trajectory to this CSV");

  std::string params, data;
  auto* eval = app.add_subcommand("evaluate", "Evaluate stored parameters on a dataset");
  add_common(eval, common, false);
  eval->add_option("--params", params, "params.json written by train")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data, "Dataset CSV; simulated from the config when omitted")->check(CLI::ExistingFile);
  eval->add_option("--out", out, "Metrics JSON path");

  std::size_t n_seeds = 5;
  auto* cmp = app.add_subcommand("compare", "Paired qgs/dtb runs over several init seeds");
  add_common(cmp, common, false);
  cmp->add_option("--seeds", n_seeds, "Number of init seeds")->check(CLI::PositiveNumber);
  cmp->add_option("--out", out, "Output directory")->default_str("compare");

  std::size_t configurations = 20;
  std::uint64_t gc_seed = 0;
  double tol = 1e-6;
  std::string gc_out;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference checks of the network derivatives");
  gc->add_option("--configurations", configurations, "Random networks to check");
  gc->add_option("--seed", gc_seed, "Seed for the random networks");
  gc->add_option("--tol", tol, "Maximum relative error");
  gc->add_option("--out", gc_out, "Report JSON path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) return simulate_cmd(common, out.empty() ? "data.csv" : out, trace);
    if (*train) return train_cmd(common, out.empty() ? "run" : out, trace);
    if (*eval) return evaluate_cmd(common, params, data, out);
    if (*cmp) return compare_cmd(common, n_seeds, out.empty() ? "compare" : out);
    if (*gc) return gradcheck_cmd(configurations, gc_seed, tol, gc_out);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const BudgetExceeded& e) {
    std::fprintf(stderr, "budget exhausted: %s\n", e.what());
    return kNoEquilibrium;
  } catch (const Error& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kNumeric;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  }
  return kOk;
}
