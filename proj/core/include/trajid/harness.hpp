#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "trajid/dtb.hpp"
#include "trajid/plants.hpp"
#include "trajid/qgs.hpp"
#include "trajid/regressors.hpp"
#include "trajid/rnn.hpp"

namespace trajid {

// Row k holds [1?, s(k), ..., s(k - input_lags + 1), y(k - 1), ..., y(k - output_lags)].
struct RegressorConfig {
  bool include_bias = false;
  int input_lags = 1;
  int output_lags = 0;

  std::size_t dimension() const;
  std::size_t first_index() const;  // max(input_lags - 1, output_lags)
  std::size_t output_lag_offset() const { return (include_bias ? 1 : 0) + input_lags; }
  void validate() const;
};

// Tanks layout: bias, 10 input lags, 9 output lags.
RegressorConfig tanks_regressors();
// Bouc-Wen layout: no bias, 6 input lags, 5 output lags.
RegressorConfig boucwen_regressors();

// Teacher-forced table: output lags are measured values. Throws ConfigError
// when the dataset has no sample past first_index.
RegressorTable build_regressors(const Dataset& data, const RegressorConfig& config);

struct SplitFractions {
  double train = 1.0;
  double validation = 0.0;

  void validate() const;
};

// First block train, next block validation. Only contiguous splits are
// supported; `contiguous = false` raises ConfigError. A zero validation
// fraction yields an empty validation table.
std::pair<RegressorTable, RegressorTable> split(const RegressorTable& table,
                                                const SplitFractions& fractions,
                                                bool contiguous = true);

// Affine map to zero mean and unit variance, fitted on one record and applied
// to others.
struct Normalizer {
  double input_mean = 0.0;
  double input_std = 1.0;
  double output_mean = 0.0;
  double output_std = 1.0;

  static Normalizer fit(const Dataset& data);
  Dataset apply(const Dataset& data) const;
  double output_value(double normalized) const { return normalized * output_std + output_mean; }
};

// Entries i.i.d. normal with mean 0 and standard deviation init_std.
ParamVector init_params(const NetworkShape& shape, double init_std, std::uint64_t seed);

enum class EvalMode { OneStep, FreeRun };

struct Evaluation {
  Eigen::VectorXd predictions;  // one per row; empty after divergence
  double sse = 0.0;
  double mse = 0.0;
  bool diverged = false;
};

// OneStep runs the network over the table as built. FreeRun replaces output
// lags by the network's own earlier predictions once they exist. The state
// starts at zero in both modes.
Evaluation evaluate(const ParamVector& params, const NetworkShape& shape,
                    const RegressorTable& table, const RegressorConfig& regressors, EvalMode mode);

enum class Plant { Tanks, BoucWen };
enum class Trainer { Qgs, Dtb };

std::string to_string(Plant plant);
std::string to_string(Trainer trainer);
Plant parse_plant(const std::string& name);
Trainer parse_trainer(const std::string& name);

struct DataConfig {
  std::size_t train_samples = 1024;
  // Independently excited validation record. When zero, validation rows come
  // from the split of the training record instead.
  std::size_t validation_samples = 512;
};

struct SeedConfig {
  std::uint64_t init = 0;
  std::uint64_t noise = 1;
  std::uint64_t phases = 2;
};

struct ExperimentConfig {
  std::string name = "experiment";
  Plant plant = Plant::BoucWen;
  TankParams tanks{};
  BoucWenParams boucwen{};
  MultisineConfig excitation{};
  DataConfig data{};
  RegressorConfig regressors{};
  int hidden = 7;
  Trainer trainer = Trainer::Qgs;
  QgsBudget qgs{};
  DtbBudget dtb{};
  double bound = 10.0;  // |w_i| <= bound for the box-constrained trainer
  double init_std = 0.1;
  SplitFractions split{};
  SeedConfig seeds{};

  NetworkShape shape() const;
  void validate() const;
};

ExperimentConfig default_experiment(Plant plant);

void to_json(nlohmann::json& j, const ExperimentConfig& c);
// Starts from default_experiment(plant) and overlays the given fields.
ExperimentConfig experiment_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment(const std::filesystem::path& path);

void to_json(nlohmann::json& j, const IntegratorConfig& c);
void from_json(const nlohmann::json& j, IntegratorConfig& c);
void to_json(nlohmann::json& j, const QgsBudget& b);
void from_json(const nlohmann::json& j, QgsBudget& b);
void to_json(nlohmann::json& j, const DtbBudget& b);
void from_json(const nlohmann::json& j, DtbBudget& b);

struct ExperimentData {
  Dataset train_raw;
  Dataset validation_raw;  // empty when validation comes from the split
  Normalizer normalizer;
  RegressorTable train;       // normalized
  RegressorTable validation;  // normalized
};

// Simulates the plant under the configured excitation and prepares the
// normalized regressor tables.
ExperimentData prepare_data(const ExperimentConfig& config);

struct Metrics {
  // Original output units.
  double train_sse = 0.0;
  double train_mse = 0.0;
  double validation_mse_onestep = 0.0;
  double validation_mse_freerun = 0.0;
  // Normalized output units (the units the trainer works in).
  double normalized_train_sse = 0.0;
  double normalized_train_mse = 0.0;
  double normalized_validation_mse_onestep = 0.0;
  double normalized_validation_mse_freerun = 0.0;
  bool freerun_diverged = false;
  std::size_t train_rows = 0;
  std::size_t validation_rows = 0;
  std::size_t equilibria = 0;
  std::size_t converged_equilibria = 0;
  double wall_time_seconds = 0.0;  // kept out of metrics.json
  std::string trainer;
  SeedConfig seeds;

  // Deterministic content only; wall time goes to timing.json.
  nlohmann::json to_json() const;
};

struct ExperimentResult {
  Metrics metrics;
  TrainResult training;
  ParamVector params;
  Evaluation validation_onestep;
  Evaluation validation_freerun;
};

// Runs one experiment end to end. When `out_dir` is set, writes
// metrics.json, timing.json, predictions.csv (k,y,yhat,err), predictions_freerun.csv,
// search_log.json, params.json and config.json there. `trace` receives the
// trainer's trajectory dump. Errors are rethrown with the failing stage
// prefixed to the message.
ExperimentResult run_experiment(const ExperimentConfig& config,
                                const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                                TraceWriter* trace = nullptr);

struct ComparisonReport {
  std::string plant;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> trainers;  // two slots
  std::vector<std::vector<double>> mse;  // [slot][seed], original units
  std::vector<std::vector<double>> normalized_mse;
  std::vector<double> median;
  std::vector<double> normalized_median;
  double ratio = 0.0;  // median(slot 1) / median(slot 0)

  nlohmann::json to_json() const;
};

// Runs both trainer slots on identical data and initializations, one init
// seed per run starting at config.seeds.init. `trainers` defaults to
// {qgs, dtb}; the ratio is slot 1 over slot 0.
ComparisonReport compare(const ExperimentConfig& config, std::size_t n_seeds,
                         std::pair<Trainer, Trainer> trainers = {Trainer::Qgs, Trainer::Dtb},
                         const std::optional<std::filesystem::path>& out_dir = std::nullopt);

double median(std::vector<double> values);

// Writes `text` to `path` through a temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

// Parameters with the shape they belong to, as stored in params.json.
struct StoredParams {
  NetworkShape shape;
  RegressorConfig regressors;
  Normalizer normalizer;
  ParamVector params;
};

nlohmann::json to_json(const StoredParams& stored);
StoredParams stored_params_from_json(const nlohmann::json& j);

// Evaluates stored parameters on a raw dataset in original units.
Metrics evaluate_dataset(const StoredParams& stored, const Dataset& data);

}  // namespace trajid
