#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "trajid/errors.hpp"
#include "trajid/harness.hpp"

using namespace trajid;

namespace {

Dataset ramp(std::size_t n) {
  Dataset d;
  for (std::size_t k = 0; k < n; ++k) {
    d.input.push_back(100.0 + static_cast<double>(k));
    d.output.push_back(-static_cast<double>(k));
  }
  return d;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig small_experiment(Trainer trainer) {
  ExperimentConfig c = default_experiment(Plant::BoucWen);
  c.name = "small";
  c.data.train_samples = 120;
  c.data.validation_samples = 60;
  c.excitation.n_samples = 128;
  c.hidden = 2;
  c.trainer = trainer;
  c.qgs.max_equilibria = 2;
  c.qgs.max_escape_attempts = 2;
  c.qgs.forward.max_time = 0.2;
  c.qgs.reverse.max_time = 0.2;
  c.dtb.max_components = 1;
  c.dtb.max_minima_per_component = 2;
  c.dtb.max_escape_attempts = 1;
  c.dtb.pgs_forward.max_time = 0.2;
  c.dtb.pgs_reverse.max_time = 0.2;
  return c;
}

}  // namespace

TEST(Regressors, PaperLayouts) {
  EXPECT_EQ(tanks_regressors().dimension(), 20u);
  EXPECT_EQ(tanks_regressors().first_index(), 9u);
  EXPECT_EQ(boucwen_regressors().dimension(), 11u);
  EXPECT_EQ(boucwen_regressors().first_index(), 5u);
  EXPECT_EQ(default_experiment(Plant::Tanks).shape().param_count(), 270u);
  EXPECT_EQ(default_experiment(Plant::BoucWen).shape().param_count(), 133u);
}

TEST(Regressors, ConstantSeriesGivesIdenticalRows) {
  Dataset d;
  d.input.assign(30, 0.7);
  d.output.assign(30, -1.2);
  const RegressorTable t = build_regressors(d, tanks_regressors());
  ASSERT_EQ(t.rows(), 21u);
  Eigen::VectorXd expected(20);
  expected << 1.0, Eigen::VectorXd::Constant(10, 0.7), Eigen::VectorXd::Constant(9, -1.2);
  for (std::size_t r = 0; r < t.rows(); ++r) EXPECT_EQ(Eigen::VectorXd(t.inputs.col(static_cast<Eigen::Index>(r))), expected);
  EXPECT_EQ(t.targets, Eigen::MatrixXd::Constant(1, 21, -1.2));
}

TEST(Regressors, LagOrderSpotChecks) {
  const Dataset d = ramp(40);
  const RegressorTable t = build_regressors(d, boucwen_regressors());
  EXPECT_EQ(t.first_index, 5u);
  ASSERT_EQ(t.rows(), 35u);
  // Row 3 holds sample k = 8.
  const Eigen::VectorXd row = t.inputs.col(3);
  for (int j = 0; j < 6; ++j) EXPECT_EQ(row[j], 100.0 + 8 - j);
  for (int j = 1; j <= 5; ++j) EXPECT_EQ(row[5 + j], -(8.0 - j));
  EXPECT_EQ(t.targets(0, 3), -8.0);
}

TEST(Regressors, TooShortDataset) {
  EXPECT_THROW(build_regressors(ramp(9), tanks_regressors()), ConfigError);
  EXPECT_NO_THROW(build_regressors(ramp(10), tanks_regressors()));
}

TEST(Split, SixtyForty) {
  const RegressorTable t = build_regressors(ramp(100 + 5), boucwen_regressors());
  ASSERT_EQ(t.rows(), 100u);
  const auto [train, val] = split(t, {0.6, 0.4});
  EXPECT_EQ(train.rows(), 60u);
  EXPECT_EQ(val.rows(), 40u);
  EXPECT_EQ(val.first_index, t.first_index + 60);
  EXPECT_EQ(val.targets(0, 0), t.targets(0, 60));
}

TEST(Split, FullTrainLeavesValidationEmpty) {
  const RegressorTable t = build_regressors(ramp(50), boucwen_regressors());
  const auto [train, val] = split(t, {1.0, 0.0});
  EXPECT_EQ(train.rows(), t.rows());
  EXPECT_EQ(val.rows(), 0u);
}

TEST(Split, Errors) {
  const RegressorTable t = build_regressors(ramp(20), boucwen_regressors());
  EXPECT_THROW(split(t, {0.6, 0.4}, false), ConfigError);
  EXPECT_THROW(split(t, {0.7, 0.4}), ConfigError);
  EXPECT_THROW(split(t, {0.99, 0.01}), ConfigError);
}

TEST(Normalizer, ZeroMeanUnitStd) {
  const Dataset d = ramp(11);
  const Normalizer n = Normalizer::fit(d);
  const Dataset z = n.apply(d);
  double mu = 0, var = 0;
  for (double v : z.output) mu += v;
  mu /= 11;
  for (double v : z.output) var += (v - mu) * (v - mu);
  EXPECT_NEAR(mu, 0.0, 1e-14);
  EXPECT_NEAR(var / 11, 1.0, 1e-14);
  EXPECT_NEAR(n.output_value(z.output[4]), d.output[4], 1e-12);
}

TEST(InitParams, SeededAndScaled) {
  const NetworkShape shape{20, 9, 1};
  const ParamVector a = init_params(shape, 0.1, 42);
  EXPECT_EQ(a, init_params(shape, 0.1, 42));
  EXPECT_NE(a, init_params(shape, 0.1, 43));
  const ParamVector big = init_params({50, 40, 1}, 0.1, 0);
  const double mean = big.mean();
  const double sd = std::sqrt((big.array() - mean).square().mean());
  EXPECT_NEAR(mean, 0.0, 0.01);
  EXPECT_NEAR(sd, 0.1, 0.01);
}

TEST(Evaluate, GeneratorParamsGiveZeroError) {
  // Data produced by a known network driven by its own free-run outputs.
  std::mt19937_64 rng(0);
  const RegressorConfig reg{.include_bias = true, .input_lags = 2, .output_lags = 2};
  const NetworkShape shape{static_cast<int>(reg.dimension()), 3, 1};
  const ParamVector p = oracle::gaussian(static_cast<Eigen::Index>(shape.param_count()), 1, rng, 0.4);
  const RnnWeights w = unflatten(p, shape);
  Dataset d;
  d.input = std::vector<double>(60);
  for (double& v : d.input) v = std::normal_distribution<double>()(rng);
  d.output.assign(60, 0.0);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(3);
  for (std::size_t k = reg.first_index(); k < 60; ++k) {
    Eigen::VectorXd u(5);
    u << 1.0, d.input[k], d.input[k - 1], d.output[k - 1], d.output[k - 2];
    z = (w.W * u + w.S * z).array().tanh();
    d.output[k] = w.V.row(0).dot(z);
  }
  const RegressorTable t = build_regressors(d, reg);
  const Evaluation one = evaluate(p, shape, t, reg, EvalMode::OneStep);
  const Evaluation free = evaluate(p, shape, t, reg, EvalMode::FreeRun);
  EXPECT_LT(one.mse, 1e-28);
  // The first free-run rows still see the (zero) measured history, which the
  // generator also used.
  EXPECT_LT(free.mse, 1e-28);
  EXPECT_FALSE(free.diverged);
}

TEST(Evaluate, ZeroParamsGiveMeanSquare) {
  const Dataset d = ramp(30);
  const RegressorConfig reg = boucwen_regressors();
  const RegressorTable t = build_regressors(d, reg);
  const NetworkShape shape{11, 3, 1};
  const Evaluation e = evaluate(ParamVector::Zero(static_cast<Eigen::Index>(shape.param_count())), shape, t, reg,
                                EvalMode::OneStep);
  double expected = 0;
  for (std::size_t k = 5; k < 30; ++k) expected += d.output[k] * d.output[k];
  EXPECT_DOUBLE_EQ(e.mse, expected / 25.0);
  EXPECT_DOUBLE_EQ(e.sse, expected);
}

TEST(Evaluate, OneStepMatchesResiduals) {
  std::mt19937_64 rng(1);
  const RegressorConfig reg = boucwen_regressors();
  Dataset d;
  for (int k = 0; k < 40; ++k) {
    d.input.push_back(std::normal_distribution<double>()(rng));
    d.output.push_back(std::normal_distribution<double>()(rng));
  }
  const RegressorTable t = build_regressors(d, reg);
  const NetworkShape shape{11, 4, 1};
  const ParamVector p = oracle::gaussian(static_cast<Eigen::Index>(shape.param_count()), 1, rng, 0.3);
  const Evaluation e = evaluate(p, shape, t, reg, EvalMode::OneStep);
  EXPECT_NEAR(e.sse, sse(p, ResidualSystem(shape, t)), 1e-12);
}

TEST(Evaluate, FreeRunFeedsBackPredictions) {
  std::mt19937_64 rng(2);
  const RegressorConfig reg{.include_bias = false, .input_lags = 1, .output_lags = 1};
  Dataset d;
  for (int k = 0; k < 10; ++k) {
    d.input.push_back(0.1 * k);
    d.output.push_back(5.0);  // far from anything the network produces
  }
  const RegressorTable t = build_regressors(d, reg);
  const NetworkShape shape{2, 2, 1};
  const ParamVector p = oracle::gaussian(static_cast<Eigen::Index>(shape.param_count()), 1, rng, 0.5);
  const Evaluation free = evaluate(p, shape, t, reg, EvalMode::FreeRun);
  // Reproduce by hand.
  const RnnWeights w = unflatten(p, shape);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(2);
  double prev = d.output[0];
  for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(t.rows()); ++r) {
    Eigen::Vector2d u(d.input[static_cast<std::size_t>(r) + 1], prev);
    z = (w.W * u + w.S * z).array().tanh();
    prev = w.V.row(0).dot(z);
    EXPECT_NEAR(free.predictions[r], prev, 1e-15);
  }
}

TEST(Config, JsonRoundTrip) {
  ExperimentConfig c = default_experiment(Plant::Tanks);
  c.hidden = 4;
  c.trainer = Trainer::Dtb;
  c.seeds.init = 17;
  c.dtb.max_components = 2;
  const nlohmann::json j = c;
  const ExperimentConfig back = experiment_from_json(j);
  EXPECT_EQ(nlohmann::json(back).dump(), j.dump());
  EXPECT_EQ(back.plant, Plant::Tanks);
  EXPECT_EQ(back.trainer, Trainer::Dtb);
  EXPECT_EQ(back.seeds.init, 17u);
}

TEST(Config, PartialOverlayKeepsDefaults) {
  const ExperimentConfig c = experiment_from_json(nlohmann::json::parse(R"({"plant": "tanks", "hidden": 5})"));
  EXPECT_EQ(c.hidden, 5);
  EXPECT_EQ(c.regressors.dimension(), 20u);
  EXPECT_EQ(c.excitation.Ts, 4.0);
}

TEST(Config, Errors) {
  EXPECT_THROW(experiment_from_json(nlohmann::json::parse(R"({"hiden": 5})")), ConfigError);
  EXPECT_THROW(experiment_from_json(nlohmann::json::parse(R"({"plant": "pendulum"})")), ConfigError);
  EXPECT_THROW(experiment_from_json(nlohmann::json::parse(R"({"hidden": "five"})")), ConfigError);
  EXPECT_THROW(experiment_from_json(nlohmann::json::parse(R"({"qgs": {"forward": {"speed": 1}}})")), ConfigError);
  EXPECT_THROW(experiment_from_json(nlohmann::json::parse(R"({"excitation": {"Ts": 1.0}})")), ConfigError);
  EXPECT_THROW(load_experiment("/nonexistent/config.json"), ConfigError);
}

TEST(PrepareData, IndependentValidationRecord) {
  const ExperimentConfig c = small_experiment(Trainer::Qgs);
  const ExperimentData d = prepare_data(c);
  EXPECT_EQ(d.train_raw.size(), 120u);
  EXPECT_EQ(d.validation_raw.size(), 60u);
  EXPECT_EQ(d.train.rows(), 115u);
  EXPECT_EQ(d.validation.rows(), 55u);
  EXPECT_NE(d.train_raw.input[0], d.validation_raw.input[0]);
}

TEST(PrepareData, SplitMode) {
  ExperimentConfig c = small_experiment(Trainer::Qgs);
  c.data.validation_samples = 0;
  c.split = {0.5, 0.5};
  const ExperimentData d = prepare_data(c);
  EXPECT_TRUE(d.validation_raw.input.empty());
  EXPECT_EQ(d.train.rows(), 57u);
  EXPECT_EQ(d.validation.rows(), 57u);
}

TEST(RunExperiment, WritesArtifactsDeterministically) {
  const auto root = std::filesystem::temp_directory_path() / "trajid_harness_test";
  std::filesystem::remove_all(root);
  for (Trainer trainer : {Trainer::Qgs, Trainer::Dtb}) {
    const ExperimentConfig c = small_experiment(trainer);
    const ExperimentResult a = run_experiment(c, root / "a");
    run_experiment(c, root / "b");
    EXPECT_TRUE(std::isfinite(a.metrics.validation_mse_onestep));
    for (const char* f : {"metrics.json", "timing.json", "predictions.csv", "predictions_freerun.csv",
                          "search_log.json", "params.json", "config.json"}) {
      EXPECT_TRUE(std::filesystem::exists(root / "a" / f)) << f;
    }
    EXPECT_EQ(slurp(root / "a" / "metrics.json"), slurp(root / "b" / "metrics.json"));
    EXPECT_EQ(slurp(root / "a" / "predictions.csv"), slurp(root / "b" / "predictions.csv"));
    const auto header = slurp(root / "a" / "predictions.csv").substr(0, 13);
    EXPECT_EQ(header, "k,y,yhat,err\n");

    // Stored parameters reproduce the validation metric.
    const StoredParams stored =
        stored_params_from_json(nlohmann::json::parse(slurp(root / "a" / "params.json")));
    const Metrics m = evaluate_dataset(stored, prepare_data(c).validation_raw);
    EXPECT_NEAR(m.validation_mse_onestep, a.metrics.validation_mse_onestep,
                1e-12 * a.metrics.validation_mse_onestep);
    // The written config reloads to the same experiment.
    const ExperimentConfig again = load_experiment(root / "a" / "config.json");
    EXPECT_EQ(nlohmann::json(again).dump(), nlohmann::json(c).dump());
  }
  std::filesystem::remove_all(root);
}

TEST(RunExperiment, NormalizedAndRawMseAgree) {
  const ExperimentConfig c = small_experiment(Trainer::Qgs);
  const ExperimentResult r = run_experiment(c);
  const Normalizer n = prepare_data(c).normalizer;
  EXPECT_NEAR(r.metrics.validation_mse_onestep,
              r.metrics.normalized_validation_mse_onestep * n.output_std * n.output_std,
              1e-12 * r.metrics.validation_mse_onestep);
  EXPECT_EQ(r.metrics.trainer, "qgs");
  EXPECT_FALSE(r.metrics.to_json().contains("wall_time_seconds"));
}

TEST(Compare, SingleSeedAndSelfComparison) {
  const ExperimentConfig c = small_experiment(Trainer::Qgs);
  const ComparisonReport one = compare(c, 1);
  EXPECT_EQ(one.seeds.size(), 1u);
  EXPECT_EQ(one.mse[0].size(), 1u);
  EXPECT_EQ(one.mse[1].size(), 1u);
  const ComparisonReport self = compare(c, 2, {Trainer::Qgs, Trainer::Qgs});
  EXPECT_EQ(self.ratio, 1.0);
  EXPECT_EQ(self.seeds, (std::vector<std::uint64_t>{0, 1}));
}

TEST(Median, OddEven) {
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 3, 2}), 2.5);
  EXPECT_THROW(median({}), ConfigError);
}
