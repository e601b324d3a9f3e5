#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace trajid {

// Sampled input/output record. Sample k holds the input s(k) applied over
// [k Ts, (k+1) Ts) and the output y(k) measured at the end of that hold.
struct Dataset {
  std::vector<double> input;
  std::vector<double> output;
  double Ts = 1.0;
  nlohmann::json meta = nlohmann::json::object();

  std::size_t size() const { return input.size(); }
  void validate() const;
};

// CSV `k,s,y` plus a sidecar `<stem>.json` holding Ts and meta. Values are
// written with 17 significant digits so a round trip is exact.
void write_dataset(const Dataset& data, const std::filesystem::path& csv_path);
Dataset read_dataset(const std::filesystem::path& csv_path);

// ---------------------------------------------------------------- tanks

struct TankParams {
  double k1 = 0.5;
  double k2 = 0.4;
  double k3 = 0.3;
  double k4 = 0.4;
  double x_max = 10.0;
  double noise_std_w1 = 0.01;
  double noise_std_w2 = 0.01;
  double noise_std_e = 0.02;
  double Ts = 4.0;
  int substeps = 20;  // RK4 steps per sample interval

  void validate() const;
};

struct TankState {
  double x1 = 0.0;
  double x2 = 0.0;
};

TankState tanks_rhs(const TankState& x, double u, const TankParams& p);

struct TankNoiseSeeds {
  std::uint64_t process = 1;
  std::uint64_t measurement = 2;
};

// Levels are clamped to [0, x_max] after every sub-step (overflow).
Dataset tanks_simulate(const TankParams& p, const std::vector<double>& u, TankState x0 = {},
                       TankNoiseSeeds seeds = {});

// Noise-free level trace, one entry per sample (state at the end of each hold).
std::vector<TankState> tanks_states(const TankParams& p, const std::vector<double>& u,
                                    TankState x0 = {});

// ------------------------------------------------------------- Bouc-Wen

struct BoucWenParams {
  double m_L = 2.0;
  double c_L = 2.0;
  double k_L = 5.0e4;
  double alpha = 5.0e4;
  double beta = 1.0e3;
  double gamma = 0.8;
  double delta = -1.1;
  double nu = 1.0;
  double sim_dt = 1.0 / 7500.0;
  double out_rate = 750.0;

  void validate() const;
  int substeps() const;  // sim_dt steps per output sample
};

struct BoucWenState {
  double y = 0.0;
  double ydot = 0.0;
  double z = 0.0;
};

BoucWenState boucwen_rhs(const BoucWenState& x, double force, const BoucWenParams& p);

// Full state at the end of every output interval.
std::vector<BoucWenState> boucwen_states(const BoucWenParams& p, const std::vector<double>& force,
                                         BoucWenState x0 = {});

Dataset boucwen_simulate(const BoucWenParams& p, const std::vector<double>& force,
                         BoucWenState x0 = {});

// ------------------------------------------------------------ multisine

enum class AmplitudeProfile { Flat, LinearRolloff };

struct MultisineConfig {
  double f_min = 0.0;
  double f_max = 0.0144;
  std::size_t n_samples = 1024;
  double Ts = 4.0;
  AmplitudeProfile amplitude_profile = AmplitudeProfile::LinearRolloff;
  double rms_target = 1.0;
  std::uint64_t phase_seed = 0;
  double offset = 0.0;  // added after rms scaling

  void validate() const;
  std::vector<std::size_t> lines() const;  // grid indices j with f_j in [f_min, f_max]
};

// One period (n_samples values) of sum_j A_j cos(2 pi f_j k Ts + phi_j),
// scaled so the zero-offset signal has rms_target.
std::vector<double> multisine(const MultisineConfig& config);
// Same signal evaluated for `length` samples; periodic with n_samples.
std::vector<double> multisine(const MultisineConfig& config, std::size_t length);

// Missing keys keep their defaults; unknown keys raise ConfigError.
void to_json(nlohmann::json& j, const TankParams& p);
void to_json(nlohmann::json& j, const BoucWenParams& p);
void to_json(nlohmann::json& j, const MultisineConfig& c);
void from_json(const nlohmann::json& j, TankParams& p);
void from_json(const nlohmann::json& j, BoucWenParams& p);
void from_json(const nlohmann::json& j, MultisineConfig& c);

}  // namespace trajid
