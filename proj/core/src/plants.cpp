#include "trajid/plants.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "json_fields.hpp"
#include "trajid/errors.hpp"

namespace trajid {

using nlohmann::json;

namespace {

void require_finite(const std::vector<double>& v, const char* what) {
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (!std::isfinite(v[k])) {
      throw ConfigError(std::string("non-finite ") + what + " at sample " + std::to_string(k));
    }
  }
}

double sqrt_clamped(double x) { return std::sqrt(std::max(x, 0.0)); }

TankState add(const TankState& a, const TankState& b, double h) {
  return {a.x1 + h * b.x1, a.x2 + h * b.x2};
}

BoucWenState add(const BoucWenState& a, const BoucWenState& b, double h) {
  return {a.y + h * b.y, a.ydot + h * b.ydot, a.z + h * b.z};
}

template <class State, class Rhs>
State rk4_step(const State& x, double h, Rhs&& f) {
  const State k1 = f(x);
  const State k2 = f(add(x, k1, 0.5 * h));
  const State k3 = f(add(x, k2, 0.5 * h));
  const State k4 = f(add(x, k3, h));
  State out = x;
  out = add(out, k1, h / 6.0);
  out = add(out, k2, h / 3.0);
  out = add(out, k3, h / 3.0);
  out = add(out, k4, h / 6.0);
  return out;
}

void clamp_levels(TankState& x, double x_max) {
  x.x1 = std::clamp(x.x1, 0.0, x_max);
  x.x2 = std::clamp(x.x2, 0.0, x_max);
}

struct TankRun {
  std::vector<TankState> states;
  std::vector<double> y;
};

TankRun run_tanks(const TankParams& p, const std::vector<double>& u, TankState x,
                  const TankNoiseSeeds* seeds) {
  p.validate();
  require_finite(u, "tank input");
  std::mt19937_64 process_rng(seeds ? seeds->process : 0);
  std::mt19937_64 measure_rng(seeds ? seeds->measurement : 0);
  std::normal_distribution<double> normal(0.0, 1.0);

  const double h = p.Ts / p.substeps;
  clamp_levels(x, p.x_max);
  TankRun run;
  run.states.reserve(u.size());
  run.y.reserve(u.size());
  for (double uk : u) {
    for (int i = 0; i < p.substeps; ++i) {
      x = rk4_step(x, h, [&](const TankState& s) { return tanks_rhs(s, uk, p); });
      clamp_levels(x, p.x_max);
    }
    if (seeds) {
      x.x1 += p.noise_std_w1 * normal(process_rng);
      x.x2 += p.noise_std_w2 * normal(process_rng);
      clamp_levels(x, p.x_max);
    }
    run.states.push_back(x);
    double y = x.x2;
    if (seeds) y += p.noise_std_e * normal(measure_rng);
    run.y.push_back(y);
  }
  return run;
}

const char* profile_name(AmplitudeProfile p) {
  return p == AmplitudeProfile::Flat ? "flat" : "linear-rolloff";
}

AmplitudeProfile parse_profile(const std::string& s) {
  if (s == "flat") return AmplitudeProfile::Flat;
  if (s == "linear-rolloff") return AmplitudeProfile::LinearRolloff;
  throw ConfigError("unknown amplitude_profile '" + s + "'");
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".json");
  return p;
}

}  // namespace

// ------------------------------------------------------------- dataset

void Dataset::validate() const {
  if (input.size() != output.size()) {
    throw ShapeError("dataset input has " + std::to_string(input.size()) + " samples, output has " +
                     std::to_string(output.size()));
  }
  if (!(Ts > 0.0) || !std::isfinite(Ts)) throw ConfigError("dataset Ts must be positive");
  require_finite(input, "dataset input");
  require_finite(output, "dataset output");
}

void write_dataset(const Dataset& data, const std::filesystem::path& csv_path) {
  data.validate();
  if (csv_path.has_parent_path()) std::filesystem::create_directories(csv_path.parent_path());
  std::ofstream csv(csv_path);
  if (!csv) throw ConfigError("cannot write " + csv_path.string());
  csv << "k,s,y\n" << std::setprecision(17);
  for (std::size_t k = 0; k < data.size(); ++k) {
    csv << k << ',' << data.input[k] << ',' << data.output[k] << '\n';
  }
  std::ofstream side(sidecar_path(csv_path));
  if (!side) throw ConfigError("cannot write " + sidecar_path(csv_path).string());
  json j = data.meta;
  j["Ts"] = data.Ts;
  j["samples"] = data.size();
  side << j.dump(2) << '\n';
}

Dataset read_dataset(const std::filesystem::path& csv_path) {
  std::ifstream csv(csv_path);
  if (!csv) throw ConfigError("cannot read " + csv_path.string());
  std::string line;
  if (!std::getline(csv, line) || line != "k,s,y") {
    throw ConfigError(csv_path.string() + ": expected header 'k,s,y'");
  }
  Dataset data;
  std::size_t row = 0;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::istringstream in(line);
    std::string k, s, y;
    if (!std::getline(in, k, ',') || !std::getline(in, s, ',') || !std::getline(in, y)) {
      throw ConfigError(csv_path.string() + ": malformed row " + std::to_string(row + 1));
    }
    try {
      data.input.push_back(std::stod(s));
      data.output.push_back(std::stod(y));
    } catch (const std::exception&) {
      throw ConfigError(csv_path.string() + ": malformed number in row " + std::to_string(row + 1));
    }
    ++row;
  }
  const auto side = sidecar_path(csv_path);
  if (std::filesystem::exists(side)) {
    std::ifstream in(side);
    try {
      json j = json::parse(in);
      data.Ts = j.value("Ts", 1.0);
      j.erase("Ts");
      j.erase("samples");
      data.meta = std::move(j);
    } catch (const json::exception& e) {
      throw ConfigError(side.string() + ": " + e.what());
    }
  }
  data.validate();
  return data;
}

// ---------------------------------------------------------------- tanks

void TankParams::validate() const {
  if (!(k1 > 0 && k2 > 0 && k3 > 0 && k4 > 0)) throw ConfigError("tank constants must be positive");
  if (!(x_max > 0)) throw ConfigError("x_max must be positive");
  if (!(Ts > 0)) throw ConfigError("Ts must be positive");
  if (!(noise_std_w1 >= 0 && noise_std_w2 >= 0 && noise_std_e >= 0)) {
    throw ConfigError("noise standard deviations must be nonnegative");
  }
  if (substeps < 1) throw ConfigError("substeps must be at least 1");
}

TankState tanks_rhs(const TankState& x, double u, const TankParams& p) {
  const double r1 = sqrt_clamped(x.x1);
  const double r2 = sqrt_clamped(x.x2);
  return {-p.k1 * r1 + p.k4 * u, p.k2 * r1 - p.k3 * r2};
}

Dataset tanks_simulate(const TankParams& p, const std::vector<double>& u, TankState x0,
                       TankNoiseSeeds seeds) {
  TankRun run = run_tanks(p, u, x0, &seeds);
  Dataset data;
  data.input = u;
  data.output = std::move(run.y);
  data.Ts = p.Ts;
  json params;
  to_json(params, p);
  data.meta = {{"plant", "tanks"},
               {"params", params},
               {"seeds", {{"process", seeds.process}, {"measurement", seeds.measurement}}},
               {"x0", {x0.x1, x0.x2}}};
  return data;
}

std::vector<TankState> tanks_states(const TankParams& p, const std::vector<double>& u,
                                    TankState x0) {
  return run_tanks(p, u, x0, nullptr).states;
}

// ------------------------------------------------------------- Bouc-Wen

void BoucWenParams::validate() const {
  if (!(m_L > 0)) throw ConfigError("m_L must be positive");
  if (!(nu >= 1)) throw ConfigError("nu must be at least 1");
  if (!(sim_dt > 0)) throw ConfigError("sim_dt must be positive");
  if (!(out_rate > 0) || out_rate * sim_dt > 1.0 + 1e-12) {
    throw ConfigError("out_rate * sim_dt must lie in (0, 1]");
  }
  const double ratio = 1.0 / (out_rate * sim_dt);
  if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio) {
    throw ConfigError("1 / (out_rate * sim_dt) must be an integer");
  }
}

int BoucWenParams::substeps() const {
  return static_cast<int>(std::lround(1.0 / (out_rate * sim_dt)));
}

BoucWenState boucwen_rhs(const BoucWenState& x, double force, const BoucWenParams& p) {
  const double az = std::abs(x.z);
  const double az_nu = p.nu == 1.0 ? az : std::pow(az, p.nu);
  const double sgn_z = (x.z > 0) - (x.z < 0);
  const double dz =
      p.alpha * x.ydot - p.beta * (p.gamma * std::abs(x.ydot) * sgn_z * az_nu + p.delta * x.ydot * az_nu);
  return {x.ydot, (force - p.k_L * x.y - p.c_L * x.ydot - x.z) / p.m_L, dz};
}

namespace {

// Bouc-Wen right-hand side with |ydot| and |z| replaced by sy*ydot and sz*z.
// Each branch is smooth, so RK4 keeps its order as long as no step crosses
// ydot = 0 or z = 0.
BoucWenState boucwen_branch(const BoucWenState& x, double force, const BoucWenParams& p, double sy,
                            double sz) {
  const double az = std::max(sz * x.z, 0.0);
  const double az_nu = p.nu == 1.0 ? sz * x.z : std::pow(az, p.nu);
  const double dz =
      p.alpha * x.ydot - p.beta * (p.gamma * sy * x.ydot * sz * az_nu + p.delta * x.ydot * az_nu);
  return {x.ydot, (force - p.k_L * x.y - p.c_L * x.ydot - x.z) / p.m_L, dz};
}

double branch_sign(double v, double dv) {
  if (v != 0.0) return v > 0 ? 1.0 : -1.0;
  return dv < 0 ? -1.0 : 1.0;
}

// Earliest tau in (0, h] where the branch step leaves its sign region for
// component `get`. `end` is known to be outside.
template <class Step, class Get>
double crossing_time(Step&& step, Get&& get, double sign, double h) {
  double a = 0.0, b = h;
  double fa = sign * get(step(0.0)), fb = sign * get(step(h));
  if (fa <= 0.0) return 0.0;
  bool left = false;
  for (int it = 0; it < 100 && b - a > 1e-14 * h; ++it) {
    // Illinois variant of regula falsi.
    double c = b - fb * (b - a) / (fb - fa);
    if (!(c > a && c < b)) c = 0.5 * (a + b);
    const double fc = sign * get(step(c));
    if (fc > 0.0) {
      a = c;
      fa = fc;
      if (left) fb *= 0.5;
      left = true;
    } else {
      b = c;
      fb = fc;
      if (!left) fa *= 0.5;
      left = false;
    }
  }
  return b;
}

BoucWenState boucwen_step(BoucWenState x, double force, double h, const BoucWenParams& p) {
  double remaining = h;
  for (int pass = 0; pass < 8 && remaining > 0.0; ++pass) {
    const BoucWenState d = boucwen_rhs(x, force, p);
    const double sy = branch_sign(x.ydot, d.ydot);
    const double sz = branch_sign(x.z, d.z);
    auto step = [&](double tau) {
      return rk4_step(x, tau,
                      [&](const BoucWenState& st) { return boucwen_branch(st, force, p, sy, sz); });
    };
    const BoucWenState end = step(remaining);
    const bool cross_y = sy * end.ydot < 0.0;
    const bool cross_z = sz * end.z < 0.0;
    if (!cross_y && !cross_z) return end;
    double tau = remaining;
    bool hit_y = false;
    if (cross_y) {
      tau = crossing_time(step, [](const BoucWenState& s) { return s.ydot; }, sy, remaining);
      hit_y = true;
    }
    if (cross_z) {
      const double tz = crossing_time(step, [](const BoucWenState& s) { return s.z; }, sz, remaining);
      if (tz < tau) {
        tau = tz;
        hit_y = false;
      }
    }
    x = step(tau);
    if (hit_y) {
      x.ydot = 0.0;
    } else {
      x.z = 0.0;
    }
    remaining -= tau;
  }
  return x;
}

}  // namespace

std::vector<BoucWenState> boucwen_states(const BoucWenParams& p, const std::vector<double>& force,
                                         BoucWenState x) {
  p.validate();
  require_finite(force, "force");
  const int n = p.substeps();
  const double h = 1.0 / (p.out_rate * n);
  std::vector<BoucWenState> out;
  out.reserve(force.size());
  for (std::size_t k = 0; k < force.size(); ++k) {
    for (int i = 0; i < n; ++i) x = boucwen_step(x, force[k], h, p);
    if (!std::isfinite(x.y) || !std::isfinite(x.ydot) || !std::isfinite(x.z)) {
      Eigen::VectorXd snap(3);
      snap << x.y, x.ydot, x.z;
      throw NumericError("Bouc-Wen state became non-finite", k, snap);
    }
    out.push_back(x);
  }
  return out;
}

Dataset boucwen_simulate(const BoucWenParams& p, const std::vector<double>& force,
                         BoucWenState x0) {
  const auto states = boucwen_states(p, force, x0);
  Dataset data;
  data.input = force;
  data.output.reserve(states.size());
  for (const auto& s : states) data.output.push_back(s.y);
  data.Ts = 1.0 / p.out_rate;
  json params;
  to_json(params, p);
  data.meta = {{"plant", "boucwen"}, {"params", params}, {"x0", {x0.y, x0.ydot, x0.z}}};
  return data;
}

// ------------------------------------------------------------ multisine

void MultisineConfig::validate() const {
  if (n_samples == 0) throw ConfigError("multisine n_samples must be positive");
  if (!(Ts > 0)) throw ConfigError("multisine Ts must be positive");
  if (!(f_min >= 0 && f_min < f_max)) throw ConfigError("multisine needs 0 <= f_min < f_max");
  if (f_max > 0.5 / Ts * (1 + 1e-12)) throw ConfigError("multisine f_max exceeds Nyquist");
  if (!(rms_target > 0)) throw ConfigError("multisine rms_target must be positive");
  if (!std::isfinite(offset)) throw ConfigError("multisine offset must be finite");
}

std::vector<std::size_t> MultisineConfig::lines() const {
  const double df = 1.0 / (static_cast<double>(n_samples) * Ts);
  const double slack = 1e-9;
  std::vector<std::size_t> out;
  for (std::size_t j = 1; j <= n_samples / 2; ++j) {
    const double f = j * df;
    if (f >= f_min - slack * df && f <= f_max + slack * df) out.push_back(j);
  }
  return out;
}

std::vector<double> multisine(const MultisineConfig& config) {
  config.validate();
  const auto grid = config.lines();
  if (grid.empty()) throw ConfigError("multisine frequency grid is empty");
  const std::size_t n = config.n_samples;
  const double df = 1.0 / (static_cast<double>(n) * config.Ts);

  std::mt19937_64 rng(config.phase_seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::vector<double> signal(n, 0.0);
  for (std::size_t j : grid) {
    const double f = j * df;
    const double amp = config.amplitude_profile == AmplitudeProfile::Flat ? 1.0 : 1.0 - 0.5 * f / config.f_max;
    const double phi = phase(rng);
    for (std::size_t k = 0; k < n; ++k) {
      // (j k mod n) keeps the argument small and the period exact.
      const double arg = 2.0 * std::numbers::pi * static_cast<double>((j * k) % n) / n;
      signal[k] += amp * std::cos(arg + phi);
    }
  }
  double ss = 0.0;
  for (double v : signal) ss += v * v;
  const double rms = std::sqrt(ss / n);
  const double scale = config.rms_target / rms;
  for (double& v : signal) v = v * scale + config.offset;
  return signal;
}

std::vector<double> multisine(const MultisineConfig& config, std::size_t length) {
  const auto period = multisine(config);
  std::vector<double> out(length);
  for (std::size_t k = 0; k < length; ++k) out[k] = period[k % period.size()];
  return out;
}

// ----------------------------------------------------------------- json

void to_json(json& j, const TankParams& p) {
  j = {{"k1", p.k1},
       {"k2", p.k2},
       {"k3", p.k3},
       {"k4", p.k4},
       {"x_max", p.x_max},
       {"noise_std_w1", p.noise_std_w1},
       {"noise_std_w2", p.noise_std_w2},
       {"noise_std_e", p.noise_std_e},
       {"Ts", p.Ts},
       {"substeps", p.substeps}};
}

void from_json(const json& j, TankParams& p) {
  detail::require_known_keys(j, {"k1", "k2", "k3", "k4", "x_max", "noise_std_w1", "noise_std_w2",
                                 "noise_std_e", "Ts", "substeps"},
                             "tank params");
  detail::read_field(j, "k1", p.k1);
  detail::read_field(j, "k2", p.k2);
  detail::read_field(j, "k3", p.k3);
  detail::read_field(j, "k4", p.k4);
  detail::read_field(j, "x_max", p.x_max);
  detail::read_field(j, "noise_std_w1", p.noise_std_w1);
  detail::read_field(j, "noise_std_w2", p.noise_std_w2);
  detail::read_field(j, "noise_std_e", p.noise_std_e);
  detail::read_field(j, "Ts", p.Ts);
  detail::read_field(j, "substeps", p.substeps);
}

void to_json(json& j, const BoucWenParams& p) {
  j = {{"m_L", p.m_L},     {"c_L", p.c_L},       {"k_L", p.k_L},
       {"alpha", p.alpha}, {"beta", p.beta},     {"gamma", p.gamma},
       {"delta", p.delta}, {"nu", p.nu},         {"sim_dt", p.sim_dt},
       {"out_rate", p.out_rate}};
}

void from_json(const json& j, BoucWenParams& p) {
  detail::require_known_keys(
      j, {"m_L", "c_L", "k_L", "alpha", "beta", "gamma", "delta", "nu", "sim_dt", "out_rate"},
      "Bouc-Wen params");
  detail::read_field(j, "m_L", p.m_L);
  detail::read_field(j, "c_L", p.c_L);
  detail::read_field(j, "k_L", p.k_L);
  detail::read_field(j, "alpha", p.alpha);
  detail::read_field(j, "beta", p.beta);
  detail::read_field(j, "gamma", p.gamma);
  detail::read_field(j, "delta", p.delta);
  detail::read_field(j, "nu", p.nu);
  detail::read_field(j, "sim_dt", p.sim_dt);
  detail::read_field(j, "out_rate", p.out_rate);
}

void to_json(json& j, const MultisineConfig& c) {
  j = {{"f_min", c.f_min},
       {"f_max", c.f_max},
       {"n_samples", c.n_samples},
       {"Ts", c.Ts},
       {"amplitude_profile", profile_name(c.amplitude_profile)},
       {"rms_target", c.rms_target},
       {"phase_seed", c.phase_seed},
       {"offset", c.offset}};
}

void from_json(const json& j, MultisineConfig& c) {
  detail::require_known_keys(j, {"f_min", "f_max", "n_samples", "Ts", "amplitude_profile",
                                 "rms_target", "phase_seed", "offset"},
                             "multisine config");
  detail::read_field(j, "f_min", c.f_min);
  detail::read_field(j, "f_max", c.f_max);
  detail::read_field(j, "n_samples", c.n_samples);
  detail::read_field(j, "Ts", c.Ts);
  std::string profile = profile_name(c.amplitude_profile);
  detail::read_field(j, "amplitude_profile", profile);
  c.amplitude_profile = parse_profile(profile);
  detail::read_field(j, "rms_target", c.rms_target);
  detail::read_field(j, "phase_seed", c.phase_seed);
  detail::read_field(j, "offset", c.offset);
}

}  // namespace trajid
