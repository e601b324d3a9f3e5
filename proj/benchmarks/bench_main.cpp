#include <random>

#include <benchmark/benchmark.h>

#include "trajid/harness.hpp"
#include "trajid/plants.hpp"
#include "trajid/qgs.hpp"

using namespace trajid;

namespace {

ResidualSystem random_system(int n, int m, int rows, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  RegressorTable table;
  table.inputs = Eigen::MatrixXd::NullaryExpr(n, rows, [&] { return g(rng); });
  table.targets = Eigen::MatrixXd::NullaryExpr(1, rows, [&] { return g(rng); });
  return ResidualSystem(NetworkShape{n, m, 1}, table);
}

// Args: hidden units, rows. Inputs fixed at the Bouc-Wen regressor width.
void BM_CostGradient(benchmark::State& state) {
  const auto sys = random_system(11, static_cast<int>(state.range(0)), static_cast<int>(state.range(1)), 0);
  const ParamVector p = init_params(sys.shape, 0.3, 1);
  for (auto _ : state) benchmark::DoNotOptimize(cost_gradient(p, sys));
  state.SetItemsProcessed(state.iterations() * state.range(1));
}
BENCHMARK(BM_CostGradient)->Args({7, 256})->Args({7, 1019})->Args({9, 1019});

void BM_ResidualJacobian(benchmark::State& state) {
  const auto sys = random_system(11, static_cast<int>(state.range(0)), static_cast<int>(state.range(1)), 0);
  const ParamVector p = init_params(sys.shape, 0.3, 1);
  for (auto _ : state) benchmark::DoNotOptimize(residual_jacobian(p, sys));
  state.SetItemsProcessed(state.iterations() * state.range(1));
}
BENCHMARK(BM_ResidualJacobian)->Args({7, 256})->Args({7, 1019})->Args({9, 1019});

void BM_QgsForwardRun(benchmark::State& state) {
  const RnnResidualModel model(random_system(11, 7, 256, 2));
  const ParamVector p = init_params(model.system().shape, 0.3, 3);
  IntegratorConfig config;
  config.max_time = 0.5;
  StopCondition stop;
  std::size_t steps = 0;
  for (auto _ : state) {
    const TrajectoryOutcome out = integrate(qgs_field(model), p, config, stop);
    steps += out.steps_taken;
  }
  state.counters["steps"] = benchmark::Counter(static_cast<double>(steps), benchmark::Counter::kAvgIterations);
}
BENCHMARK(BM_QgsForwardRun)->Unit(benchmark::kMillisecond);

void BM_BoucWenSimulate(benchmark::State& state) {
  MultisineConfig ms;
  ms.n_samples = static_cast<std::size_t>(state.range(0));
  ms.Ts = 1.0 / 750.0;
  ms.f_min = 5;
  ms.f_max = 150;
  ms.rms_target = 50;
  const std::vector<double> force = multisine(ms);
  const BoucWenParams p;
  for (auto _ : state) benchmark::DoNotOptimize(boucwen_simulate(p, force));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BoucWenSimulate)->Arg(1024)->Unit(benchmark::kMillisecond);

void BM_TanksSimulate(benchmark::State& state) {
  MultisineConfig ms;
  ms.n_samples = static_cast<std::size_t>(state.range(0));
  ms.offset = 2.5;
  ms.rms_target = 0.75;
  const std::vector<double> u = multisine(ms);
  const TankParams p;
  for (auto _ : state) benchmark::DoNotOptimize(tanks_simulate(p, u));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TanksSimulate)->Arg(1024)->Unit(benchmark::kMillisecond);

void BM_Multisine(benchmark::State& state) {
  MultisineConfig ms;
  ms.n_samples = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(multisine(ms));
}
BENCHMARK(BM_Multisine)->Arg(1024)->Arg(8192);

}  // namespace

BENCHMARK_MAIN();
