#include <benchmark/benchmark.h>

#include <omp.h>

#include "flexq/config.hpp"
#include "flexq/harness.hpp"

using namespace flexq;

namespace {

harness::ScenarioConfig small_matrix(int workers) {
  harness::ScenarioConfig c;
  c.strategies = {"TE", "ME", "AE"};
  c.agents = {1, 3};
  c.learning.repetitions = 2;
  c.learning.epochs = 10;
  c.workers = workers;
  return c;
}

const scenario::ScenarioSetup& setup() {
  static const auto s = harness::make_setup(small_matrix(1));
  return s;
}

void BM_matrix_serial(benchmark::State& state) {
  const auto c = small_matrix(1);
  for (auto _ : state) benchmark::DoNotOptimize(harness::run_matrix(c, setup(), harness::Execution::serial));
}

void BM_matrix_parallel(benchmark::State& state) {
  const auto c = small_matrix(omp_get_max_threads());
  for (auto _ : state) benchmark::DoNotOptimize(harness::run_matrix(c, setup(), harness::Execution::parallel));
}

void BM_cell_optimiser(benchmark::State& state) {
  auto c = small_matrix(1);
  c.learning.epochs = 2;
  const harness::Cell cell{"MO", static_cast<int>(state.range(0)), 0};
  for (auto _ : state) benchmark::DoNotOptimize(harness::run_cell(c, setup(), cell));
}

}  // namespace

BENCHMARK(BM_matrix_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_matrix_parallel)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_cell_optimiser)->Arg(1)->Arg(5)->Arg(10)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
