#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "cavflow/bottleneck.hpp"
#include "cavflow/plant.hpp"

using namespace cavflow;

namespace {

void BM_DensityStep(benchmark::State& state) {
  const FundamentalDiagram fd;
  const Grid grid = Grid::create(static_cast<int>(state.range(0)), 300, 1, fd);
  DensityStepper stepper(fd, grid);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> dens(0.0, 0.11);
  std::vector<double> rho(static_cast<std::size_t>(grid.num_cells()));
  for (double& r : rho) r = dens(rng);
  std::vector<CavPoint> cavs;
  for (int i = 0; i < state.range(1); ++i) cavs.push_back({i, 150.0 + 300.0 * i, 12.0});
  std::vector<double> out(rho.size());
  for (auto _ : state) {
    stepper.step(rho, cavs, {0.6, 0.7}, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_DensityStep)->Args({7, 0})->Args({7, 3})->Args({70, 20});

void BM_PlantRunNoControl(benchmark::State& state) {
  ScenarioConfig s = default_scenario();
  for (auto _ : state) {
    Plant plant(s);
    while (!plant.finished()) {
      plant.spawn_and_retire();
      plant.advance({});
    }
    benchmark::DoNotOptimize(plant.state().metrics.total_vehicle_time);
  }
}
BENCHMARK(BM_PlantRunNoControl)->Unit(benchmark::kMillisecond);

}  // namespace
