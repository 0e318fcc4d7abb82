#include <benchmark/benchmark.h>

#include <vector>

#include "cavflow/agent_solver.hpp"
#include "cavflow/rollout.hpp"

using namespace cavflow;

namespace {

Snapshot congested(int cavs) {
  Snapshot snap;
  snap.rho = DensityField(std::vector<double>{0.04, 0.05, 0.07, 0.09, 0.08, 0.06, 0.05});
  for (int i = 0; i < cavs; ++i) {
    CavState c;
    c.id = i;
    c.y = 100.0 + 450.0 * i;
    snap.cavs.push_back(c);
  }
  return snap;
}

ScenarioConfig planner_scenario(int horizon) {
  ScenarioConfig s = default_scenario();
  s.planner.horizon = horizon;
  s.arrivals = {};
  return s;
}

void BM_SolveStability(benchmark::State& state) {
  const ScenarioConfig s = planner_scenario(static_cast<int>(state.range(0)));
  const Weights w = make_weights(s.fd, s.grid(), s.planner);
  AgentSolver solver(s, w);
  const Snapshot snap = congested(3);
  const SolveContext ctx{&snap, 1, {{}, {}, {}}, s.planner.horizon};
  const ControlSequence prior(static_cast<std::size_t>(s.planner.horizon), 0.0);
  std::int64_t evals = 0;
  for (auto _ : state) {
    const PlanResult r = solver.solve_stability(ctx, s.planner.horizon, prior);
    evals += r.evals;
    benchmark::DoNotOptimize(r.V);
  }
  state.counters["evals/solve"] = static_cast<double>(evals) / static_cast<double>(state.iterations());
}
BENCHMARK(BM_SolveStability)->Arg(3)->Arg(5)->Arg(7)->Unit(benchmark::kMicrosecond);

void BM_CoordinateStep(benchmark::State& state) {
  ScenarioConfig s = planner_scenario(7);
  s.planner.controller = state.range(1) != 0 ? ControllerKind::rollout_truncated : ControllerKind::rollout_full;
  const Weights w = make_weights(s.fd, s.grid(), s.planner);
  const Snapshot snap = congested(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    Coordinator c(s, w);
    benchmark::DoNotOptimize(c.step(snap).eval_count);
  }
}
BENCHMARK(BM_CoordinateStep)->Args({2, 0})->Args({2, 1})->Args({4, 1})->Unit(benchmark::kMillisecond);

}  // namespace
