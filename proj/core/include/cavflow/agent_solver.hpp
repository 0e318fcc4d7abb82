#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cavflow/config.hpp"
#include "cavflow/prediction.hpp"
#include "cavflow/terminal_weight.hpp"

namespace cavflow {

struct CostPair {
  double J = 0.0;  // veh*s
  double V = 0.0;
};

/// Everything a single solve depends on. `plans` has one sequence per CAV in snapshot order
/// (the solving CAV's own entry is ignored; an empty sequence means "no command").
struct SolveContext {
  const Snapshot* snap = nullptr;
  int me = 0;  // index into snap->cavs
  std::vector<ControlSequence> plans;
  int horizon = 1;
};

struct PlanResult {
  ControlSequence mu;
  std::vector<DensityField> xi;  // horizon + 1 fields
  double J = 0.0;
  double V = 0.0;
  bool feasible = true;
  bool fallback = false;  // control problem had no admissible candidate; mu is the stability plan
  bool beam = false;      // candidate set was searched approximately
  int free_steps = 0;
  std::int64_t evals = 0;
  double v_eval_min = 0.0;
  double v_eval_max = 0.0;
};

double contraction_eta(double v_now, double v_prev_star, double lambda);

double stability_cost(std::span<const DensityField> xi, const ControlSequence& mu, const Weights& w, int horizon);

/// Enumerative solver for one CAV. The first `free_steps` commands range over the action set,
/// the rest follow `prior`. Ties go to the lexicographically smallest sequence.
class AgentSolver {
 public:
  AgentSolver(const ScenarioConfig& scenario, const Weights& weights);

  const Weights& weights() const noexcept { return weights_; }
  const std::vector<double>& actions() const noexcept { return actions_; }

  CostPair evaluate(const SolveContext& ctx, const ControlSequence& mu);
  Trajectory trajectory(const SolveContext& ctx, const ControlSequence& mu);

  /// Minimises V. `extras` are additional complete sequences considered alongside the search.
  PlanResult solve_stability(const SolveContext& ctx, int free_steps, const ControlSequence& prior,
                             std::span<const ControlSequence> extras = {});

  /// Minimises J subject to V <= eta; falls back to `stability` when nothing is admissible.
  PlanResult solve_control(const SolveContext& ctx, double eta, int free_steps, const ControlSequence& prior,
                           const PlanResult& stability, std::span<const ControlSequence> extras = {});

  /// Candidates the search will evaluate for a given number of free steps (extras excluded).
  std::int64_t candidate_count(int free_steps) const;

 private:
  enum class Goal { stability, control };
  struct Key {
    int rank = 0;  // 0 admissible, 1 not
    double value = 0.0;
  };
  struct Search;

  PlanResult search(const SolveContext& ctx, Goal goal, double eta, int free_steps, const ControlSequence& prior,
                    std::span<const ControlSequence> extras);
  Key key_of(Goal goal, double eta, const CostPair& c, double terminal) const;
  void load_commands(const SolveContext& ctx);
  CostPair finish(const SolveContext& ctx, int from, const PredictState& state, CostPair acc, const ControlSequence& mu,
                  double* terminal);

  ScenarioConfig scenario_;
  Weights weights_;
  std::vector<double> actions_;
  HorizonModel model_;
  std::vector<PredictState> scratch_;
  // per-step commands of every CAV; the solving CAV's slot is overwritten while searching
  std::vector<std::vector<double>> cmds_;
};

}  // namespace cavflow
