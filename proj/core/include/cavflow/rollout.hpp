#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "cavflow/agent_solver.hpp"
#include "cavflow/config.hpp"
#include "cavflow/plant.hpp"
#include "cavflow/prediction.hpp"
#include "cavflow/terminal_weight.hpp"

namespace cavflow {

struct Bounds {
  double j_lb = 0.0;
  double j_ub = 0.0;
  double v_lb = 0.0;
  double v_ub = 0.0;
};

/// Travel-cost bracket implied by the stability solution of the same solve.
std::pair<double, double> j_bounds(double v_stability, double j_stability, const Weights& w,
                                   const PlannerConfig& pc, const FundamentalDiagram& fd, const Grid& grid,
                                   int horizon);

/// Stability-cost bracket at the current state: q|rho|^2 below, a state-independent constant above.
std::pair<double, double> v_bounds(const DensityField& rho, const Weights& w, const PlannerConfig& pc,
                                   const FundamentalDiagram& fd, const Grid& grid, int horizon);

/// Maps `value` linearly from [lb, ub] onto [m_min, n], rounding half away from zero.
int truncation_horizon(double value, double lb, double ub, int m_min, int n);

struct SolveRecord {
  int iteration = 0;  // 0 = decision ordering
  int rank = 0;       // position of the CAV in the decision order (ordering: candidate slot)
  int cav_id = 0;
  int m_j = 0;
  int m_v = 0;
  double j = 0.0;  // accepted plan
  double v = 0.0;
  double j_stability = 0.0;
  double v_stability = 0.0;
  Bounds bounds;
  double eta = 0.0;
  std::int64_t evals = 0;
  bool fallback = false;
  bool beam = false;
  bool accepted = true;  // false for ordering trials that were not selected
  double v_eval_min = 0.0;
  double v_eval_max = 0.0;
};

struct StepReport {
  int k = 0;
  int horizon = 0;
  std::vector<int> order;             // CAV ids
  int iterations = 0;                 // p used
  bool converged = true;
  std::vector<double> joint_j;        // J_last after ordering (index 0) and after each iteration
  std::vector<double> delta_history;  // one entry per iteration
  std::vector<SolveRecord> solves;
  std::int64_t eval_count = 0;
  std::map<int, double> actions;      // first command per CAV id
  std::map<int, ControlSequence> plans;
};

/// Per-run controller. Remembers each CAV's last accepted plan and its stability value.
class Coordinator {
 public:
  Coordinator(const ScenarioConfig& scenario, const Weights& weights);

  StepReport step(const Snapshot& snap);

  /// Joint travel cost of a complete set of plans (one per CAV in snapshot order).
  double joint_cost(const Snapshot& snap, const std::vector<ControlSequence>& plans, int horizon);

  /// Greedy decision order and the plans accumulated while building it.
  struct Ordering {
    std::vector<int> order;  // snapshot indices
    std::vector<ControlSequence> plans;
  };
  Ordering decision_order(const Snapshot& snap, int horizon, StepReport& report);

  const PlannerConfig& planner() const noexcept { return scenario_.planner; }
  AgentSolver& solver() noexcept { return solver_; }

 private:
  struct Memory {
    ControlSequence plan;
    double v_star = 0.0;
  };
  struct AgentState {
    ControlSequence stability_plan;
    double v_stability = 0.0;
    double j_plan = 0.0;
  };

  StepReport sequential_step(const Snapshot& snap, bool truncate);
  StepReport parallel_step(const Snapshot& snap);
  StepReport centralized_step(const Snapshot& snap);
  ControlSequence shifted(int id, int horizon) const;
  double v_star(int id) const;
  struct PairInput {
    int me = 0;
    int horizon = 1;
    bool truncate = false;
    double v_previous = 0.0;  // feeds the stability horizon
    double j_previous = 0.0;  // feeds the control horizon
    const ControlSequence* stability_prior = nullptr;
    const ControlSequence* control_prior = nullptr;
  };
  SolveRecord solve_pair(const Snapshot& snap, const std::vector<ControlSequence>& plans, const PairInput& in,
                         PlanResult* stab_out, PlanResult* ctl_out);
  void remember(const Snapshot& snap, const StepReport& report);

  ScenarioConfig scenario_;
  Weights weights_;
  AgentSolver solver_;
  HorizonModel model_;
  Grid grid_;
  std::map<int, Memory> memory_;
};

/// Exhaustive joint minimisation of J; joint actions are enumerated with CAV 0 most significant
/// inside each step and earlier steps more significant. Throws BudgetExceeded.
StepReport centralized_plan(const Snapshot& snap, const ScenarioConfig& scenario, int horizon);

struct TraceCav {
  int id = 0;
  double y = 0.0;
  double command = 0.0;
};

struct RunResult {
  ControllerKind controller = ControllerKind::none;
  Metrics metrics;
  TravelSummary summary;
  std::vector<StepReport> reports;
  std::vector<DensityField> densities;     // rho^k for k = 0..T-1
  std::vector<std::vector<TraceCav>> cavs;  // active CAVs and their commands at each k
  double wall_seconds = 0.0;
};

RunResult run(const ScenarioConfig& scenario);

}  // namespace cavflow
