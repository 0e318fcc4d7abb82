#include "cavflow/rollout.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "cavflow/errors.hpp"

namespace cavflow {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

int horizon_at(const ScenarioConfig& sc, int k) { return std::max(1, std::min(sc.planner.horizon, sc.total_steps - k)); }

}  // namespace

std::pair<double, double> j_bounds(double v_stability, double j_stability, const Weights& w,
                                   const PlannerConfig& pc, const FundamentalDiagram& fd, const Grid& grid,
                                   int horizon) {
  const double R = fd.jam_density;
  const double bracket =
      v_stability - horizon * w.r * pc.u_max * pc.u_max - grid.num_cells() * w.h * R * R;
  const double lb = std::max(0.0, grid.dx() * grid.dt() / w.q * bracket);
  return {lb, j_stability};
}

std::pair<double, double> v_bounds(const DensityField& rho, const Weights& w, const PlannerConfig& pc,
                                   const FundamentalDiagram& fd, const Grid& grid, int horizon) {
  const double R = fd.jam_density;
  const double cells = grid.num_cells();
  const double ub = cells * w.h * R * R + horizon * (w.q * cells * R * R + w.r * pc.u_max * pc.u_max);
  return {w.q * rho.squared_norm(), ub};
}

int truncation_horizon(double value, double lb, double ub, int m_min, int n) {
  if (!(ub > lb)) return n;
  const double x = (std::clamp(value, lb, ub) - lb) / (ub - lb);
  const double raw = m_min + (n - m_min) * x;
  return std::clamp(static_cast<int>(std::round(raw)), m_min, n);
}

Coordinator::Coordinator(const ScenarioConfig& scenario, const Weights& weights)
    : scenario_(scenario), weights_(weights), solver_(scenario, weights), model_(scenario), grid_(scenario.grid()) {}

ControlSequence Coordinator::shifted(int id, int horizon) const {
  ControlSequence out(static_cast<std::size_t>(horizon), 0.0);
  auto it = memory_.find(id);
  if (it == memory_.end()) return out;
  const ControlSequence& p = it->second.plan;
  for (int t = 0; t < horizon && t + 1 < static_cast<int>(p.size()); ++t) out[t] = p[t + 1];
  return out;
}

double Coordinator::v_star(int id) const {
  auto it = memory_.find(id);
  return it == memory_.end() ? kInf : it->second.v_star;
}

double Coordinator::joint_cost(const Snapshot& snap, const std::vector<ControlSequence>& plans, int horizon) {
  PredictState cur = model_.initial(snap);
  PredictState next;
  std::vector<double> u(snap.cavs.size(), 0.0);
  double j = 0.0;
  for (int t = 0; t < horizon; ++t) {
    j += std::accumulate(cur.rho.begin(), cur.rho.end(), 0.0) * grid_.dt() * grid_.dx();
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = plans[i].empty() ? 0.0 : plans[i][t];
    model_.step(cur, snap.k + t, u, next);
    std::swap(cur, next);
  }
  return j;
}

SolveRecord Coordinator::solve_pair(const Snapshot& snap, const std::vector<ControlSequence>& plans,
                                    const PairInput& in, PlanResult* stab_out, PlanResult* ctl_out) {
  const PlannerConfig& pc = scenario_.planner;
  const int n = in.horizon;
  const int id = snap.cavs[in.me].id;
  SolveContext ctx{&snap, in.me, plans, n};

  SolveRecord rec;
  rec.cav_id = id;
  const auto [v_lb, v_ub] = v_bounds(snap.rho, weights_, pc, scenario_.fd, grid_, n);
  rec.bounds.v_lb = v_lb;
  rec.bounds.v_ub = v_ub;
  rec.m_v = in.truncate ? truncation_horizon(in.v_previous, v_lb, v_ub, std::min(pc.min_horizon, n), n) : n;

  const ControlSequence shift = shifted(id, n);
  PlanResult stab = solver_.solve_stability(ctx, rec.m_v, *in.stability_prior, std::span(&shift, 1));
  rec.eta = contraction_eta(stab.V, v_star(id), pc.lambda);
  const auto [j_lb, j_ub] = j_bounds(stab.V, stab.J, weights_, pc, scenario_.fd, grid_, n);
  rec.bounds.j_lb = j_lb;
  rec.bounds.j_ub = j_ub;
  rec.m_j = in.truncate ? truncation_horizon(in.j_previous, j_lb, j_ub, std::min(pc.min_horizon, n), n) : n;

  PlanResult ctl = solver_.solve_control(ctx, rec.eta, rec.m_j, *in.control_prior, stab, std::span(&stab.mu, 1));
  rec.j = ctl.J;
  rec.v = ctl.V;
  rec.j_stability = stab.J;
  rec.v_stability = stab.V;
  rec.evals = stab.evals + ctl.evals;
  rec.fallback = ctl.fallback;
  rec.beam = stab.beam || ctl.beam;
  rec.v_eval_min = std::min(stab.v_eval_min, ctl.v_eval_min);
  rec.v_eval_max = std::max(stab.v_eval_max, ctl.v_eval_max);
  if (stab_out != nullptr) *stab_out = std::move(stab);
  if (ctl_out != nullptr) *ctl_out = std::move(ctl);
  return rec;
}

Coordinator::Ordering Coordinator::decision_order(const Snapshot& snap, int horizon, StepReport& report) {
  const std::size_t m = snap.cavs.size();
  Ordering out;
  out.plans.assign(m, ControlSequence{});
  if (scenario_.planner.ordering == cavflow::Ordering::fixed) {
    for (std::size_t i = 0; i < m; ++i) {
      out.order.push_back(static_cast<int>(i));
      out.plans[i].assign(static_cast<std::size_t>(horizon), 0.0);
    }
    return out;
  }
  std::vector<bool> placed(m, false);
  for (std::size_t rank = 0; rank < m; ++rank) {
    int best = -1;
    PlanResult best_ctl;
    SolveRecord best_rec;
    for (std::size_t c = 0; c < m; ++c) {
      if (placed[c]) continue;
      const ControlSequence prior = shifted(snap.cavs[c].id, horizon);
      PairInput in;
      in.me = static_cast<int>(c);
      in.horizon = horizon;
      in.stability_prior = &prior;
      in.control_prior = &prior;
      PlanResult ctl;
      SolveRecord rec = solve_pair(snap, out.plans, in, nullptr, &ctl);
      rec.iteration = 0;
      rec.rank = static_cast<int>(rank);
      rec.accepted = false;
      report.eval_count += rec.evals;
      report.solves.push_back(rec);
      if (best < 0 || ctl.J < best_ctl.J) {
        best = static_cast<int>(c);
        best_ctl = std::move(ctl);
        best_rec = rec;
      }
    }
    placed[best] = true;
    out.order.push_back(best);
    out.plans[best] = best_ctl.mu;
    for (auto it = report.solves.rbegin(); it != report.solves.rend() && it->rank == static_cast<int>(rank); ++it) {
      if (it->cav_id == snap.cavs[best].id) it->accepted = true;
    }
  }
  return out;
}

StepReport Coordinator::sequential_step(const Snapshot& snap, bool truncate) {
  const PlannerConfig& pc = scenario_.planner;
  const int n = horizon_at(scenario_, snap.k);
  const std::size_t m = snap.cavs.size();
  StepReport rep;
  rep.k = snap.k;
  rep.horizon = n;

  Ordering ord = decision_order(snap, n, rep);
  std::vector<ControlSequence> plans = ord.plans;
  for (int idx : ord.order) rep.order.push_back(snap.cavs[idx].id);

  std::vector<AgentState> agent(m);
  for (std::size_t i = 0; i < m; ++i) agent[i].stability_plan = plans[i];
  // ordering trials seed the horizons of the first iteration
  for (const SolveRecord& r : rep.solves) {
    if (!r.accepted) continue;
    const int i = snap.index_of(r.cav_id);
    agent[i].v_stability = r.v_stability;
    agent[i].j_plan = r.j;
  }
  double j_last = joint_cost(snap, plans, n);
  if (rep.solves.empty()) {
    for (std::size_t i = 0; i < m; ++i) {
      agent[i].v_stability = v_bounds(snap.rho, weights_, pc, scenario_.fd, grid_, n).second;
      agent[i].j_plan = j_last;
    }
  }
  rep.joint_j.push_back(j_last);

  double delta = kInf;
  int p = 0;
  while (delta > pc.epsilon && p < pc.max_iterations) {
    ++p;
    for (std::size_t rank = 0; rank < ord.order.size(); ++rank) {
      const int i = ord.order[rank];
      PairInput in;
      in.me = i;
      in.horizon = n;
      in.truncate = truncate;
      in.v_previous = agent[i].v_stability;
      in.j_previous = agent[i].j_plan;
      const ControlSequence stab_prior = agent[i].stability_plan;
      const ControlSequence ctl_prior = plans[i];
      in.stability_prior = &stab_prior;
      in.control_prior = &ctl_prior;
      PlanResult stab, ctl;
      SolveRecord rec = solve_pair(snap, plans, in, &stab, &ctl);
      rec.iteration = p;
      rec.rank = static_cast<int>(rank);
      rep.eval_count += rec.evals;
      rep.solves.push_back(rec);
      plans[i] = ctl.mu;
      agent[i].stability_plan = stab.mu;
      agent[i].v_stability = stab.V;
      agent[i].j_plan = ctl.J;
      j_last = ctl.J;
    }
    delta = std::abs(j_last - rep.joint_j.back());
    rep.joint_j.push_back(j_last);
    rep.delta_history.push_back(delta);
  }
  rep.iterations = p;
  rep.converged = delta <= pc.epsilon;
  for (std::size_t i = 0; i < m; ++i) {
    rep.plans[snap.cavs[i].id] = plans[i];
    rep.actions[snap.cavs[i].id] = plans[i][0];
  }
  return rep;
}

StepReport Coordinator::parallel_step(const Snapshot& snap) {
  const PlannerConfig& pc = scenario_.planner;
  const int n = horizon_at(scenario_, snap.k);
  const std::size_t m = snap.cavs.size();
  StepReport rep;
  rep.k = snap.k;
  rep.horizon = n;
  for (const CavState& c : snap.cavs) rep.order.push_back(c.id);

  std::vector<ControlSequence> plans(m, ControlSequence(static_cast<std::size_t>(n), 0.0));
  std::vector<ControlSequence> stab_plans = plans;
  double j_last = joint_cost(snap, plans, n);
  rep.joint_j.push_back(j_last);

  double delta = kInf;
  int p = 0;
  while (delta > pc.epsilon && p < pc.max_iterations) {
    ++p;
    std::vector<ControlSequence> next = plans;
    for (std::size_t i = 0; i < m; ++i) {
      PairInput in;
      in.me = static_cast<int>(i);
      in.horizon = n;
      in.stability_prior = &stab_plans[i];
      in.control_prior = &plans[i];
      PlanResult stab, ctl;
      SolveRecord rec = solve_pair(snap, plans, in, &stab, &ctl);
      rec.iteration = p;
      rec.rank = static_cast<int>(i);
      rep.eval_count += rec.evals;
      rep.solves.push_back(rec);
      next[i] = ctl.mu;
      stab_plans[i] = stab.mu;
    }
    plans = std::move(next);
    j_last = joint_cost(snap, plans, n);
    delta = std::abs(j_last - rep.joint_j.back());
    rep.joint_j.push_back(j_last);
    rep.delta_history.push_back(delta);
  }
  rep.iterations = p;
  rep.converged = delta <= pc.epsilon;
  for (std::size_t i = 0; i < m; ++i) {
    rep.plans[snap.cavs[i].id] = plans[i];
    rep.actions[snap.cavs[i].id] = plans[i][0];
  }
  return rep;
}

StepReport centralized_plan(const Snapshot& snap, const ScenarioConfig& scenario, int horizon) {
  const std::vector<double> actions = scenario.planner.action_set();
  const auto a = static_cast<std::int64_t>(actions.size());
  const std::size_t m = snap.cavs.size();
  StepReport rep;
  rep.k = snap.k;
  rep.horizon = horizon;
  for (const CavState& c : snap.cavs) rep.order.push_back(c.id);
  if (m == 0) return rep;

  std::int64_t per_step = 1;
  for (std::size_t i = 0; i < m; ++i) per_step *= a;
  double total = 1.0;
  for (int t = 0; t < horizon; ++t) total *= static_cast<double>(per_step);
  if (total > static_cast<double>(scenario.planner.centralized_budget)) {
    throw BudgetExceeded(fmt::format("centralized search needs {:.3g} candidates, budget is {}", total,
                                     scenario.planner.centralized_budget));
  }

  HorizonModel model(scenario);
  const Grid& g = model.grid();
  std::vector<PredictState> st(static_cast<std::size_t>(horizon) + 1);
  std::vector<double> acc(static_cast<std::size_t>(horizon) + 1, 0.0);
  std::vector<std::int64_t> choice(static_cast<std::size_t>(horizon), 0), best_choice;
  std::vector<double> u(m, 0.0);
  double best = kInf;
  st[0] = model.initial(snap);

  auto dfs = [&](auto&& self, int t) -> void {
    if (t == horizon) {
      ++rep.eval_count;
      if (acc[t] < best) {
        best = acc[t];
        best_choice = choice;
      }
      return;
    }
    const double stage = std::accumulate(st[t].rho.begin(), st[t].rho.end(), 0.0) * g.dt() * g.dx();
    for (std::int64_t idx = 0; idx < per_step; ++idx) {
      std::int64_t rest = idx;
      for (std::size_t i = m; i-- > 0;) {
        u[i] = actions[static_cast<std::size_t>(rest % a)];
        rest /= a;
      }
      choice[t] = idx;
      model.step(st[t], snap.k + t, u, st[t + 1]);
      acc[t + 1] = acc[t] + stage;
      self(self, t + 1);
    }
  };
  dfs(dfs, 0);

  std::vector<ControlSequence> plans(m, ControlSequence(static_cast<std::size_t>(horizon), 0.0));
  for (int t = 0; t < horizon; ++t) {
    std::int64_t rest = best_choice[t];
    for (std::size_t i = m; i-- > 0;) {
      plans[i][t] = actions[static_cast<std::size_t>(rest % a)];
      rest /= a;
    }
  }
  rep.joint_j.push_back(best);
  for (std::size_t i = 0; i < m; ++i) {
    rep.plans[snap.cavs[i].id] = plans[i];
    rep.actions[snap.cavs[i].id] = plans[i][0];
  }
  return rep;
}

StepReport Coordinator::centralized_step(const Snapshot& snap) {
  return centralized_plan(snap, scenario_, horizon_at(scenario_, snap.k));
}

void Coordinator::remember(const Snapshot& snap, const StepReport& report) {
  // keep only CAVs still present, with their accepted plan and its stability value
  std::map<int, Memory> next;
  for (const CavState& c : snap.cavs) {
    auto plan = report.plans.find(c.id);
    if (plan == report.plans.end()) continue;
    Memory mem;
    mem.plan = plan->second;
    mem.v_star = kInf;
    for (auto it = report.solves.rbegin(); it != report.solves.rend(); ++it) {
      if (it->cav_id == c.id && it->accepted) {
        mem.v_star = it->v;
        break;
      }
    }
    next[c.id] = std::move(mem);
  }
  memory_ = std::move(next);
}

StepReport Coordinator::step(const Snapshot& snap) {
  StepReport rep;
  switch (scenario_.planner.controller) {
    case ControllerKind::none:
      rep.k = snap.k;
      rep.horizon = horizon_at(scenario_, snap.k);
      return rep;
    case ControllerKind::centralized:
      return centralized_step(snap);
    case ControllerKind::dmpc_parallel:
      rep = parallel_step(snap);
      break;
    case ControllerKind::rollout_full:
      rep = sequential_step(snap, false);
      break;
    case ControllerKind::rollout_truncated:
      rep = sequential_step(snap, scenario_.planner.truncation);
      break;
  }
  remember(snap, rep);
  return rep;
}

RunResult run(const ScenarioConfig& scenario) {
  const auto start = std::chrono::steady_clock::now();
  RunResult res;
  res.controller = scenario.planner.controller;
  Plant plant(scenario);
  const Weights w = make_weights(scenario.fd, plant.grid(), scenario.planner);
  Coordinator coord(scenario, w);
  while (!plant.finished()) {
    plant.spawn_and_retire();
    const Snapshot snap = snapshot_of(plant.state());
    StepReport rep = coord.step(snap);
    res.densities.push_back(snap.rho);
    std::vector<TraceCav> row;
    for (const CavState& c : snap.cavs) {
      auto it = rep.actions.find(c.id);
      row.push_back({c.id, c.y, it == rep.actions.end() ? 0.0 : it->second});
    }
    res.cavs.push_back(std::move(row));
    plant.advance(rep.actions);
    res.reports.push_back(std::move(rep));
  }
  res.metrics = plant.state().metrics;
  for (const StepReport& r : res.reports) {
    res.metrics.eval_count += r.eval_count;
    for (const SolveRecord& s : r.solves) {
      if (s.iteration == 0) continue;
      res.metrics.per_step_m.push_back(s.m_j);
      res.metrics.per_step_m.push_back(s.m_v);
    }
  }
  res.summary = average_travel_metrics(res.metrics);
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

}  // namespace cavflow
