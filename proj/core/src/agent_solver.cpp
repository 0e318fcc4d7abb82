#include "cavflow/agent_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "cavflow/errors.hpp"

namespace cavflow {

namespace {

double field_sum(std::span<const double> rho) { return std::accumulate(rho.begin(), rho.end(), 0.0); }

double field_norm2(std::span<const double> rho) {
  double s = 0.0;
  for (double r : rho) s += r * r;
  return s;
}

double quad_form(const Eigen::MatrixXd& H, std::span<const double> rho) {
  const auto n = static_cast<Eigen::Index>(rho.size());
  double s = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) row += H(i, j) * rho[j];
    s += rho[i] * row;
  }
  return s;
}

std::int64_t saturating_mul(std::int64_t a, std::int64_t b) {
  constexpr std::int64_t cap = std::numeric_limits<std::int64_t>::max() / 2;
  if (a != 0 && b > cap / a) return cap;
  return a * b;
}

void check_context(const SolveContext& ctx) {
  const int n = ctx.horizon;
  if (ctx.snap == nullptr || ctx.me < 0 || ctx.me >= static_cast<int>(ctx.snap->cavs.size())) {
    throw DomainError("solve: the solving CAV is not part of the snapshot");
  }
  if (n < 0) throw DomainError("solve: negative horizon");
  if (ctx.plans.size() != ctx.snap->cavs.size()) throw DomainError("solve: one plan slot per CAV is required");
  for (std::size_t i = 0; i < ctx.plans.size(); ++i) {
    if (static_cast<int>(i) != ctx.me && !ctx.plans[i].empty() && ctx.plans[i].size() < static_cast<std::size_t>(n)) {
      throw DomainError(fmt::format("solve: plan of CAV {} is shorter than the horizon {}", ctx.snap->cavs[i].id, n));
    }
  }
}

}  // namespace

double contraction_eta(double v_now, double v_prev_star, double lambda) {
  if (std::isinf(v_prev_star)) return std::numeric_limits<double>::infinity();
  return v_now + lambda * (v_prev_star - v_now);
}

double stability_cost(std::span<const DensityField> xi, const ControlSequence& mu, const Weights& w, int horizon) {
  double v = 0.0;
  for (int t = 0; t < horizon; ++t) v += w.q * field_norm2(xi[t].values()) + w.r * mu[t] * mu[t];
  return v + quad_form(w.H, xi[horizon].values());
}

struct AgentSolver::Search {
  ControlSequence best;
  Key best_key{2, 0.0};
  std::int64_t evals = 0;
  double v_min = std::numeric_limits<double>::infinity();
  double v_max = -std::numeric_limits<double>::infinity();
  CostPair best_cost;

  static bool before(const Key& a, const ControlSequence& sa, const Key& b, const ControlSequence& sb) {
    if (a.rank != b.rank) return a.rank < b.rank;
    if (a.value != b.value) return a.value < b.value;
    return std::lexicographical_compare(sa.begin(), sa.end(), sb.begin(), sb.end());
  }

  void consider(const ControlSequence& seq, const CostPair& c, const Key& k) {
    ++evals;
    v_min = std::min(v_min, c.V);
    v_max = std::max(v_max, c.V);
    if (best.empty() || before(k, seq, best_key, best)) {
      best = seq;
      best_key = k;
      best_cost = c;
    }
  }
};

AgentSolver::AgentSolver(const ScenarioConfig& scenario, const Weights& weights)
    : scenario_(scenario), weights_(weights), actions_(scenario.planner.action_set()), model_(scenario) {
  scratch_.resize(2);
}

std::int64_t AgentSolver::candidate_count(int free_steps) const {
  const auto a = static_cast<std::int64_t>(actions_.size());
  std::int64_t exact = 1;
  for (int t = 0; t < free_steps; ++t) exact = saturating_mul(exact, a);
  if (exact <= scenario_.planner.enumeration_budget) return exact;
  const std::int64_t width = scenario_.planner.effective_beam_width();
  std::int64_t nodes = 1, total = 0;
  for (int t = 0; t < free_steps; ++t) {
    const std::int64_t children = nodes * a;
    total += children;
    nodes = std::min(width, children);
  }
  return total;
}

AgentSolver::Key AgentSolver::key_of(Goal goal, double eta, const CostPair& c, double terminal) const {
  const double eps = scenario_.planner.terminal_epsilon;
  const bool terminal_ok = !std::isfinite(eps) || terminal <= eps * eps;
  if (goal == Goal::stability) return {terminal_ok ? 0 : 1, c.V};
  return {(terminal_ok && c.V <= eta) ? 0 : 1, c.J};
}

void AgentSolver::load_commands(const SolveContext& ctx) {
  const std::size_t m = ctx.snap->cavs.size();
  cmds_.resize(static_cast<std::size_t>(ctx.horizon));
  for (int t = 0; t < ctx.horizon; ++t) {
    std::vector<double>& u = cmds_[t];
    u.assign(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const ControlSequence& p = ctx.plans[i];
      if (static_cast<int>(i) != ctx.me && !p.empty()) u[i] = p[t];
    }
  }
}

CostPair AgentSolver::finish(const SolveContext& ctx, int from, const PredictState& state, CostPair acc,
                             const ControlSequence& mu, double* terminal) {
  const Grid& g = model_.grid();
  const PredictState* cur = &state;
  int flip = 0;
  for (int t = from; t < ctx.horizon; ++t) {
    acc.J += field_sum(cur->rho) * g.dt() * g.dx();
    acc.V += weights_.q * field_norm2(cur->rho) + weights_.r * mu[t] * mu[t];
    cmds_[t][ctx.me] = mu[t];
    model_.step(*cur, ctx.snap->k + t, cmds_[t], scratch_[flip]);
    cur = &scratch_[flip];
    flip ^= 1;
  }
  *terminal = quad_form(weights_.H, cur->rho);
  acc.V += *terminal;
  return acc;
}

CostPair AgentSolver::evaluate(const SolveContext& ctx, const ControlSequence& mu) {
  check_context(ctx);
  if (mu.size() < static_cast<std::size_t>(ctx.horizon)) throw DomainError("evaluate: sequence shorter than the horizon");
  const PredictState root = model_.initial(*ctx.snap);
  load_commands(ctx);
  double terminal = 0.0;
  return finish(ctx, 0, root, {}, mu, &terminal);
}

Trajectory AgentSolver::trajectory(const SolveContext& ctx, const ControlSequence& mu) {
  std::map<int, ControlSequence> committed;
  for (std::size_t i = 0; i < ctx.plans.size(); ++i) {
    if (static_cast<int>(i) != ctx.me && !ctx.plans[i].empty()) committed[ctx.snap->cavs[i].id] = ctx.plans[i];
  }
  return predict_horizon(*ctx.snap, ctx.snap->cavs[ctx.me].id, mu, committed, ctx.horizon, model_);
}

PlanResult AgentSolver::search(const SolveContext& ctx, Goal goal, double eta, int free_steps,
                               const ControlSequence& prior, std::span<const ControlSequence> extras) {
  const int n = ctx.horizon;
  check_context(ctx);
  if (prior.size() < static_cast<std::size_t>(n)) throw DomainError("solve: prior sequence shorter than the horizon");
  const int m = std::clamp(free_steps, 0, n);
  const Grid& g = model_.grid();
  const int k0 = ctx.snap->k;

  Search s;
  ControlSequence cand(prior.begin(), prior.begin() + n);
  const PredictState root = model_.initial(*ctx.snap);

  // others' commands do not depend on the candidate, so they are laid out once per step
  load_commands(ctx);
  auto& cmds = cmds_;

  auto stage = [&](const PredictState& st, double a) {
    return CostPair{field_sum(st.rho) * g.dt() * g.dx(), weights_.q * field_norm2(st.rho) + weights_.r * a * a};
  };
  auto add = [](CostPair x, CostPair y) { return CostPair{x.J + y.J, x.V + y.V}; };
  auto settle = [&](const PredictState& st, int from, const CostPair& acc, const ControlSequence& seq) {
    double terminal = 0.0;
    const CostPair c = finish(ctx, from, st, acc, seq, &terminal);
    const Key key = key_of(goal, eta, c, terminal);
    s.consider(seq, c, key);
    return key;
  };

  const bool use_beam = [&] {
    std::int64_t e = 1;
    for (int t = 0; t < m; ++t) e = saturating_mul(e, static_cast<std::int64_t>(actions_.size()));
    return e > scenario_.planner.enumeration_budget;
  }();

  if (!use_beam) {
    std::vector<PredictState> st(static_cast<std::size_t>(m) + 1);
    std::vector<CostPair> acc(static_cast<std::size_t>(m) + 1);
    st[0] = root;
    auto dfs = [&](auto&& self, int t) -> void {
      if (t == m) {
        settle(st[t], m, acc[t], cand);
        return;
      }
      for (double a : actions_) {
        cand[t] = a;
        cmds[t][ctx.me] = a;
        model_.step(st[t], k0 + t, cmds[t], st[t + 1]);
        acc[t + 1] = add(acc[t], stage(st[t], a));
        self(self, t + 1);
      }
      cand[t] = prior[t];
    };
    dfs(dfs, 0);
  } else {
    struct Node {
      ControlSequence seq;
      PredictState state;
      CostPair acc;
      Key key;
    };
    const auto width = static_cast<std::size_t>(scenario_.planner.effective_beam_width());
    std::vector<Node> nodes{Node{cand, root, {}, {}}};
    std::vector<Node> children;
    for (int t = 0; t < m; ++t) {
      children.clear();
      for (const Node& node : nodes) {
        for (double a : actions_) {
          Node ch{node.seq, {}, {}, {}};
          ch.seq[t] = a;
          cmds[t][ctx.me] = a;
          model_.step(node.state, k0 + t, cmds[t], ch.state);
          ch.acc = add(node.acc, stage(node.state, a));
          ch.key = settle(ch.state, t + 1, ch.acc, ch.seq);
          children.push_back(std::move(ch));
        }
      }
      std::stable_sort(children.begin(), children.end(),
                       [](const Node& x, const Node& y) { return Search::before(x.key, x.seq, y.key, y.seq); });
      if (children.size() > width) children.resize(width);
      std::swap(nodes, children);
    }
  }

  for (const ControlSequence& extra : extras) {
    if (extra.size() < static_cast<std::size_t>(n)) throw DomainError("solve: extra candidate shorter than the horizon");
    ControlSequence seq(extra.begin(), extra.begin() + n);
    if (!use_beam) {
      bool inside = true;
      for (int t = 0; t < n && inside; ++t) {
        inside = t < m ? std::find(actions_.begin(), actions_.end(), seq[t]) != actions_.end() : seq[t] == prior[t];
      }
      if (inside) continue;
    }
    settle(root, 0, {}, seq);
  }

  PlanResult r;
  r.mu = s.best;
  r.J = s.best_cost.J;
  r.V = s.best_cost.V;
  r.feasible = s.best_key.rank == 0;
  r.beam = use_beam;
  r.free_steps = m;
  r.evals = s.evals;
  r.v_eval_min = s.v_min;
  r.v_eval_max = s.v_max;
  r.xi = trajectory(ctx, r.mu).rho;
  return r;
}

PlanResult AgentSolver::solve_stability(const SolveContext& ctx, int free_steps, const ControlSequence& prior,
                                        std::span<const ControlSequence> extras) {
  return search(ctx, Goal::stability, std::numeric_limits<double>::infinity(), free_steps, prior, extras);
}

PlanResult AgentSolver::solve_control(const SolveContext& ctx, double eta, int free_steps, const ControlSequence& prior,
                                      const PlanResult& stability, std::span<const ControlSequence> extras) {
  PlanResult r = search(ctx, Goal::control, eta, free_steps, prior, extras);
  if (r.feasible) return r;
  PlanResult fb = stability;
  fb.fallback = true;
  fb.evals = r.evals;
  fb.free_steps = r.free_steps;
  fb.beam = r.beam;
  fb.v_eval_min = r.v_eval_min;
  fb.v_eval_max = r.v_eval_max;
  return fb;
}

}  // namespace cavflow
