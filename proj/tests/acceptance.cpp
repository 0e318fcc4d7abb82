// Acceptance gate. Prints one PASS/FAIL line per criterion and exits nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "cavflow/bottleneck.hpp"
#include "cavflow/plant.hpp"
#include "cavflow/results.hpp"
#include "cavflow/rollout.hpp"
#include "cavflow/scenario.hpp"
#include "cavflow/terminal_weight.hpp"
#include "support.hpp"

using namespace cavflow;
using testing_support::make_snapshot;
using testing_support::road_of;
using testing_support::scenario_path;
using testing_support::scene_of;

namespace {

using Clock = std::chrono::steady_clock;

int failures = 0;
std::map<int, std::string> lines;  // printed in criterion order at the end

void report(int id, const char* name, bool ok, const std::string& detail) {
  lines[id] = fmt::format("{} [{:2}] {}: {}", ok ? "PASS" : "FAIL", id, name, detail);
  if (!ok) ++failures;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

ScenarioConfig with_controller(ScenarioConfig s, ControllerKind kind) {
  s.planner.controller = kind;
  return s;
}

// Replays the commands of a finished run on a fresh plant to recover boundary fluxes.
struct FluxTrace {
  std::vector<std::vector<double>> rho;
  std::vector<double> in, out;
  bool replay_matches = true;
};

FluxTrace replay(const ScenarioConfig& s, const std::vector<std::map<int, double>>& commands,
                 const std::vector<DensityField>* expected) {
  FluxTrace tr;
  Plant plant(s);
  std::size_t k = 0;
  while (!plant.finished()) {
    plant.spawn_and_retire();
    tr.rho.push_back(plant.state().rho.vector());
    if (expected != nullptr && !(plant.state().rho == (*expected)[k])) tr.replay_matches = false;
    plant.advance(commands[k++]);
    const auto f = plant.last_interface_flux();
    tr.in.push_back(f.front());
    tr.out.push_back(f.back());
  }
  tr.rho.push_back(plant.state().rho.vector());
  return tr;
}

void c1_dynamics() {
  const auto t0 = Clock::now();
  const FundamentalDiagram fd;
  const Grid grid = Grid::create(7, 300, 1, fd);
  const oracle::Road road;
  DensityStepper stepper(fd, grid);
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> dens(0.0, 0.1199), pos(0.0, 2099.9), speed(5.0, 33.33), flow(0.0, 0.9999);
  double worst = 0.0;
  int with_host = 0;
  std::vector<double> got(7);
  SystemStep detail;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> rho(7);
    for (double& r : rho) r = dens(rng);
    std::vector<oracle::Car> cars;
    std::vector<CavPoint> points;
    const int n = trial % 2 == 0 ? 0 : 1 + static_cast<int>(rng() % 4);
    for (int i = 0; i < n; ++i) {
      const int cell = static_cast<int>(rng() % 7);
      double y = pos(rng);
      double u = speed(rng);
      // half of the CAVs are placed inside their cell's window on purpose
      if (rng() % 2 == 0) {
        const GammaWindow w = gamma_bounds(rho[cell], fd);
        const double lo = std::max(w.gamma1, 1.0), hi = std::min(w.gamma2, fd.free_speed);
        if (hi > lo) {
          u = lo + (hi - lo) * std::uniform_real_distribution<double>(0.01, 0.99)(rng);
          y = cell * 300.0 + std::uniform_real_distribution<double>(0.0, 299.9)(rng);
        }
      }
      cars.push_back({i, y, u});
      points.push_back({i, y, u});
    }
    const double in = flow(rng), out = flow(rng);
    const std::vector<double> expected = oracle::straightline_step(rho, cars, road, in, out);
    stepper.step(rho, points, {in, out}, got, &detail);
    with_host += std::any_of(detail.owner.begin(), detail.owner.end(), [](const auto& o) { return o.has_value(); });
    for (int j = 0; j < 7; ++j) worst = std::max(worst, std::abs(got[j] - expected[j]));
  }
  const double elapsed = seconds_since(t0);
  report(1, "dynamics fidelity", worst <= 1e-12 && elapsed < 10.0 && with_host > 100,
         fmt::format("max |diff| = {:.3g} over 1000 states ({} with an active bottleneck), {:.3f} s", worst,
                     with_host, elapsed));
}

void c2_conservation(const ScenarioConfig& base, const RunResult& controlled) {
  const ScenarioConfig s = with_controller(base, ControllerKind::none);
  std::vector<std::map<int, double>> idle(static_cast<std::size_t>(s.total_steps));
  const FluxTrace a = replay(s, idle, nullptr);

  // every CAV held at 10 m/s so that moving bottlenecks actually form
  std::vector<std::map<int, double>> slow;
  {
    Plant plant(s);
    while (!plant.finished()) {
      plant.spawn_and_retire();
      std::map<int, double> cmd;
      for (const CavState& c : plant.state().cavs) cmd[c.id] = 10.0;
      slow.push_back(cmd);
      plant.advance(cmd);
    }
  }
  const FluxTrace b = replay(s, slow, nullptr);

  std::vector<std::map<int, double>> closed;
  for (const StepReport& r : controlled.reports) closed.push_back(r.actions);
  const FluxTrace c = replay(base, closed, &controlled.densities);

  const double ra = oracle::conservation_audit(a.rho, a.in, a.out, s.dx, s.dt);
  const double rb = oracle::conservation_audit(b.rho, b.in, b.out, s.dx, s.dt);
  const double rc = oracle::conservation_audit(c.rho, c.in, c.out, s.dx, s.dt);
  const double worst = std::max({ra, rb, rc});
  report(2, "conservation", worst <= 1e-9 && c.replay_matches && s.flux_mode == FluxMode::consistent,
         fmt::format("max relative residual {:.3g} (no control {:.3g}, CAVs at 10 m/s {:.3g}, rollout-truncated {:.3g})",
                     worst, ra, rb, rc));
}

void c3_closed_forms() {
  double worst = 0.0;
  int ordering_violations = 0;
  for (int W : {2, 3, 4}) {
    const FundamentalDiagram fd = FundamentalDiagram::create(33.33, 0.12, W);
    const double V = fd.free_speed, R = fd.jam_density;
    for (int i = 0; i < 100; ++i) {
      const double u = V * i / 100.0;
      const Reconstruction rc = reconstruct_densities(u, fd);
      for (double x : {rc.rho_hat, rc.rho_check}) {
        const double residual =
            x * x - R * (V - u) / V * x + fd.alpha() * R * R * (V - u) * (V - u) / (4.0 * V * V);
        worst = std::max(worst, std::abs(residual));
      }
    }
    for (int i = 1; i <= 100; ++i) {
      const double rho = R * i / 100.0;
      const GammaWindow w = gamma_bounds(rho, fd);
      if (!(w.gamma1 <= w.gamma2 && w.gamma2 < equilibrium_speed(rho, fd))) ++ordering_violations;
    }
  }
  report(3, "closed forms", worst <= 1e-10 && ordering_violations == 0,
         fmt::format("max quadratic residual {:.3g}; {} window-ordering violations over W = 2, 3, 4", worst,
                     ordering_violations));
}

void c4_oracle_optimality() {
  const ScenarioConfig s = with_controller(load_scenario(scenario_path("toy.json")), ControllerKind::rollout_truncated);
  Plant plant(s);
  plant.spawn_and_retire();
  const Snapshot snap = snapshot_of(plant.state());
  const int n = s.planner.horizon;
  const StepReport central = centralized_plan(snap, s, n);
  const oracle::JointBest best = oracle::exhaustive_joint(scene_of(snap, s), s.planner.action_set(), n);
  bool same_plans = central.plans.size() == best.plans.size();
  for (std::size_t i = 0; same_plans && i < snap.cavs.size(); ++i) {
    same_plans = central.plans.at(snap.cavs[i].id) == best.plans[i];
  }
  const bool same_value = central.joint_j.back() == best.value;

  const Weights w = make_weights(s.fd, s.grid(), s.planner);
  Coordinator coord(s, w);
  const StepReport rollout = coord.step(snap);
  const double gap = (rollout.joint_j.back() - best.value) / best.value;
  report(4, "oracle optimality", same_plans && same_value && gap <= 0.05,
         fmt::format("{} CAVs, {} cells, N={}, S={}: centralized J={} vs exhaustive J={} ({}); rollout-truncated J={} "
                     "gap {:.4f}%",
                     snap.cavs.size(), s.num_cells(), n, s.planner.speed_levels, central.joint_j.back(), best.value,
                     same_plans ? "same plans" : "different plans", rollout.joint_j.back(), 100.0 * gap));
}

void c5_agent_by_agent(const ScenarioConfig& base) {
  ScenarioConfig s = base;
  s.arrivals = {};
  const Weights w = make_weights(s.fd, s.grid(), s.planner);
  int violations = 0;
  double worst = 0.0;
  for (int seed = 1; seed <= 50; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    std::uniform_real_distribution<double> dens(0.04, 0.11), pos(0.0, 2000.0);
    std::vector<double> rho(7);
    for (double& r : rho) r = dens(rng);
    std::vector<double> ys(2 + rng() % 3);
    for (double& y : ys) y = pos(rng);
    std::sort(ys.begin(), ys.end());
    const Snapshot snap = make_snapshot(static_cast<int>(rng() % 500), rho, ys);
    Coordinator seq(with_controller(s, ControllerKind::rollout_full), w);
    Coordinator par(with_controller(s, ControllerKind::dmpc_parallel), w);
    const double js = seq.step(snap).joint_j.back();
    const double jp = par.step(snap).joint_j.back();
    if (js > jp) {
      ++violations;
      worst = std::max(worst, js - jp);
    }
  }
  report(5, "agent-by-agent vs parallel", violations == 0,
         fmt::format("{} of 50 congested snapshots with sequential J above parallel J (worst excess {:.3g} veh*s)",
                     violations, worst));
}

void c6_iterations(const RunResult& r) {
  int steps = 0, increases = 0;
  double worst = 0.0;
  for (const StepReport& rep : r.reports) {
    if (rep.joint_j.size() < 2) continue;
    ++steps;
    for (std::size_t p = 1; p < rep.joint_j.size(); ++p) {
      if (rep.joint_j[p] > rep.joint_j[p - 1]) {
        ++increases;
        worst = std::max(worst, rep.joint_j[p] - rep.joint_j[p - 1]);
      }
    }
  }
  report(6, "iterations never increase J", increases == 0 && steps > 0,
         fmt::format("{} increases over {} coordination steps (largest {:.3g} veh*s)", increases, steps, worst));
}

void c7_nominal_lyapunov() {
  const ScenarioConfig s = load_scenario(scenario_path("nominal.json"));
  const RunResult r = run(s);
  // accepted V of each CAV, step by step, while the CAV set stays the same
  std::map<int, std::vector<double>> v;
  std::vector<int> first_ids;
  int frozen_steps = 0;
  for (const StepReport& rep : r.reports) {
    std::vector<int> ids;
    for (const auto& [id, plan] : rep.plans) ids.push_back(id);
    if (frozen_steps == 0) first_ids = ids;
    if (ids != first_ids || ids.empty()) break;
    ++frozen_steps;
    for (int id : ids) {
      for (auto it = rep.solves.rbegin(); it != rep.solves.rend(); ++it) {
        if (it->cav_id == id && it->accepted && it->iteration > 0) {
          v[id].push_back(it->v);
          break;
        }
      }
    }
  }
  int increases = 0;
  double worst = 0.0;
  for (const auto& [id, seq] : v) {
    for (std::size_t k = 1; k < seq.size(); ++k) {
      if (seq[k] > seq[k - 1] + 1e-9) {
        ++increases;
        worst = std::max(worst, seq[k] - seq[k - 1]);
      }
    }
  }
  report(7, "nominal Lyapunov decrease", increases == 0 && frozen_steps >= 50 && s.planner.lambda == 0.6,
         fmt::format("{} CAVs over {} frozen steps, {} increases beyond 1e-9 (largest {:.3g})", first_ids.size(),
                     frozen_steps, increases, worst));
}

void c8_bounds(const RunResult& r) {
  std::int64_t checked = 0, violations = 0;
  for (const StepReport& rep : r.reports) {
    for (const SolveRecord& s : rep.solves) {
      if (!s.accepted) continue;
      ++checked;
      const Bounds& b = s.bounds;
      if (!(b.j_lb <= s.j && s.j <= b.j_ub && b.v_lb <= s.v && s.v <= b.v_ub)) ++violations;
    }
  }
  report(8, "objective bounds", violations == 0 && checked > 0,
         fmt::format("{} violations over {} accepted plans", violations, checked));
}

void c9_direction(const RunResult& none, const RunResult& dmpc, const RunResult& rollout) {
  const double jn = none.metrics.total_vehicle_time, jd = dmpc.metrics.total_vehicle_time,
               jr = rollout.metrics.total_vehicle_time;
  const double reduction = (jn - jr) / jn;
  report(9, "rollout beats no control", jr < jn && jr <= jd,
         fmt::format("J_t none={:.3f} dmpc={:.3f} rollout-truncated={:.3f} veh*s; reduction vs none {:.4f}%", jn, jd,
                     jr, 100.0 * reduction));
}

void c10_complexity(const RunResult& truncated, const RunResult& full, const RunResult& toy_truncated,
                    const RunResult& toy_full, int n) {
  auto any_short = [](const RunResult& r, int horizon_cap) {
    for (const StepReport& rep : r.reports) {
      for (const SolveRecord& s : rep.solves) {
        if (s.iteration > 0 && (s.m_j < std::min(horizon_cap, rep.horizon) || s.m_v < std::min(horizon_cap, rep.horizon)))
          return true;
      }
    }
    return false;
  };
  const std::int64_t et = truncated.metrics.eval_count, ef = full.metrics.eval_count;
  const bool strict = any_short(truncated, n) ? et < ef : et <= ef;
  const std::int64_t tt = toy_truncated.metrics.eval_count, tf = toy_full.metrics.eval_count;
  const bool toy_ok = any_short(toy_truncated, 2) ? tt < tf : tt <= tf;
  const double reduction = 1.0 - static_cast<double>(et) / static_cast<double>(ef);
  report(10, "truncation saves evaluations", strict && toy_ok && reduction >= 0.05,
         fmt::format("default: {} vs {} evaluations ({:.2f}% fewer); toy: {} vs {}", et, ef, 100.0 * reduction, tt,
                     tf));
}

void c11_lyapunov(const ScenarioConfig& s) {
  const Grid g = s.grid();
  const PlannerConfig& pc = s.planner;
  const LinearizedSystem lin = linearize(s.fd, g, pc.q, pc.r);
  const Weights w = make_weights(s.fd, g, pc);
  const double residual = lyapunov_residual(lin.Z, w.H, w.q, w.r, lin.K, w.delta_q);

  // Jacobian of the independent straight-line step at the empty road
  const oracle::Road road = road_of(s);
  const auto g_rho = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    const std::vector<double> rho(x.data(), x.data() + x.size());
    const std::vector<double> next = oracle::straightline_raw(rho, {}, road, 0.0, s.fd.capacity());
    return Eigen::Map<const Eigen::VectorXd>(next.data(), static_cast<Eigen::Index>(next.size()));
  };
  const Eigen::MatrixXd fd_psi = oracle::fd_jacobian(g_rho, Eigen::VectorXd::Zero(g.num_cells()), 1e-6);
  const double rel_psi = (lin.psi - fd_psi).cwiseAbs().maxCoeff() / fd_psi.cwiseAbs().maxCoeff();

  const auto g_u = [&](const Eigen::VectorXd& u) -> Eigen::VectorXd {
    std::vector<oracle::Car> cars;
    for (Eigen::Index j = 0; j < u.size(); ++j) cars.push_back({static_cast<int>(j), (j + 0.5) * s.dx, u[j]});
    const std::vector<double> next =
        oracle::straightline_raw(std::vector<double>(g.num_cells(), 0.0), cars, road, 0.0, s.fd.capacity());
    return Eigen::Map<const Eigen::VectorXd>(next.data(), static_cast<Eigen::Index>(next.size()));
  };
  const Eigen::VectorXd u0 = Eigen::VectorXd::Constant(g.num_cells(), 0.5 * (pc.u_min + pc.u_max));
  const Eigen::MatrixXd fd_delta = oracle::fd_jacobian(g_u, u0, 1e-6);
  const double abs_delta = (lin.delta - fd_delta).cwiseAbs().maxCoeff();
  const double rel_delta = abs_delta / std::max(1.0, fd_delta.cwiseAbs().maxCoeff());

  report(11, "Lyapunov machinery", residual <= 1e-8 && rel_psi <= 1e-6 && rel_delta <= 1e-6,
         fmt::format("residual {:.3g}; Jacobian relative error {:.3g} (state), {:.3g} (command); rho(Z) = {:.4f}",
                     residual, rel_psi, rel_delta, lin.spectral_radius_z));
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void c12_determinism(const ScenarioConfig& s, const RunResult& first) {
  const auto root = std::filesystem::temp_directory_path() / "cavflow_acceptance";
  std::filesystem::remove_all(root);
  write_results(first, s, root / "a");
  write_results(run(s), s, root / "b");
  std::vector<std::string> differ;
  for (const char* f : {"summary.csv", "trace.csv", "steps.csv", "scenario.json"}) {
    if (slurp(root / "a" / f) != slurp(root / "b" / f)) differ.push_back(f);
  }
  const std::size_t trace_bytes = slurp(root / "a" / "trace.csv").size();
  std::filesystem::remove_all(root);
  report(12, "determinism", differ.empty(),
         differ.empty() ? fmt::format("two {} runs byte-identical ({} trace bytes)", to_string(s.planner.controller),
                                      trace_bytes)
                        : fmt::format("differing files: {}", fmt::join(differ, ", ")));
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  const ScenarioConfig base = load_scenario(scenario_path("default.json"));
  const ScenarioConfig toy = load_scenario(scenario_path("toy.json"));

  c1_dynamics();
  c3_closed_forms();
  c4_oracle_optimality();
  c11_lyapunov(base);
  c7_nominal_lyapunov();
  c5_agent_by_agent(base);

  const RunResult truncated = run(with_controller(base, ControllerKind::rollout_truncated));
  const RunResult full = run(with_controller(base, ControllerKind::rollout_full));
  const RunResult dmpc = run(with_controller(base, ControllerKind::dmpc_parallel));
  const RunResult none = run(with_controller(base, ControllerKind::none));
  const RunResult toy_truncated = run(with_controller(toy, ControllerKind::rollout_truncated));
  const RunResult toy_full = run(with_controller(toy, ControllerKind::rollout_full));

  c2_conservation(base, truncated);
  c6_iterations(truncated);
  c8_bounds(truncated);
  c9_direction(none, dmpc, truncated);
  c10_complexity(truncated, full, toy_truncated, toy_full, base.planner.horizon);
  c12_determinism(with_controller(base, ControllerKind::rollout_truncated), truncated);

  for (const auto& [id, line] : lines) fmt::print("{}\n", line);
  fmt::print("{} of 12 criteria failed ({:.1f} s)\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
