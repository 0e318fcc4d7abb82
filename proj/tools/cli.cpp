#include "cli.hpp"

#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "cavflow/errors.hpp"
#include "cavflow/results.hpp"
#include "cavflow/rollout.hpp"
#include "cavflow/scenario.hpp"

namespace cavflow {

namespace {

struct Options {
  std::string scenario;
  std::string controller = "rollout-truncated";
  std::string out = "results";
  std::optional<std::uint64_t> seed;
  bool paper_literal = false;
};

std::string describe(const RunResult& r) {
  const auto opt = [](const std::optional<double>& v) { return v ? fmt::format("{:.3f}", *v) : std::string("n/a"); };
  return fmt::format("{:<18} J_t={:.1f} veh*s  travel_time={} s  speed={} m/s  evals={}", to_string(r.controller),
                     r.metrics.total_vehicle_time, opt(r.summary.avg_travel_time), opt(r.summary.avg_speed),
                     r.metrics.eval_count);
}

ScenarioConfig prepare(const Options& o) {
  ScenarioConfig sc = load_scenario(o.scenario);
  if (o.seed) sc.seed = *o.seed;
  if (o.paper_literal) sc.flux_mode = FluxMode::paper_literal;
  return sc;
}

int simulate(const Options& o, std::ostream& out) {
  ScenarioConfig sc = prepare(o);
  const auto kind = parse_controller(o.controller);
  if (!kind) throw CLI::ValidationError("--controller", "unknown controller " + o.controller);
  sc.planner.controller = *kind;
  const RunResult r = run(sc);
  write_results(r, sc, o.out);
  out << describe(r) << "\n";
  return kOk;
}

int compare(const Options& o, std::ostream& out, std::ostream& err) {
  const ScenarioConfig base = prepare(o);
  std::vector<RunResult> results;
  for (ControllerKind kind : {ControllerKind::none, ControllerKind::centralized, ControllerKind::dmpc_parallel,
                              ControllerKind::rollout_full, ControllerKind::rollout_truncated}) {
    ScenarioConfig sc = base;
    sc.planner.controller = kind;
    try {
      results.push_back(run(sc));
    } catch (const BudgetExceeded& e) {
      err << fmt::format("skipping {}: {}\n", to_string(kind), e.what());
      continue;
    }
    write_results(results.back(), sc, std::filesystem::path(o.out) / to_string(kind));
    out << describe(results.back()) << "\n";
  }
  std::vector<const RunResult*> rows;
  for (const RunResult& r : results) rows.push_back(&r);
  write_summary(rows, std::filesystem::path(o.out) / "summary.csv");
  write_timing(rows, std::filesystem::path(o.out) / "timing.csv");
  return kOk;
}

int validate(const Options& o, std::ostream& out) {
  const ScenarioConfig sc = prepare(o);
  out << fmt::format("{}: ok ({} cells of {} m, {} steps, controller {})\n", sc.name, sc.num_cells(), sc.dx,
                     sc.total_steps, to_string(sc.planner.controller));
  return kOk;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Lane-drop traffic simulator with coordinated CAV speed control"};
  app.require_subcommand(1);
  Options o;

  auto* sim = app.add_subcommand("simulate", "Run one controller and write CSV results");
  sim->add_option("--scenario", o.scenario, "Scenario JSON file")->required();
  sim->add_option("--controller", o.controller, "none | centralized | dmpc | rollout | rollout-truncated")
      ->check(CLI::IsMember({"none", "centralized", "dmpc", "rollout", "rollout-truncated"}));
  sim->add_option("--out", o.out, "Output directory");
  sim->add_option("--seed", o.seed, "Override the scenario seed");
  sim->add_flag("--paper-literal-flux", o.paper_literal, "Apply reconstructed fluxes to the host cell only");

  auto* cmp = app.add_subcommand("compare", "Run every controller that fits its budget and write a joint summary");
  cmp->add_option("--scenario", o.scenario, "Scenario JSON file")->required();
  cmp->add_option("--out", o.out, "Output directory");
  cmp->add_option("--seed", o.seed, "Override the scenario seed");
  cmp->add_flag("--paper-literal-flux", o.paper_literal, "Apply reconstructed fluxes to the host cell only");

  auto* val = app.add_subcommand("validate", "Check a scenario file");
  val->add_option("--scenario", o.scenario, "Scenario JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o_msg, e_msg;
    const int code = app.exit(e, o_msg, e_msg);
    out << o_msg.str();
    err << e_msg.str();
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (sim->parsed()) return simulate(o, out);
    if (cmp->parsed()) return compare(o, out, err);
    return validate(o, out);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kConfig;
  } catch (const BudgetExceeded& e) {
    err << "enumeration budget exceeded: " << e.what() << "\n";
    return kRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
}

}  // namespace cavflow
