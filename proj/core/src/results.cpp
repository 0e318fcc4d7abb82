#include "cavflow/results.hpp"

#include <fstream>
#include <optional>
#include <stdexcept>

#include <fmt/format.h>

#include "cavflow/scenario.hpp"

namespace cavflow {

namespace {

constexpr const char* kEol = "\r\n";

std::string num(double v) { return fmt::format("{}", v); }
std::string opt(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

void write_file(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", file.string()));
  out << text;
  if (!out) throw std::runtime_error(fmt::format("failed while writing {}", file.string()));
}

}  // namespace

std::string summary_csv(const std::vector<const RunResult*>& results) {
  std::string s = fmt::format("controller,total_vehicle_time_veh_s,avg_travel_time_s,avg_speed_mps,eval_count{}", kEol);
  for (const RunResult* r : results) {
    s += fmt::format("{},{},{},{},{}{}", to_string(r->controller), num(r->metrics.total_vehicle_time),
                     opt(r->summary.avg_travel_time), opt(r->summary.avg_speed), r->metrics.eval_count, kEol);
  }
  return s;
}

std::string trace_csv(const RunResult& result, const Grid& grid) {
  std::string s = fmt::format("k,kind,index,density_veh_m,position_m,command_mps{}", kEol);
  for (std::size_t k = 0; k < result.densities.size(); ++k) {
    const DensityField& rho = result.densities[k];
    for (std::size_t j = 0; j < rho.size(); ++j) {
      s += fmt::format("{},cell,{},{},{},{}", k, j, num(rho[j]), num((static_cast<double>(j) + 0.5) * grid.dx()), kEol);
    }
    for (const TraceCav& c : result.cavs[k]) {
      s += fmt::format("{},cav,{},,{},{}{}", k, c.id, num(c.y), num(c.command), kEol);
    }
  }
  return s;
}

std::string steps_csv(const RunResult& result) {
  std::string s = fmt::format(
      "k,iteration,rank,cav_id,accepted,m_j,m_v,j_veh_s,v,j_stability_veh_s,v_stability,j_lb,j_ub,v_lb,v_ub,eta,evals,"
      "fallback,beam,delta,iterations_used{}",
      kEol);
  for (const StepReport& rep : result.reports) {
    for (const SolveRecord& r : rep.solves) {
      const std::string delta = r.iteration >= 1 && static_cast<std::size_t>(r.iteration) <= rep.delta_history.size()
                                    ? num(rep.delta_history[r.iteration - 1])
                                    : std::string();
      s += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}{}", rep.k, r.iteration, r.rank,
                       r.cav_id, r.accepted ? 1 : 0, r.m_j, r.m_v, num(r.j), num(r.v), num(r.j_stability),
                       num(r.v_stability), num(r.bounds.j_lb), num(r.bounds.j_ub), num(r.bounds.v_lb),
                       num(r.bounds.v_ub), num(r.eta), r.evals, r.fallback ? 1 : 0, r.beam ? 1 : 0, delta,
                       rep.iterations, kEol);
    }
  }
  return s;
}

void write_summary(const std::vector<const RunResult*>& results, const std::filesystem::path& file) {
  write_file(file, summary_csv(results));
}

void write_timing(const std::vector<const RunResult*>& results, const std::filesystem::path& file) {
  std::string s = fmt::format("controller,wall_seconds{}", kEol);
  for (const RunResult* r : results) s += fmt::format("{},{:.6f}{}", to_string(r->controller), r->wall_seconds, kEol);
  write_file(file, s);
}

void write_results(const RunResult& result, const ScenarioConfig& scenario, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error(fmt::format("cannot create {}: {}", out_dir.string(), ec.message()));
  write_summary({&result}, out_dir / "summary.csv");
  write_timing({&result}, out_dir / "timing.csv");
  write_file(out_dir / "trace.csv", trace_csv(result, scenario.grid()));
  write_file(out_dir / "steps.csv", steps_csv(result));
  write_file(out_dir / "scenario.json", scenario_to_json(scenario));
}

}  // namespace cavflow
