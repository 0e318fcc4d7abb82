#include "cavflow/scenario.hpp"

#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "cavflow/errors.hpp"

namespace cavflow {

namespace {

using nlohmann::json;

class Reader {
 public:
  Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(fmt::format("{}: expected an object", where()));
  }

  std::string where(const std::string& key = "") const {
    if (key.empty()) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return obj_.contains(key) && !obj_.at(key).is_null();
  }
  const json& at(const std::string& key) { return obj_.at(key); }

  void number(const std::string& key, double& out) {
    if (!has(key)) return;
    const json& v = at(key);
    if (!v.is_number()) throw ConfigError(fmt::format("{}: expected a number", where(key)));
    out = v.get<double>();
  }
  template <class Int>
  void integer(const std::string& key, Int& out) {
    if (!has(key)) return;
    const json& v = at(key);
    if (v.is_number_integer()) {
      out = static_cast<Int>(v.get<std::int64_t>());
    } else if (v.is_number_float() && v.get<double>() == static_cast<double>(static_cast<std::int64_t>(v.get<double>()))) {
      out = static_cast<Int>(v.get<double>());
    } else {
      throw ConfigError(fmt::format("{}: expected an integer", where(key)));
    }
  }
  void boolean(const std::string& key, bool& out) {
    if (!has(key)) return;
    if (!at(key).is_boolean()) throw ConfigError(fmt::format("{}: expected true or false", where(key)));
    out = at(key).get<bool>();
  }
  void string(const std::string& key, std::string& out) {
    if (!has(key)) return;
    if (!at(key).is_string()) throw ConfigError(fmt::format("{}: expected a string", where(key)));
    out = at(key).get<std::string>();
  }

  void finish() const {
    for (const auto& item : obj_.items()) {
      if (!seen_.contains(item.key())) throw ConfigError(fmt::format("{}: unknown field", where(item.key())));
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

// A flow under `<base>_veh_h` or `<base>_veh_s`: a constant, or a list of
// {from_step, to_step, flow} segments in the unit of the key.
std::optional<Profile> read_profile(Reader& rd, const std::string& base, int total_steps) {
  const bool in_h = rd.has(base + "_veh_h");
  const bool in_s = rd.has(base + "_veh_s");
  if (!in_h && !in_s) return std::nullopt;
  if (in_h && in_s) throw ConfigError(fmt::format("{}: give the flow in one unit only", rd.where(base + "_veh_s")));
  const std::string key = base + (in_h ? "_veh_h" : "_veh_s");
  const double scale = in_h ? 1.0 / 3600.0 : 1.0;
  const json& v = rd.at(key);
  const std::string path = rd.where(key);
  if (v.is_number()) return Profile::constant(v.get<double>() * scale, total_steps);
  if (!v.is_array()) throw ConfigError(fmt::format("{}: expected a number or a list of segments", path));
  std::vector<Profile::Segment> segs;
  for (std::size_t i = 0; i < v.size(); ++i) {
    Reader s(v[i], fmt::format("{}[{}]", path, i));
    Profile::Segment seg;
    s.integer("from_step", seg.from_step);
    s.integer("to_step", seg.to_step);
    s.number("flow", seg.value);
    s.finish();
    seg.value *= scale;
    segs.push_back(seg);
  }
  try {
    return Profile::from_segments(std::move(segs), total_steps);
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}", path, e.what()));
  }
}

void read_planner(Reader rd, PlannerConfig& pc) {
  rd.integer("horizon_steps", pc.horizon);
  rd.integer("min_horizon_steps", pc.min_horizon);
  rd.integer("speed_levels", pc.speed_levels);
  rd.number("u_min_mps", pc.u_min);
  rd.number("u_max_mps", pc.u_max);
  rd.number("lambda", pc.lambda);
  rd.number("epsilon_veh_s", pc.epsilon);
  rd.integer("max_iterations", pc.max_iterations);
  rd.number("q", pc.q);
  rd.number("r", pc.r);
  rd.number("delta_q", pc.delta_q);
  if (rd.has("terminal_epsilon")) rd.number("terminal_epsilon", pc.terminal_epsilon);
  rd.integer("enumeration_budget", pc.enumeration_budget);
  rd.integer("beam_width", pc.beam_width);
  rd.integer("centralized_budget", pc.centralized_budget);
  std::string ordering, controller;
  rd.string("ordering", ordering);
  if (!ordering.empty()) {
    if (ordering == "fixed") {
      pc.ordering = Ordering::fixed;
    } else if (ordering == "optimized") {
      pc.ordering = Ordering::optimized;
    } else {
      throw ConfigError(fmt::format("{}: expected \"fixed\" or \"optimized\"", rd.where("ordering")));
    }
  }
  rd.boolean("truncation", pc.truncation);
  rd.string("controller", controller);
  if (!controller.empty()) {
    auto kind = parse_controller(controller);
    if (!kind) throw ConfigError(fmt::format("{}: unknown controller \"{}\"", rd.where("controller"), controller));
    pc.controller = *kind;
  }
  rd.finish();
}

void read_cavs(Reader rd, ArrivalConfig& ac) {
  ac.penetration.reset();
  if (rd.has("penetration")) {
    double p = 0.0;
    rd.number("penetration", p);
    ac.penetration = p;
  }
  std::string mode;
  rd.string("mode", mode);
  if (mode == "bernoulli") {
    ac.mode = ArrivalMode::bernoulli;
  } else if (mode.empty() || mode == "thinning") {
    ac.mode = ArrivalMode::thinning;
  } else {
    throw ConfigError(fmt::format("{}: expected \"thinning\" or \"bernoulli\"", rd.where("mode")));
  }
  if (rd.has("schedule")) {
    const json& list = rd.at("schedule");
    if (!list.is_array()) throw ConfigError(fmt::format("{}: expected a list", rd.where("schedule")));
    for (std::size_t i = 0; i < list.size(); ++i) {
      Reader e(list[i], fmt::format("{}[{}]", rd.where("schedule"), i));
      ArrivalEvent ev;
      e.integer("step", ev.step);
      e.number("position_m", ev.position_m);
      e.number("command_mps", ev.initial_command_mps);
      e.finish();
      ac.schedule.push_back(ev);
    }
  }
  rd.finish();
}

json profile_json(const Profile& p) {
  json out = json::array();
  for (const Profile::Segment& s : p.segments()) {
    out.push_back({{"from_step", s.from_step}, {"to_step", s.to_step}, {"flow", s.value}});
  }
  return out;
}

}  // namespace

ScenarioConfig parse_scenario(const std::string& text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text.empty() ? std::string("{}") : text);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("{}: not valid JSON: {}", origin, e.what()));
  }
  ScenarioConfig sc = default_scenario();
  const double default_in = sc.inflow.at(0);
  try {
    Reader rd(doc, "");
    rd.string("name", sc.name);
    if (rd.has("fundamental_diagram")) {
      Reader f(rd.at("fundamental_diagram"), "fundamental_diagram");
      f.number("free_speed_mps", sc.fd.free_speed);
      f.number("jam_density_veh_m", sc.fd.jam_density);
      f.integer("lanes_upstream", sc.fd.lanes_upstream);
      f.finish();
    }
    if (rd.has("grid")) {
      Reader g(rd.at("grid"), "grid");
      g.number("dx_m", sc.dx);
      g.number("dt_s", sc.dt);
      g.finish();
    }
    if (rd.has("zone")) {
      Reader z(rd.at("zone"), "zone");
      z.number("coordination_length_m", sc.coordination_length);
      z.number("free_drive_length_m", sc.free_drive_length);
      z.finish();
    }
    rd.integer("total_steps", sc.total_steps);
    sc.inflow = read_profile(rd, "inflow", sc.total_steps).value_or(Profile::constant(default_in, sc.total_steps));
    sc.outflow_supply =
        read_profile(rd, "outflow_supply", sc.total_steps).value_or(Profile::constant(merge_supply(sc.fd), sc.total_steps));
    if (rd.has("initial_density_veh_m")) {
      const json& v = rd.at("initial_density_veh_m");
      if (!v.is_array()) throw ConfigError("initial_density_veh_m: expected a list of numbers");
      sc.initial_density.clear();
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number()) throw ConfigError(fmt::format("initial_density_veh_m[{}]: expected a number", i));
        sc.initial_density.push_back(v[i].get<double>());
      }
    }
    if (rd.has("cavs")) read_cavs(Reader(rd.at("cavs"), "cavs"), sc.arrivals);
    rd.integer("seed", sc.seed);
    std::string mode;
    rd.string("flux_mode", mode);
    if (mode == "paper_literal") {
      sc.flux_mode = FluxMode::paper_literal;
    } else if (mode.empty() || mode == "consistent") {
      sc.flux_mode = FluxMode::consistent;
    } else {
      throw ConfigError("flux_mode: expected \"consistent\" or \"paper_literal\"");
    }
    if (rd.has("planner")) read_planner(Reader(rd.at("planner"), "planner"), sc.planner);
    rd.finish();
    sc.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}", origin, e.what()));
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", origin, e.what()));
  }
  return sc;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot open scenario file {}", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path.string());
}

std::string scenario_to_json(const ScenarioConfig& sc) {
  const PlannerConfig& pc = sc.planner;
  json cavs = {{"mode", sc.arrivals.mode == ArrivalMode::bernoulli ? "bernoulli" : "thinning"}};
  cavs["penetration"] = sc.arrivals.penetration ? json(*sc.arrivals.penetration) : json(nullptr);
  json schedule = json::array();
  for (const ArrivalEvent& a : sc.arrivals.schedule) {
    schedule.push_back({{"step", a.step}, {"position_m", a.position_m}, {"command_mps", a.initial_command_mps}});
  }
  cavs["schedule"] = schedule;

  json planner = {
      {"horizon_steps", pc.horizon},
      {"min_horizon_steps", pc.min_horizon},
      {"speed_levels", pc.speed_levels},
      {"u_min_mps", pc.u_min},
      {"u_max_mps", pc.u_max},
      {"lambda", pc.lambda},
      {"epsilon_veh_s", pc.epsilon},
      {"max_iterations", pc.max_iterations},
      {"q", pc.q},
      {"r", pc.r},
      {"delta_q", pc.delta_q},
      {"terminal_epsilon", std::isfinite(pc.terminal_epsilon) ? json(pc.terminal_epsilon) : json(nullptr)},
      {"enumeration_budget", pc.enumeration_budget},
      {"beam_width", pc.beam_width},
      {"centralized_budget", pc.centralized_budget},
      {"ordering", pc.ordering == Ordering::fixed ? "fixed" : "optimized"},
      {"truncation", pc.truncation},
      {"controller", to_string(pc.controller)},
  };
  json doc = {
      {"name", sc.name},
      {"fundamental_diagram",
       {{"free_speed_mps", sc.fd.free_speed}, {"jam_density_veh_m", sc.fd.jam_density}, {"lanes_upstream", sc.fd.lanes_upstream}}},
      {"grid", {{"dx_m", sc.dx}, {"dt_s", sc.dt}}},
      {"zone", {{"coordination_length_m", sc.coordination_length}, {"free_drive_length_m", sc.free_drive_length}}},
      {"total_steps", sc.total_steps},
      {"inflow_veh_s", profile_json(sc.inflow)},
      {"outflow_supply_veh_s", profile_json(sc.outflow_supply)},
      {"cavs", cavs},
      {"seed", sc.seed},
      {"flux_mode", sc.flux_mode == FluxMode::paper_literal ? "paper_literal" : "consistent"},
      {"planner", planner},
  };
  if (!sc.initial_density.empty()) doc["initial_density_veh_m"] = sc.initial_density;
  return doc.dump(2) + "\n";
}

}  // namespace cavflow
