#include "cavflow/config.hpp"

#include <cmath>

#include <fmt/format.h>

#include "cavflow/errors.hpp"

namespace cavflow {

Profile Profile::constant(double value, int total_steps) {
  return from_segments({{0, std::max(total_steps, 1), value}}, total_steps);
}

Profile Profile::from_segments(std::vector<Segment> segments, int total_steps) {
  int expected = 0;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const Segment& s = segments[i];
    if (s.from_step != expected) {
      throw ConfigError(fmt::format("segment {} starts at step {}, expected {}", i, s.from_step, expected));
    }
    if (s.to_step <= s.from_step) throw ConfigError(fmt::format("segment {} is empty", i));
    if (!(s.value >= 0.0) || !std::isfinite(s.value)) {
      throw ConfigError(fmt::format("segment {} has invalid flow {}", i, s.value));
    }
    expected = s.to_step;
  }
  if (expected < total_steps) throw ConfigError(fmt::format("profile leaves steps [{}, {}) uncovered", expected, total_steps));
  Profile p;
  p.segments_ = std::move(segments);
  return p;
}

double Profile::at(int k) const noexcept {
  if (segments_.empty()) return 0.0;
  for (const Segment& s : segments_) {
    if (k < s.to_step) return s.value;
  }
  return segments_.back().value;
}

void PlannerConfig::validate(const FundamentalDiagram& fd) const {
  if (horizon < 1) throw ConfigError(fmt::format("planner.horizon_steps must be >= 1, got {}", horizon));
  if (min_horizon < 1 || min_horizon > horizon) {
    throw ConfigError(fmt::format("planner.min_horizon_steps must lie in [1, {}], got {}", horizon, min_horizon));
  }
  if (speed_levels < 1) throw ConfigError("planner.speed_levels must be >= 1");
  if (!(u_min > 0.0) || !(u_min <= u_max) || !(u_max <= fd.free_speed)) {
    throw ConfigError(fmt::format("planner speed bounds must satisfy 0 < u_min <= u_max <= V, got [{}, {}]", u_min, u_max));
  }
  if (!(lambda >= 0.0 && lambda < 1.0)) throw ConfigError(fmt::format("planner.lambda must lie in [0, 1), got {}", lambda));
  if (!(epsilon > 0.0)) throw ConfigError("planner.epsilon_veh_s must be positive");
  if (max_iterations < 1) throw ConfigError("planner.max_iterations must be >= 1");
  if (!(q > 0.0) || !(r > 0.0) || !(delta_q > 0.0)) throw ConfigError("planner weights q, r, delta_q must be positive");
  if (!(terminal_epsilon > 0.0)) throw ConfigError("planner.terminal_epsilon must be positive");
  if (enumeration_budget < 1 || centralized_budget < 1) throw ConfigError("planner budgets must be >= 1");
  if (beam_width < 0) throw ConfigError("planner.beam_width must be >= 0");
}

std::vector<double> PlannerConfig::action_set() const {
  std::vector<double> out{0.0};
  if (speed_levels == 1) {
    out.push_back(u_min);
    return out;
  }
  const double step = (u_max - u_min) / (speed_levels - 1);
  for (int s = 0; s < speed_levels; ++s) out.push_back(s + 1 == speed_levels ? u_max : u_min + s * step);
  return out;
}

DensityField ScenarioConfig::initial_field() const {
  if (!initial_density.empty()) return DensityField(initial_density);
  const double f0 = inflow.at(0);
  return DensityField(static_cast<std::size_t>(num_cells()), demand_equivalent_density(f0, fd));
}

void ScenarioConfig::validate() const {
  FundamentalDiagram::create(fd.free_speed, fd.jam_density, fd.lanes_upstream);
  if (!(dx > 0.0)) throw ConfigError("grid.dx_m must be positive");
  if (!(coordination_length > 0.0)) throw ConfigError("zone.coordination_length_m must be positive");
  const double cells = coordination_length / dx;
  if (std::abs(cells - std::round(cells)) > 1e-9 * std::max(1.0, cells)) {
    throw ConfigError(fmt::format("zone.coordination_length_m ({}) is not a multiple of grid.dx_m ({})",
                                  coordination_length, dx));
  }
  grid();
  if (!(free_drive_length >= 0.0)) throw ConfigError("zone.free_drive_length_m must be nonnegative");
  if (total_steps < 0) throw ConfigError("total_steps must be nonnegative");
  Profile::from_segments(inflow.segments(), total_steps);
  Profile::from_segments(outflow_supply.segments(), total_steps);
  if (!initial_density.empty()) {
    if (initial_density.size() != static_cast<std::size_t>(num_cells())) {
      throw ConfigError(fmt::format("initial_density_veh_m has {} entries, the zone has {} cells",
                                    initial_density.size(), num_cells()));
    }
    try {
      validate_density(DensityField(initial_density), fd);
    } catch (const DomainError& e) {
      throw ConfigError(fmt::format("initial_density_veh_m: {}", e.what()));
    }
  }
  if (arrivals.penetration && !(*arrivals.penetration >= 0.0 && *arrivals.penetration <= 1.0)) {
    throw ConfigError(fmt::format("cavs.penetration must lie in [0, 1], got {}", *arrivals.penetration));
  }
  for (const ArrivalEvent& a : arrivals.schedule) {
    if (!(a.position_m >= 0.0 && a.position_m < coordination_length)) {
      throw ConfigError(fmt::format("cavs.schedule position {} m outside [0, {})", a.position_m, coordination_length));
    }
    if (a.initial_command_mps != 0.0 && !(a.initial_command_mps >= planner.u_min && a.initial_command_mps <= planner.u_max)) {
      throw ConfigError(fmt::format("cavs.schedule command {} m/s is neither 0 nor within the speed bounds",
                                    a.initial_command_mps));
    }
  }
  planner.validate(fd);
}

double merge_supply(const FundamentalDiagram& fd) {
  // past the merge only W-1 of the W lanes remain
  return fd.capacity() * (fd.lanes_upstream - 1) / fd.lanes_upstream;
}

ScenarioConfig default_scenario() {
  ScenarioConfig s;
  s.inflow = Profile::constant(2000.0 / 3600.0, s.total_steps);
  s.outflow_supply = Profile::constant(merge_supply(s.fd), s.total_steps);
  s.arrivals.penetration = 0.15;
  return s;
}

const char* to_string(ControllerKind kind) noexcept {
  switch (kind) {
    case ControllerKind::none: return "none";
    case ControllerKind::centralized: return "centralized";
    case ControllerKind::dmpc_parallel: return "dmpc";
    case ControllerKind::rollout_full: return "rollout";
    case ControllerKind::rollout_truncated: return "rollout-truncated";
  }
  return "unknown";
}

std::optional<ControllerKind> parse_controller(const std::string& name) {
  for (ControllerKind k : {ControllerKind::none, ControllerKind::centralized, ControllerKind::dmpc_parallel,
                           ControllerKind::rollout_full, ControllerKind::rollout_truncated}) {
    if (name == to_string(k)) return k;
  }
  return std::nullopt;
}

}  // namespace cavflow
