#include "cavflow/plant.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "cavflow/errors.hpp"

namespace cavflow {

int lookahead_cell(double y, const Grid& grid) {
  const int j = grid.cell_of(y);
  if (j < 0) return -1;
  if (j + 1 < grid.num_cells() && y >= (j + 1) * grid.dx() - 1.0) return j + 1;
  return j;
}

double effective_speed(double y, double u, std::span<const double> rho, const FundamentalDiagram& fd,
                       const Grid& grid) {
  const int j = lookahead_cell(y, grid);
  const double v = j < 0 ? fd.free_speed : fd.free_speed * (1.0 - rho[j] / fd.jam_density);
  return u > 0.0 ? std::min(u, v) : v;
}

double boundary_demand(double inflow, double queue, const FundamentalDiagram& fd, const Grid& grid) {
  return std::min(fd.capacity(), inflow + queue / grid.dt());
}

double boundary_supply(double outflow, const FundamentalDiagram& fd) { return std::min(outflow, fd.capacity()); }

std::vector<ArrivalEvent> generate_arrivals(const ScenarioConfig& scenario) {
  const double length = scenario.coordination_length;
  std::vector<ArrivalEvent> out;
  for (const ArrivalEvent& a : scenario.arrivals.schedule) {
    if (!(a.position_m >= 0.0 && a.position_m < length)) {
      throw ConfigError(fmt::format("arrival position {} m outside [0, {})", a.position_m, length));
    }
    if (a.step < 0) throw ConfigError(fmt::format("arrival step {} is negative", a.step));
    out.push_back(a);
  }
  if (scenario.arrivals.penetration) {
    const double p = *scenario.arrivals.penetration;
    std::mt19937_64 rng(scenario.seed);
    double cumulative = 0.0;
    long long emitted = 0;
    for (int k = 0; k < scenario.total_steps; ++k) {
      cumulative += scenario.inflow.at(k) * scenario.dt;
      while (static_cast<double>(emitted + 1) <= cumulative + 1e-9) {
        const long long n = ++emitted;
        bool cav = false;
        if (scenario.arrivals.mode == ArrivalMode::thinning) {
          cav = std::floor(p * static_cast<double>(n) + 1e-9) > std::floor(p * static_cast<double>(n - 1) + 1e-9);
        } else {
          cav = static_cast<double>(rng() >> 11) * 0x1.0p-53 < p;
        }
        if (cav) out.push_back({k, 0.0, 0.0});
      }
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const ArrivalEvent& a, const ArrivalEvent& b) { return a.step < b.step; });
  return out;
}

TravelSummary average_travel_metrics(const Metrics& metrics) {
  TravelSummary s;
  if (metrics.total_vehicle_time > 0.0) s.avg_speed = metrics.vehicle_distance / metrics.total_vehicle_time;
  if (metrics.throughput > 0.0) s.avg_travel_time = metrics.total_vehicle_time / metrics.throughput;
  return s;
}

Plant::Plant(const ScenarioConfig& scenario)
    : scenario_(scenario), grid_(scenario.grid()), stepper_(scenario.fd, grid_, scenario.flux_mode) {
  scenario_.validate();
  state_.rho = scenario_.initial_field();
  arrivals_ = generate_arrivals(scenario_);
  next_rho_.assign(state_.rho.size(), 0.0);
}

void Plant::spawn_and_retire() {
  std::erase_if(state_.cavs, [](const CavState& c) { return !c.active; });
  while (next_arrival_ < arrivals_.size() && arrivals_[next_arrival_].step <= state_.k) {
    const ArrivalEvent& a = arrivals_[next_arrival_++];
    CavState c;
    c.id = next_id_++;
    c.y = a.position_m;
    c.commanded_u = a.initial_command_mps;
    c.effective_speed = effective_speed(c.y, c.commanded_u, state_.rho.values(), scenario_.fd, grid_);
    state_.cavs.push_back(c);
  }
}

void Plant::advance(const std::map<int, double>& controls) {
  const PlannerConfig& pc = scenario_.planner;
  for (const auto& [id, u] : controls) {
    if (u != 0.0 && !(u >= pc.u_min - 1e-12 && u <= pc.u_max + 1e-12)) {
      throw DomainError(fmt::format("command {} m/s for CAV {} is neither 0 nor within [{}, {}]", u, id, pc.u_min,
                                    pc.u_max));
    }
  }
  const int k = state_.k;
  const double dt = grid_.dt();
  const double dx = grid_.dx();
  const double f_in = scenario_.inflow.at(k);
  const BoundaryFlows bc{boundary_demand(f_in, state_.upstream_queue, scenario_.fd, grid_),
                         boundary_supply(scenario_.outflow_supply.at(k), scenario_.fd)};

  points_.clear();
  for (CavState& c : state_.cavs) {
    if (!c.active) {
      c.commanded_u = 0.0;
      continue;
    }
    const auto it = controls.find(c.id);
    c.commanded_u = it == controls.end() ? 0.0 : it->second;
    points_.push_back({c.id, c.y, c.commanded_u});
  }

  Metrics& m = state_.metrics;
  m.total_vehicle_time += state_.rho.sum() * dt * dx;

  stepper_.step(state_.rho.values(), points_, bc, next_rho_);
  const auto iface = stepper_.interface_flux();
  const int n = grid_.num_cells();
  for (int j = 0; j < n; ++j) m.vehicle_distance += 0.5 * (iface[j] + iface[j + 1]) * dt * dx;
  m.throughput += iface[n] * dt;
  m.inflow += iface[0] * dt;
  state_.upstream_queue = std::max(0.0, state_.upstream_queue + (f_in - iface[0]) * dt);

  for (CavState& c : state_.cavs) {
    if (!c.active) continue;
    c.effective_speed = effective_speed(c.y, c.commanded_u, state_.rho.values(), scenario_.fd, grid_);
    c.y += c.effective_speed * dt;
    if (c.y >= grid_.length()) {
      c.active = false;
      c.commanded_u = 0.0;
    }
  }
  std::copy(next_rho_.begin(), next_rho_.end(), state_.rho.values().begin());
  ++state_.k;
}

}  // namespace cavflow
