#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "cavflow/bottleneck.hpp"
#include "cavflow/config.hpp"
#include "cavflow/flow_model.hpp"

namespace cavflow {

struct CavState {
  int id = 0;
  double y = 0.0;
  double commanded_u = 0.0;
  double effective_speed = 0.0;
  bool active = true;
  bool operator==(const CavState&) const = default;
};

struct Metrics {
  double total_vehicle_time = 0.0;  // J_t, veh*s
  double vehicle_distance = 0.0;    // veh*m
  double throughput = 0.0;          // veh leaving the zone
  double inflow = 0.0;              // veh entering the zone
  std::int64_t eval_count = 0;
  std::vector<int> per_step_m;
};

struct SimulationState {
  int k = 0;
  DensityField rho;
  std::vector<CavState> cavs;  // ascending id
  double upstream_queue = 0.0;  // veh waiting outside the zone
  Metrics metrics;
};

struct TravelSummary {
  std::optional<double> avg_travel_time;  // s
  std::optional<double> avg_speed;        // m/s
};

/// Cell whose density limits a vehicle at y: its own cell, or the next one within the last
/// metre of a cell. Returns -1 outside the zone.
int lookahead_cell(double y, const Grid& grid);

/// Speed actually driven: min(u, v(rho ahead)) for u > 0, v(rho ahead) for u == 0.
double effective_speed(double y, double u, std::span<const double> rho, const FundamentalDiagram& fd,
                       const Grid& grid);

/// Demand offered to the first interface given the profile value and the waiting queue.
double boundary_demand(double inflow, double queue, const FundamentalDiagram& fd, const Grid& grid);
double boundary_supply(double outflow, const FundamentalDiagram& fd);

/// Arrival schedule of CAVs over [0, T), sorted by step.
std::vector<ArrivalEvent> generate_arrivals(const ScenarioConfig& scenario);

TravelSummary average_travel_metrics(const Metrics& metrics);

/// Closed-loop ground truth. One instance owns one run.
class Plant {
 public:
  explicit Plant(const ScenarioConfig& scenario);

  const SimulationState& state() const noexcept { return state_; }
  const ScenarioConfig& scenario() const noexcept { return scenario_; }
  const Grid& grid() const noexcept { return grid_; }
  bool finished() const noexcept { return state_.k >= scenario_.total_steps; }

  /// Adds CAVs scheduled for the current step and drops the ones that left the zone.
  void spawn_and_retire();

  /// One step. Controls are keyed by CAV id; missing ids and inactive CAVs get 0 (no action).
  /// Commands must be 0 or within [u_min, u_max].
  void advance(const std::map<int, double>& controls);

  /// Interface fluxes realised by the last advance (inflow first).
  std::span<const double> last_interface_flux() const noexcept { return stepper_.interface_flux(); }

 private:
  ScenarioConfig scenario_;
  Grid grid_;
  DensityStepper stepper_;
  SimulationState state_;
  std::vector<ArrivalEvent> arrivals_;
  std::size_t next_arrival_ = 0;
  int next_id_ = 0;
  std::vector<CavPoint> points_;
  std::vector<double> next_rho_;
};

}  // namespace cavflow
