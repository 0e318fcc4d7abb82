#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cavflow/bottleneck.hpp"
#include "cavflow/flow_model.hpp"

namespace cavflow {

/// Piecewise-constant time profile in veh/s. Segments are [from_step, to_step) and must tile
/// [0, T) without gaps; steps at or past the last segment reuse its value.
class Profile {
 public:
  struct Segment {
    int from_step = 0;
    int to_step = 0;
    double value = 0.0;
    bool operator==(const Segment&) const = default;
  };

  Profile() = default;
  static Profile constant(double value, int total_steps);
  static Profile from_segments(std::vector<Segment> segments, int total_steps);

  double at(int k) const noexcept;
  const std::vector<Segment>& segments() const noexcept { return segments_; }

  bool operator==(const Profile&) const = default;

 private:
  std::vector<Segment> segments_;
};

struct ArrivalEvent {
  int step = 0;
  double position_m = 0.0;
  double initial_command_mps = 0.0;
  bool operator==(const ArrivalEvent&) const = default;
};

enum class ArrivalMode { thinning, bernoulli };

/// Either an explicit schedule or a penetration rate applied to the inflow stream.
struct ArrivalConfig {
  std::vector<ArrivalEvent> schedule;  // used when non-empty or when penetration is absent
  std::optional<double> penetration;
  ArrivalMode mode = ArrivalMode::thinning;
  bool operator==(const ArrivalConfig&) const = default;
};

enum class ControllerKind { none, centralized, dmpc_parallel, rollout_full, rollout_truncated };
enum class Ordering { fixed, optimized };

struct PlannerConfig {
  int horizon = 7;           // N
  int min_horizon = 2;       // M_min
  int speed_levels = 6;      // S
  double u_min = 5.0;
  double u_max = 33.33;
  double lambda = 0.6;
  double epsilon = 1e-3;     // veh*s
  int max_iterations = 5;    // P_max
  double q = 0.5;
  double r = 1.0;
  double delta_q = 0.1;
  double terminal_epsilon = std::numeric_limits<double>::infinity();
  std::int64_t enumeration_budget = 343;     // per solve; larger problems use beam search
  int beam_width = 0;                        // 0 selects S*S
  std::int64_t centralized_budget = 10'000'000;
  Ordering ordering = Ordering::optimized;
  bool truncation = true;
  ControllerKind controller = ControllerKind::rollout_truncated;

  /// Throws ConfigError on violated invariants.
  void validate(const FundamentalDiagram& fd) const;
  /// {0, u_min, ..., u_max}: the no-action command followed by S evenly spaced speeds.
  std::vector<double> action_set() const;
  int effective_beam_width() const noexcept { return beam_width > 0 ? beam_width : speed_levels * speed_levels; }

  bool operator==(const PlannerConfig&) const = default;
};

struct ScenarioConfig {
  std::string name = "default";
  FundamentalDiagram fd;
  double dx = 300.0;
  double dt = 1.0;
  double coordination_length = 2100.0;
  double free_drive_length = 900.0;  // informational only; the simulated zone is the coordination zone
  int total_steps = 1000;            // T
  Profile inflow;                    // veh/s
  Profile outflow_supply;            // veh/s
  std::vector<double> initial_density;  // empty: free-flow density of the first inflow value
  ArrivalConfig arrivals;
  std::uint64_t seed = 1;
  FluxMode flux_mode = FluxMode::consistent;
  PlannerConfig planner;

  int num_cells() const noexcept { return static_cast<int>(coordination_length / dx + 0.5); }
  Grid grid() const { return Grid::create(num_cells(), dx, dt, fd); }
  DensityField initial_field() const;

  /// Throws ConfigError describing the first violated invariant.
  void validate() const;

  bool operator==(const ScenarioConfig&) const = default;
};

/// Downstream supply past the lane drop: (W-1)/W of the upstream capacity.
double merge_supply(const FundamentalDiagram& fd);

/// The built-in lane-drop scenario used when a document leaves fields out.
ScenarioConfig default_scenario();

const char* to_string(ControllerKind kind) noexcept;
std::optional<ControllerKind> parse_controller(const std::string& name);

}  // namespace cavflow
