#pragma once

#include <map>
#include <span>
#include <vector>

#include "cavflow/bottleneck.hpp"
#include "cavflow/config.hpp"
#include "cavflow/plant.hpp"

namespace cavflow {

using ControlSequence = std::vector<double>;

/// What a controller sees at step k: the plant state restricted to active CAVs.
struct Snapshot {
  int k = 0;
  DensityField rho;
  std::vector<CavState> cavs;  // active only, ascending id
  double upstream_queue = 0.0;

  int index_of(int id) const;  // -1 when absent
};

Snapshot snapshot_of(const SimulationState& state);

/// Predicted state: densities, CAV positions in snapshot order, and the upstream queue.
struct PredictState {
  std::vector<double> rho;
  std::vector<double> y;
  double queue = 0.0;
};

/// The plant's transition (boundaries, queue, CAV kinematics) without arrivals, so that a
/// nominal prediction reproduces the plant exactly. Holds scratch buffers; one per thread.
class HorizonModel {
 public:
  explicit HorizonModel(const ScenarioConfig& scenario);

  const Grid& grid() const noexcept { return grid_; }
  const FundamentalDiagram& fd() const noexcept { return fd_; }

  PredictState initial(const Snapshot& snap) const;

  /// Advances `in` by one step at absolute time k. `commands` holds one entry per CAV in
  /// snapshot order; CAVs already past the zone end are treated as inactive.
  void step(const PredictState& in, int k, std::span<const double> commands, PredictState& out);

 private:
  FundamentalDiagram fd_;
  Grid grid_;
  Profile inflow_;
  Profile outflow_;
  DensityStepper stepper_;
  std::vector<CavPoint> points_;
};

struct Trajectory {
  std::vector<DensityField> rho;           // N + 1 fields, the first one is the snapshot
  std::vector<std::vector<double>> cav_y;  // N + 1 rows of positions in snapshot order
};

/// Rolls the model N steps. `me` follows my_mu, CAVs in `committed` follow their sequences,
/// everyone else issues no command (drives like surrounding traffic).
Trajectory predict_horizon(const Snapshot& snap, int me, const ControlSequence& my_mu,
                           const std::map<int, ControlSequence>& committed, int horizon, HorizonModel& model);

/// Total time spent in the zone over the first N fields of the trajectory.
double travel_cost(std::span<const DensityField> xi, int horizon, const Grid& grid);

}  // namespace cavflow
