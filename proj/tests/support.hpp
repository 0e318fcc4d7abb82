#pragma once

// Glue between the production types and the reference implementations in oracle/.

#include <string>
#include <vector>

#include "cavflow/config.hpp"
#include "cavflow/prediction.hpp"
#include "oracle.hpp"

namespace testing_support {

inline std::string scenario_path(const std::string& name) { return std::string(CAVFLOW_SCENARIO_DIR) + "/" + name; }

// Default geometry, no arrivals, uniform initial density with matching inflow demand.
inline cavflow::ScenarioConfig uniform_scenario(double rho0, int steps) {
  cavflow::ScenarioConfig s = cavflow::default_scenario();
  s.total_steps = steps;
  const double f = s.fd.free_speed * rho0 * (1.0 - rho0 / s.fd.jam_density);
  s.inflow = cavflow::Profile::constant(f, steps);
  s.outflow_supply = cavflow::Profile::constant(cavflow::merge_supply(s.fd), steps);
  s.initial_density.assign(static_cast<std::size_t>(s.num_cells()), rho0);
  s.arrivals = {};
  return s;
}

inline cavflow::Snapshot make_snapshot(int k, std::vector<double> rho, const std::vector<double>& ys,
                                       double queue = 0.0) {
  cavflow::Snapshot snap;
  snap.k = k;
  snap.rho = cavflow::DensityField(std::move(rho));
  snap.upstream_queue = queue;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    cavflow::CavState c;
    c.id = static_cast<int>(i);
    c.y = ys[i];
    snap.cavs.push_back(c);
  }
  return snap;
}

inline oracle::Road road_of(const cavflow::ScenarioConfig& s) {
  oracle::Road r;
  r.V = s.fd.free_speed;
  r.R = s.fd.jam_density;
  r.W = s.fd.lanes_upstream;
  r.dx = s.dx;
  r.dt = s.dt;
  r.cells = s.num_cells();
  return r;
}

inline oracle::Scene scene_of(const cavflow::Snapshot& snap, const cavflow::ScenarioConfig& s) {
  oracle::Scene scene;
  scene.road = road_of(s);
  scene.rho = snap.rho.vector();
  for (const cavflow::CavState& c : snap.cavs) scene.y.push_back(c.y);
  scene.queue = snap.upstream_queue;
  scene.k = snap.k;
  const cavflow::Profile in = s.inflow, out = s.outflow_supply;
  scene.inflow = [in](int k) { return in.at(k); };
  scene.outflow = [out](int k) { return out.at(k); };
  return scene;
}

}  // namespace testing_support
