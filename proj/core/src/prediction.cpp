#include "cavflow/prediction.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "cavflow/errors.hpp"

namespace cavflow {

int Snapshot::index_of(int id) const {
  for (std::size_t i = 0; i < cavs.size(); ++i) {
    if (cavs[i].id == id) return static_cast<int>(i);
  }
  return -1;
}

Snapshot snapshot_of(const SimulationState& state) {
  Snapshot s;
  s.k = state.k;
  s.rho = state.rho;
  s.upstream_queue = state.upstream_queue;
  for (const CavState& c : state.cavs) {
    if (c.active) s.cavs.push_back(c);
  }
  return s;
}

HorizonModel::HorizonModel(const ScenarioConfig& scenario)
    : fd_(scenario.fd),
      grid_(scenario.grid()),
      inflow_(scenario.inflow),
      outflow_(scenario.outflow_supply),
      stepper_(scenario.fd, grid_, scenario.flux_mode) {}

PredictState HorizonModel::initial(const Snapshot& snap) const {
  PredictState s;
  s.rho = snap.rho.vector();
  s.y.reserve(snap.cavs.size());
  for (const CavState& c : snap.cavs) s.y.push_back(c.y);
  s.queue = snap.upstream_queue;
  return s;
}

void HorizonModel::step(const PredictState& in, int k, std::span<const double> commands, PredictState& out) {
  const double dt = grid_.dt();
  const double length = grid_.length();
  const double f_in = inflow_.at(k);
  const BoundaryFlows bc{boundary_demand(f_in, in.queue, fd_, grid_), boundary_supply(outflow_.at(k), fd_)};

  points_.clear();
  for (std::size_t i = 0; i < in.y.size(); ++i) {
    if (in.y[i] < length) points_.push_back({static_cast<int>(i), in.y[i], commands[i]});
  }
  out.rho.resize(in.rho.size());
  out.y.resize(in.y.size());
  for (std::size_t i = 0; i < in.y.size(); ++i) {
    const double y = in.y[i];
    out.y[i] = y < length ? y + effective_speed(y, commands[i], in.rho, fd_, grid_) * dt : y;
  }
  stepper_.step(in.rho, points_, bc, out.rho);
  out.queue = std::max(0.0, in.queue + (f_in - stepper_.interface_flux()[0]) * dt);
}

Trajectory predict_horizon(const Snapshot& snap, int me, const ControlSequence& my_mu,
                           const std::map<int, ControlSequence>& committed, int horizon, HorizonModel& model) {
  const std::size_t m = snap.cavs.size();
  std::vector<const ControlSequence*> plan(m, nullptr);
  for (std::size_t i = 0; i < m; ++i) {
    const int id = snap.cavs[i].id;
    if (id == me) {
      plan[i] = &my_mu;
    } else if (auto it = committed.find(id); it != committed.end()) {
      plan[i] = &it->second;
    }
    if (plan[i] != nullptr && plan[i]->size() < static_cast<std::size_t>(horizon)) {
      throw DomainError(fmt::format("control sequence of CAV {} has {} entries, horizon is {}", id, plan[i]->size(), horizon));
    }
  }

  Trajectory tr;
  PredictState cur = model.initial(snap);
  PredictState next;
  std::vector<double> u(m, 0.0);
  tr.rho.emplace_back(cur.rho);
  tr.cav_y.push_back(cur.y);
  for (int t = 0; t < horizon; ++t) {
    for (std::size_t i = 0; i < m; ++i) u[i] = plan[i] != nullptr ? (*plan[i])[t] : 0.0;
    model.step(cur, snap.k + t, u, next);
    std::swap(cur, next);
    tr.rho.emplace_back(cur.rho);
    tr.cav_y.push_back(cur.y);
  }
  return tr;
}

double travel_cost(std::span<const DensityField> xi, int horizon, const Grid& grid) {
  double j = 0.0;
  for (int t = 0; t < horizon; ++t) j += xi[t].sum() * grid.dt() * grid.dx();
  return j;
}

}  // namespace cavflow
