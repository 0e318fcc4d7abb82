#include "oracle.hpp"

#include <algorithm>
#include <cmath>

namespace oracle {

namespace {

double greenshields(const Road& road, double r) { return road.V * r - road.V * r * r / road.R; }

double sending(const Road& road, double r) {
  if (r <= road.R / 2) return greenshields(road, r);
  return road.V * road.R / 4;
}

double receiving(const Road& road, double r) {
  if (r >= road.R / 2) return greenshields(road, r);
  return road.V * road.R / 4;
}

struct Host {
  bool active = false;
  double hat = 0.0;
  double check = 0.0;
  double down = 0.0;
};

std::vector<Host> find_hosts(const std::vector<double>& rho, const std::vector<Car>& cars, const Road& road) {
  std::vector<Host> hosts(rho.size());
  for (int j = 0; j < road.cells; ++j) {
    const Car* owner = nullptr;
    for (const Car& c : cars) {
      if (c.u == 0.0) continue;
      if (c.y < 0.0 || c.y >= road.cells * road.dx) continue;
      int cell = static_cast<int>(std::floor(c.y / road.dx));
      if (cell > road.cells - 1) cell = road.cells - 1;
      if (cell != j) continue;
      auto [hat, check] = bottleneck_roots(road, c.u);
      // the CAV caps the flow exactly when the cell density lies strictly between the two roots
      if (!(check < rho[j] && rho[j] < hat)) continue;
      if (owner == nullptr || c.y > owner->y || (c.y == owner->y && c.id < owner->id)) owner = &c;
    }
    if (owner == nullptr) continue;
    Host h;
    h.active = true;
    auto [hat, check] = bottleneck_roots(road, owner->u);
    h.hat = hat;
    h.check = check;
    double share = (rho[j] - hat) / (check - hat);
    if (share < 0.0) share = 0.0;
    if (share > 1.0) share = 1.0;
    const double time_to_edge = (1.0 - share) * road.dx / owner->u;
    if (time_to_edge <= road.dt) {
      h.down = road.dx / road.dt * (check - rho[j]) + greenshields(road, hat);
    } else {
      h.down = greenshields(road, check);
    }
    hosts[j] = h;
  }
  return hosts;
}

}  // namespace

std::pair<double, double> bottleneck_roots(const Road& road, double u) {
  const double alpha = (road.W - 1.0) / road.W;
  const double b = -road.R * (road.V - u) / road.V;
  const double c = alpha * road.R * road.R * (road.V - u) * (road.V - u) / (4.0 * road.V * road.V);
  double disc = b * b - 4.0 * c;
  if (disc < 0.0) disc = 0.0;
  const double sq = std::sqrt(disc);
  return {(-b + sq) / 2.0, (-b - sq) / 2.0};
}

std::vector<double> straightline_raw(const std::vector<double>& rho, const std::vector<Car>& cars, const Road& road,
                                     double inflow_demand, double outflow_supply, std::vector<double>* fluxes) {
  const int n = road.cells;
  const std::vector<Host> hosts = find_hosts(rho, cars, road);
  std::vector<double> F(n + 1);
  for (int i = 0; i <= n; ++i) {
    double send, recv;
    if (i == 0) {
      send = inflow_demand;
    } else if (hosts[i - 1].active) {
      send = hosts[i - 1].down;
    } else {
      send = sending(road, rho[i - 1]);
    }
    if (i == n) {
      recv = outflow_supply;
    } else if (hosts[i].active) {
      recv = receiving(road, hosts[i].hat);
    } else {
      recv = receiving(road, rho[i]);
    }
    F[i] = send < recv ? send : recv;
  }
  std::vector<double> out(n);
  for (int j = 0; j < n; ++j) out[j] = rho[j] + road.dt / road.dx * (F[j] - F[j + 1]);
  if (fluxes != nullptr) *fluxes = F;
  return out;
}

std::vector<double> straightline_step(const std::vector<double>& rho, const std::vector<Car>& cars, const Road& road,
                                      double inflow_demand, double outflow_supply) {
  std::vector<double> out = straightline_raw(rho, cars, road, inflow_demand, outflow_supply);
  for (double& r : out) r = std::min(std::max(r, 0.0), road.R);
  return out;
}

namespace {

struct World {
  std::vector<double> rho;
  std::vector<double> y;
  double queue = 0.0;
};

void advance(const Scene& s, World& w, int k, const std::vector<double>& u) {
  const Road& road = s.road;
  const double L = road.cells * road.dx;
  const double cap = road.V * road.R / 4;
  const double f_in = s.inflow(k);
  const double demand = std::min(cap, f_in + w.queue / road.dt);
  const double supply = std::min(s.outflow(k), cap);

  std::vector<Car> cars;
  for (std::size_t i = 0; i < w.y.size(); ++i) {
    if (w.y[i] < L) cars.push_back({static_cast<int>(i), w.y[i], u[i]});
  }
  std::vector<double> y_next = w.y;
  for (std::size_t i = 0; i < w.y.size(); ++i) {
    const double y = w.y[i];
    if (y >= L) continue;
    int cell = static_cast<int>(std::floor(y / road.dx));
    if (cell > road.cells - 1) cell = road.cells - 1;
    if (cell + 1 < road.cells && y >= (cell + 1) * road.dx - 1.0) cell += 1;
    const double v = road.V * (1.0 - w.rho[cell] / road.R);
    const double speed = u[i] > 0.0 ? std::min(u[i], v) : v;
    y_next[i] = y + speed * road.dt;
  }

  std::vector<double> F;
  std::vector<double> next = straightline_raw(w.rho, cars, road, demand, supply, &F);
  const double entered = F[0];
  for (double& r : next) r = std::min(std::max(r, 0.0), road.R);
  w.queue = std::max(0.0, w.queue + (f_in - entered) * road.dt);
  w.rho = std::move(next);
  w.y = std::move(y_next);
}

}  // namespace

double joint_travel(const Scene& scene, const std::vector<std::vector<double>>& plans, int horizon) {
  World w{scene.rho, scene.y, scene.queue};
  std::vector<double> u(scene.y.size());
  double total = 0.0;
  for (int t = 0; t < horizon; ++t) {
    double mass = 0.0;
    for (double r : w.rho) mass += r;
    total += mass * scene.road.dt * scene.road.dx;
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = plans[i][t];
    advance(scene, w, scene.k + t, u);
  }
  return total;
}

JointBest exhaustive_joint(const Scene& scene, const std::vector<double>& actions, int horizon, std::int64_t budget) {
  const std::size_t cars = scene.y.size();
  const std::size_t digits = cars * static_cast<std::size_t>(horizon);
  double count = 1.0;
  for (std::size_t d = 0; d < digits; ++d) count *= static_cast<double>(actions.size());
  if (count > static_cast<double>(budget)) throw BudgetError("exhaustive_joint: candidate space above budget");

  JointBest best;
  best.value = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> digit(digits, 0);
  std::vector<std::vector<double>> plans(cars, std::vector<double>(static_cast<std::size_t>(horizon), 0.0));
  const auto total = static_cast<std::int64_t>(count);
  for (std::int64_t n = 0; n < total; ++n) {
    // digit index t*cars + i; the last digit varies fastest
    std::int64_t rest = n;
    for (std::size_t d = digits; d-- > 0;) {
      digit[d] = static_cast<std::size_t>(rest % static_cast<std::int64_t>(actions.size()));
      rest /= static_cast<std::int64_t>(actions.size());
    }
    for (int t = 0; t < horizon; ++t) {
      for (std::size_t i = 0; i < cars; ++i) plans[i][t] = actions[digit[t * cars + i]];
    }
    const double v = joint_travel(scene, plans, horizon);
    ++best.candidates;
    if (v < best.value) {
      best.value = v;
      best.plans = plans;
    }
  }
  if (cars == 0) best.value = joint_travel(scene, plans, horizon);
  return best;
}

Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& g,
                            const Eigen::VectorXd& point, double h) {
  const Eigen::VectorXd base = g(point);
  Eigen::MatrixXd J(base.size(), point.size());
  for (Eigen::Index c = 0; c < point.size(); ++c) {
    Eigen::VectorXd plus = point, minus = point;
    plus[c] += h;
    minus[c] -= h;
    J.col(c) = (g(plus) - g(minus)) / (2.0 * h);
  }
  return J;
}

double conservation_audit(const std::vector<std::vector<double>>& trace, const std::vector<double>& in_flux,
                          const std::vector<double>& out_flux, double dx, double dt) {
  double worst = 0.0;
  for (std::size_t k = 0; k + 1 < trace.size(); ++k) {
    double before = 0.0, after = 0.0;
    for (double r : trace[k]) before += r * dx;
    for (double r : trace[k + 1]) after += r * dx;
    const double boundary = dt * (in_flux[k] - out_flux[k]);
    const double scale = std::max({before, after, dt * (std::abs(in_flux[k]) + std::abs(out_flux[k]))});
    if (scale == 0.0) continue;
    worst = std::max(worst, std::abs(after - before - boundary) / scale);
  }
  return worst;
}

}  // namespace oracle
