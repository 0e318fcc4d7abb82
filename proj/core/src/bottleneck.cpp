#include "cavflow/bottleneck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "cavflow/errors.hpp"

namespace cavflow {

namespace {

void check_speed(double u, const FundamentalDiagram& fd) {
  if (!(u >= 0.0 && u <= fd.free_speed)) {
    throw DomainError(fmt::format("speed {} outside [0, {}]", u, fd.free_speed));
  }
}

// Unchecked fundamental-diagram pieces for the inner loops; inputs are validated once per step.
struct Fd {
  double V, R, rstar;
  explicit Fd(const FundamentalDiagram& fd) : V(fd.free_speed), R(fd.jam_density), rstar(fd.critical_density()) {}
  double f(double r) const noexcept { return V * r * (1.0 - r / R); }
  double dem(double r) const noexcept { return f(std::min(r, rstar)); }
  double sup(double r) const noexcept { return f(std::max(r, rstar)); }
};

double downstream_flux(double rho_cell, double u, const Reconstruction& rc, const FundamentalDiagram& fd,
                       const Grid& grid) {
  const Passage p = passage_fraction(rho_cell, u, rc, grid);
  if (p.dt_i <= grid.dt()) {
    return (grid.dx() / grid.dt()) * (rc.rho_check - rho_cell) + flux(rc.rho_hat, fd);
  }
  return flux(rc.rho_check, fd);
}

}  // namespace

Reconstruction reconstruct_densities(double u, const FundamentalDiagram& fd) {
  check_speed(u, fd);
  const double s = std::sqrt(1.0 - fd.alpha());
  const double base = fd.jam_density * (fd.free_speed - u) / (2.0 * fd.free_speed);
  return {base * (1.0 + s), base * (1.0 - s)};
}

GammaWindow gamma_bounds(double rho, const FundamentalDiagram& fd) {
  if (!(rho >= 0.0 && rho <= fd.jam_density)) {
    throw DomainError(fmt::format("gamma_bounds: density {} outside [0, {}]", rho, fd.jam_density));
  }
  const double s = std::sqrt(1.0 - fd.alpha());
  const double k = 2.0 * fd.free_speed * rho / (fd.alpha() * fd.jam_density);
  return {fd.free_speed - k * (1.0 + s), fd.free_speed - k * (1.0 - s)};
}

bool is_moving_bottleneck(double u, double rho, const FundamentalDiagram& fd) {
  check_speed(u, fd);
  const GammaWindow w = gamma_bounds(rho, fd);
  return w.gamma1 < u && u < w.gamma2;
}

Passage passage_fraction(double rho_cell, double u, const Reconstruction& recon, const Grid& grid) {
  if (recon.rho_hat == recon.rho_check) {
    throw DomainError("passage_fraction: degenerate reconstruction (rho_hat == rho_check)");
  }
  const double d = std::clamp((rho_cell - recon.rho_hat) / (recon.rho_check - recon.rho_hat), 0.0, 1.0);
  const double dt_i = u > 0.0 ? (1.0 - d) * grid.dx() / u : std::numeric_limits<double>::infinity();
  return {d, dt_i};
}

BottleneckFluxes bottleneck_fluxes_from_demand(double upstream_demand, double rho_cell, double u,
                                               const FundamentalDiagram& fd, const Grid& grid) {
  if (!is_moving_bottleneck(u, rho_cell, fd)) {
    throw DomainError(fmt::format("bottleneck_fluxes: u={} is not a moving bottleneck at density {}", u, rho_cell));
  }
  const Reconstruction rc = reconstruct_densities(u, fd);
  return {std::min(upstream_demand, supply(rc.rho_hat, fd)), downstream_flux(rho_cell, u, rc, fd, grid)};
}

BottleneckFluxes bottleneck_fluxes(double rho_prev, double rho_cell, double u, const FundamentalDiagram& fd,
                                   const Grid& grid) {
  return bottleneck_fluxes_from_demand(demand(rho_prev, fd), rho_cell, u, fd, grid);
}

CaseTableTerms case_table_terms(double rho_prev, double rho_cell, double u, const FundamentalDiagram& fd,
                                const Grid& grid) {
  const Reconstruction rc = reconstruct_densities(u, fd);
  const Passage p = passage_fraction(rho_cell, u, rc, grid);
  const double rstar = fd.critical_density();
  CaseFlags fl;
  fl.a = flux(rho_prev, fd) <= flux(rc.rho_hat, fd);
  fl.b = rc.rho_hat <= rstar;
  fl.c = rho_prev <= rstar;
  fl.d = p.dt_i <= grid.dt();
  const double a = fl.a, b = fl.b, c = fl.c, d = fl.d;
  const double r = grid.dt_over_dx();

  CaseTableTerms t;
  t.flags = fl;
  t.f2 = d * rho_cell + (b * c + a * (1.0 - b) * c) * r * flux(rho_prev, fd) + b * (1.0 - c) * r * flux(rstar, fd);
  t.f3 = (c * (1.0 - b) * (1.0 - a - d) - b * d + (1.0 - b) * (1.0 - c) * (1.0 - d)) * r * flux(rc.rho_hat, fd) -
         d * rc.rho_check - (1.0 - d) * r * flux(rc.rho_check, fd);
  return t;
}

std::optional<int> select_bottleneck_cav(std::span<const CavPoint> cavs_in_cell, double rho_cell,
                                         const FundamentalDiagram& fd) {
  const CavPoint* best = nullptr;
  for (const CavPoint& c : cavs_in_cell) {
    if (c.u == 0.0 || !is_moving_bottleneck(c.u, rho_cell, fd)) continue;
    if (best == nullptr || c.y > best->y || (c.y == best->y && c.id < best->id)) best = &c;
  }
  if (best == nullptr) return std::nullopt;
  return best->id;
}

DensityStepper::DensityStepper(const FundamentalDiagram& fd, const Grid& grid, FluxMode mode)
    : fd_(fd), grid_(grid), mode_(mode), root_(std::sqrt(1.0 - fd.alpha())) {
  const auto n = static_cast<std::size_t>(grid.num_cells());
  owner_idx_.assign(n, -1);
  owner_y_.assign(n, 0.0);
  owner_u_.assign(n, 0.0);
  owner_id_.assign(n, 0);
  rho_hat_.assign(n, 0.0);
  f_down_.assign(n, 0.0);
  iface_.assign(n + 1, 0.0);
  std_iface_.assign(n + 1, 0.0);
  next_.assign(n, 0.0);
}

void DensityStepper::step(std::span<const double> rho, std::span<const CavPoint> cavs, const BoundaryFlows& bc,
                          std::span<double> out, SystemStep* detail) {
  const int n = grid_.num_cells();
  if (rho.size() != static_cast<std::size_t>(n) || out.size() != rho.size()) {
    throw DomainError(fmt::format("density field has {} cells, grid has {}", rho.size(), n));
  }
  for (int j = 0; j < n; ++j) {
    if (!(rho[j] >= 0.0 && rho[j] <= fd_.jam_density)) {
      throw DomainError(fmt::format("density of cell {} is {}, outside [0, {}]", j, rho[j], fd_.jam_density));
    }
  }
  if (!(bc.inflow_demand >= 0.0) || !(bc.outflow_supply >= 0.0)) {
    throw DomainError("boundary flows must be nonnegative");
  }
  const Fd m(fd_);
  const double r = grid_.dt_over_dx();

  std::fill(owner_idx_.begin(), owner_idx_.end(), -1);
  for (std::size_t i = 0; i < cavs.size(); ++i) {
    const CavPoint& c = cavs[i];
    check_speed(c.u, fd_);
    if (c.u == 0.0) continue;
    const int j = grid_.cell_of(c.y);
    if (j < 0) continue;
    const double kk = 2.0 * m.V * rho[j] / (fd_.alpha() * m.R);
    if (!(m.V - kk * (1.0 + root_) < c.u && c.u < m.V - kk * (1.0 - root_))) continue;
    if (owner_idx_[j] < 0 || c.y > owner_y_[j] || (c.y == owner_y_[j] && c.id < owner_id_[j])) {
      owner_idx_[j] = static_cast<int>(i);
      owner_y_[j] = c.y;
      owner_u_[j] = c.u;
      owner_id_[j] = c.id;
    }
  }

  for (int j = 0; j < n; ++j) {
    if (owner_idx_[j] < 0) continue;
    const double base = m.R * (m.V - owner_u_[j]) / (2.0 * m.V);
    const Reconstruction rc{base * (1.0 + root_), base * (1.0 - root_)};
    rho_hat_[j] = rc.rho_hat;
    f_down_[j] = downstream_flux(rho[j], owner_u_[j], rc, fd_, grid_);
  }

  std_iface_[0] = std::min(bc.inflow_demand, m.sup(rho[0]));
  for (int i = 1; i < n; ++i) std_iface_[i] = std::min(m.dem(rho[i - 1]), m.sup(rho[i]));
  std_iface_[n] = std::min(m.dem(rho[n - 1]), bc.outflow_supply);

  auto host_inflow = [&](int j) {
    return std::min(j == 0 ? bc.inflow_demand : m.dem(rho[j - 1]), m.sup(rho_hat_[j]));
  };

  if (mode_ == FluxMode::consistent) {
    for (int i = 0; i <= n; ++i) {
      const double send = i == 0 ? bc.inflow_demand : (owner_idx_[i - 1] >= 0 ? f_down_[i - 1] : m.dem(rho[i - 1]));
      const double recv = i == n ? bc.outflow_supply : (owner_idx_[i] >= 0 ? m.sup(rho_hat_[i]) : m.sup(rho[i]));
      iface_[i] = std::min(send, recv);
    }
    for (int j = 0; j < n; ++j) next_[j] = rho[j] + r * (iface_[j] - iface_[j + 1]);
  } else {
    for (int j = 0; j < n; ++j) {
      if (owner_idx_[j] < 0) {
        next_[j] = rho[j] + r * (std_iface_[j] - std_iface_[j + 1]);
      } else {
        next_[j] = rho[j] + r * (host_inflow(j) - f_down_[j]);
      }
    }
    // the two cells sharing an interface may disagree on its flux; report the mean of both views
    for (int i = 0; i <= n; ++i) {
      const double up_view = (i > 0 && owner_idx_[i - 1] >= 0) ? f_down_[i - 1] : std_iface_[i];
      const double down_view = (i < n && owner_idx_[i] >= 0) ? host_inflow(i) : std_iface_[i];
      iface_[i] = 0.5 * (up_view + down_view);
    }
  }

  absorb_drift(next_, fd_);

  if (detail != nullptr) {
    const auto un = static_cast<std::size_t>(n);
    detail->a_diag.assign(un, 0.0);
    detail->b.assign(un, 0.0);
    detail->c_u.assign(un, 0.0);
    detail->o.assign(un, 0);
    detail->owner.assign(un, std::nullopt);
    detail->interface_flux.assign(iface_.begin(), iface_.end());
    detail->interface_correction.assign(un, 0.0);
    for (int j = 0; j < n; ++j) {
      detail->b[j] = r * (std_iface_[j] - std_iface_[j + 1]);
      if (owner_idx_[j] >= 0) {
        const double prev = j == 0 ? demand_equivalent_density(bc.inflow_demand, fd_) : rho[j - 1];
        const CaseTableTerms t = case_table_terms(prev, rho[j], owner_u_[j], fd_, grid_);
        detail->o[j] = 1;
        detail->owner[j] = owner_id_[j];
        detail->a_diag[j] = t.f2 - detail->b[j];
        detail->c_u[j] = t.f3;
      }
      detail->interface_correction[j] =
          next_[j] - (rho[j] + detail->a_diag[j] * detail->o[j] + detail->b[j] + detail->c_u[j]);
    }
  }
  std::copy(next_.begin(), next_.end(), out.begin());
}

DensityField density_step(const DensityField& rho, std::span<const CavPoint> cavs, const BoundaryFlows& bc,
                          const FundamentalDiagram& fd, const Grid& grid, FluxMode mode, SystemStep* detail) {
  DensityStepper stepper(fd, grid, mode);
  DensityField out(rho.size());
  stepper.step(rho.values(), cavs, bc, out.values(), detail);
  return out;
}

}  // namespace cavflow
