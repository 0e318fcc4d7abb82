#include "cavflow/flow_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <fmt/format.h>

#include "cavflow/errors.hpp"

namespace cavflow {

namespace {

void check_density(double rho, const FundamentalDiagram& fd, const char* op) {
  if (!(rho >= 0.0 && rho <= fd.jam_density)) {
    throw DomainError(fmt::format("{}: density {} outside [0, {}]", op, rho, fd.jam_density));
  }
}

double greenshields(double rho, const FundamentalDiagram& fd) noexcept {
  return fd.free_speed * rho * (1.0 - rho / fd.jam_density);
}

}  // namespace

FundamentalDiagram FundamentalDiagram::create(double free_speed, double jam_density, int lanes_upstream) {
  if (!(free_speed > 0.0)) throw ConfigError(fmt::format("free speed must be positive, got {}", free_speed));
  if (!(jam_density > 0.0)) throw ConfigError(fmt::format("jam density must be positive, got {}", jam_density));
  if (lanes_upstream <= 1) throw ConfigError(fmt::format("upstream lane count must exceed 1, got {}", lanes_upstream));
  return FundamentalDiagram{free_speed, jam_density, lanes_upstream};
}

Grid Grid::create(int num_cells, double dx, double dt, const FundamentalDiagram& fd) {
  if (num_cells < 1) throw ConfigError(fmt::format("grid needs at least one cell, got {}", num_cells));
  if (!(dx > 0.0) || !(dt > 0.0)) throw ConfigError("cell length and time step must be positive");
  if (fd.free_speed * dt > 0.9 * dx) {
    throw ConfigError(fmt::format("CFL violated: V*dt = {} exceeds 0.9*dx = {}", fd.free_speed * dt, 0.9 * dx));
  }
  return Grid(num_cells, dx, dt);
}

int Grid::cell_of(double y) const noexcept {
  if (!(y >= 0.0) || y >= length()) return -1;
  const int j = static_cast<int>(std::floor(y / dx_));
  return std::min(j, num_cells_ - 1);
}

double DensityField::sum() const noexcept { return std::accumulate(rho_.begin(), rho_.end(), 0.0); }

double DensityField::squared_norm() const noexcept {
  double s = 0.0;
  for (double r : rho_) s += r * r;
  return s;
}

void validate_density(const DensityField& rho, const FundamentalDiagram& fd) {
  for (std::size_t j = 0; j < rho.size(); ++j) {
    if (!(rho[j] >= 0.0 && rho[j] < fd.jam_density)) {
      throw DomainError(fmt::format("density of cell {} is {}, outside [0, {})", j, rho[j], fd.jam_density));
    }
  }
}

double flux(double rho, const FundamentalDiagram& fd) {
  check_density(rho, fd, "flux");
  return greenshields(rho, fd);
}

double equilibrium_speed(double rho, const FundamentalDiagram& fd) {
  check_density(rho, fd, "equilibrium_speed");
  return fd.free_speed * (1.0 - rho / fd.jam_density);
}

double demand(double rho, const FundamentalDiagram& fd) {
  check_density(rho, fd, "demand");
  return greenshields(std::min(rho, fd.critical_density()), fd);
}

double supply(double rho, const FundamentalDiagram& fd) {
  check_density(rho, fd, "supply");
  return greenshields(std::max(rho, fd.critical_density()), fd);
}

double standard_interface_flux(double rho_up, double rho_down, const FundamentalDiagram& fd) {
  return std::min(demand(rho_up, fd), supply(rho_down, fd));
}

double demand_equivalent_density(double demand_value, const FundamentalDiagram& fd) {
  const double q = std::clamp(demand_value, 0.0, fd.capacity());
  // smaller root of V*rho*(1 - rho/R) = q
  const double disc = std::max(0.0, 1.0 - q / fd.capacity());
  return 0.5 * fd.jam_density * (1.0 - std::sqrt(disc));
}

void absorb_drift(std::span<double> rho, const FundamentalDiagram& fd, double tolerance) {
  for (std::size_t j = 0; j < rho.size(); ++j) {
    double& r = rho[j];
    if (std::isnan(r) || r < -tolerance || r > fd.jam_density + tolerance) {
      throw NumericalError(fmt::format("density of cell {} left the admissible range: {}", j, r),
                           static_cast<int>(j));
    }
    r = std::clamp(r, 0.0, fd.jam_density);
  }
}

}  // namespace cavflow
