#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cavflow {

/// Greenshields fundamental diagram of the upstream road, plus the lane count that sets the
/// capacity-reduction factor of a moving bottleneck.
struct FundamentalDiagram {
  double free_speed = 33.33;   // V, m/s
  double jam_density = 0.12;   // R, veh/m
  int lanes_upstream = 3;      // W

  /// Validates V > 0, R > 0, W > 1.
  static FundamentalDiagram create(double free_speed, double jam_density, int lanes_upstream);

  double critical_density() const noexcept { return 0.5 * jam_density; }
  double alpha() const noexcept {
    return (static_cast<double>(lanes_upstream) - 1.0) / static_cast<double>(lanes_upstream);
  }
  /// f(R/2) = VR/4, veh/s.
  double capacity() const noexcept { return 0.25 * free_speed * jam_density; }

  bool operator==(const FundamentalDiagram&) const = default;
};

/// Uniform cell discretisation of the coordination zone. Construction enforces V*dt <= 0.9*dx.
class Grid {
 public:
  Grid() = default;
  static Grid create(int num_cells, double dx, double dt, const FundamentalDiagram& fd);

  int num_cells() const noexcept { return num_cells_; }
  double dx() const noexcept { return dx_; }
  double dt() const noexcept { return dt_; }
  double length() const noexcept { return num_cells_ * dx_; }
  double dt_over_dx() const noexcept { return dt_ / dx_; }

  /// Index of the cell with y in [j*dx, (j+1)*dx), or -1 when y is outside [0, L).
  int cell_of(double y) const noexcept;

  bool operator==(const Grid&) const = default;

 private:
  Grid(int num_cells, double dx, double dt) : num_cells_(num_cells), dx_(dx), dt_(dt) {}

  int num_cells_ = 1;
  double dx_ = 300.0;
  double dt_ = 1.0;
};

/// Per-cell vehicle densities in veh/m.
class DensityField {
 public:
  DensityField() = default;
  explicit DensityField(std::size_t cells, double value = 0.0) : rho_(cells, value) {}
  explicit DensityField(std::vector<double> values) : rho_(std::move(values)) {}

  std::size_t size() const noexcept { return rho_.size(); }
  double operator[](std::size_t j) const { return rho_[j]; }
  double& operator[](std::size_t j) { return rho_[j]; }

  std::span<const double> values() const noexcept { return rho_; }
  std::span<double> values() noexcept { return rho_; }
  const std::vector<double>& vector() const noexcept { return rho_; }

  double sum() const noexcept;
  double squared_norm() const noexcept;

  bool operator==(const DensityField&) const = default;

 private:
  std::vector<double> rho_;
};

/// Throws DomainError if any entry is outside [0, R).
void validate_density(const DensityField& rho, const FundamentalDiagram& fd);

/// Boundary fluxes available to the first and last interfaces, veh/s.
struct BoundaryFlows {
  double inflow_demand = 0.0;
  double outflow_supply = 0.0;
};

double flux(double rho, const FundamentalDiagram& fd);
double equilibrium_speed(double rho, const FundamentalDiagram& fd);
double demand(double rho, const FundamentalDiagram& fd);
double supply(double rho, const FundamentalDiagram& fd);
double standard_interface_flux(double rho_up, double rho_down, const FundamentalDiagram& fd);

/// The free-flow density whose flux equals `demand_value` (clamped to capacity). Lets a boundary
/// demand stand in for an upstream ghost cell in formulas written in terms of densities.
double demand_equivalent_density(double demand_value, const FundamentalDiagram& fd);

/// Clamps round-off excursions of at most `tolerance` back into [0, R]; larger excursions and
/// NaNs raise NumericalError carrying the cell index.
void absorb_drift(std::span<double> rho, const FundamentalDiagram& fd, double tolerance = 1e-12);

}  // namespace cavflow
