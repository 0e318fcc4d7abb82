#pragma once

#include <optional>
#include <span>
#include <vector>

#include "cavflow/flow_model.hpp"

namespace cavflow {

/// Densities immediately upstream (rho_hat) and downstream (rho_check) of a CAV driving at u.
struct Reconstruction {
  double rho_hat = 0.0;
  double rho_check = 0.0;
};

/// Open speed interval in which a CAV violates the capacity-reduction constraint.
struct GammaWindow {
  double gamma1 = 0.0;
  double gamma2 = 0.0;
};

/// d is the share of the cell already behind the CAV's queue; dt_i the time it needs to
/// reach the cell's downstream edge (+inf when u == 0).
struct Passage {
  double d_frac = 0.0;
  double dt_i = 0.0;
};

struct BottleneckFluxes {
  double up = 0.0;
  double down = 0.0;
};

/// Indicator flags of the case table: a = f(rho_prev) <= f(rho_hat), b = rho_hat <= rho*,
/// c = rho_prev <= rho*, d = dt_i <= dt.
struct CaseFlags {
  bool a = false;
  bool b = false;
  bool c = false;
  bool d = false;
};

/// Host-cell update split into the upstream (f2) and downstream (f3) contributions, so that
/// rho' = rho + f2 + f3.
struct CaseTableTerms {
  double f2 = 0.0;
  double f3 = 0.0;
  CaseFlags flags;
};

/// A CAV as seen by the density update: identity, position and commanded speed for this step.
struct CavPoint {
  int id = 0;
  double y = 0.0;
  double u = 0.0;
};

Reconstruction reconstruct_densities(double u, const FundamentalDiagram& fd);
GammaWindow gamma_bounds(double rho, const FundamentalDiagram& fd);
bool is_moving_bottleneck(double u, double rho, const FundamentalDiagram& fd);

/// Requires rho_hat != rho_check (throws DomainError otherwise).
Passage passage_fraction(double rho_cell, double u, const Reconstruction& recon, const Grid& grid);

/// Fluxes across the two interfaces of a cell hosting a moving bottleneck. Throws DomainError
/// when the predicate does not hold; callers should use standard_interface_flux instead.
BottleneckFluxes bottleneck_fluxes(double rho_prev, double rho_cell, double u, const FundamentalDiagram& fd,
                                   const Grid& grid);

/// Same as bottleneck_fluxes but with the upstream sending flow given directly (boundary cell).
BottleneckFluxes bottleneck_fluxes_from_demand(double upstream_demand, double rho_cell, double u,
                                               const FundamentalDiagram& fd, const Grid& grid);

/// Indicator-coefficient form of the host-cell update. For the first cell pass the
/// demand-equivalent ghost density as rho_prev.
CaseTableTerms case_table_terms(double rho_prev, double rho_cell, double u, const FundamentalDiagram& fd,
                                const Grid& grid);

/// Downstream-most CAV (largest y, lower id on ties) with u != 0 satisfying the predicate.
std::optional<int> select_bottleneck_cav(std::span<const CavPoint> cavs_in_cell, double rho_cell,
                                         const FundamentalDiagram& fd);

enum class FluxMode {
  consistent,     // one flux per interface shared by both neighbours; conserves mass
  paper_literal,  // only the host cell sees the reconstructed fluxes
};

/// Ingredients of one transition, rho' = rho + a_diag*o + b + c_u + interface_correction.
/// In paper-literal mode the correction is round-off; in consistent mode it carries the
/// neighbour adjustments that make interface fluxes single-valued.
struct SystemStep {
  std::vector<double> a_diag;
  std::vector<double> b;
  std::vector<double> c_u;
  std::vector<int> o;
  std::vector<std::optional<int>> owner;
  std::vector<double> interface_flux;  // num_cells + 1 entries, inflow first
  std::vector<double> interface_correction;
};

/// Reusable transition evaluator. Holds scratch buffers so repeated steps do not allocate.
class DensityStepper {
 public:
  DensityStepper(const FundamentalDiagram& fd, const Grid& grid, FluxMode mode = FluxMode::consistent);

  /// Writes the next field into `out` (may alias `rho`). CAVs outside [0, L) or with u == 0
  /// have no effect. Fills `detail` when non-null.
  void step(std::span<const double> rho, std::span<const CavPoint> cavs, const BoundaryFlows& bc,
            std::span<double> out, SystemStep* detail = nullptr);

  /// Interface fluxes of the last step. In paper-literal mode an interior interface can be seen
  /// differently by its two cells; the mean of both views is reported.
  std::span<const double> interface_flux() const noexcept { return iface_; }

  const FundamentalDiagram& fd() const noexcept { return fd_; }
  const Grid& grid() const noexcept { return grid_; }
  FluxMode mode() const noexcept { return mode_; }

 private:
  FundamentalDiagram fd_;
  Grid grid_;
  FluxMode mode_;
  double root_ = 0.0;  // sqrt(1 - alpha)
  std::vector<int> owner_idx_;
  std::vector<double> owner_y_;
  std::vector<double> owner_u_;
  std::vector<int> owner_id_;
  std::vector<double> rho_hat_;
  std::vector<double> f_down_;
  std::vector<double> iface_;
  std::vector<double> std_iface_;
  std::vector<double> next_;
};

DensityField density_step(const DensityField& rho, std::span<const CavPoint> cavs, const BoundaryFlows& bc,
                          const FundamentalDiagram& fd, const Grid& grid, FluxMode mode = FluxMode::consistent,
                          SystemStep* detail = nullptr);

}  // namespace cavflow
