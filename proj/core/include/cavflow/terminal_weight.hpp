#pragma once

#include <Eigen/Dense>

#include "cavflow/config.hpp"
#include "cavflow/flow_model.hpp"

namespace cavflow {

struct LinearizedSystem {
  Eigen::MatrixXd psi;    // state Jacobian at the origin
  Eigen::MatrixXd delta;  // Jacobian with respect to the cell-indexed command vector
  Eigen::MatrixXd K;      // local feedback gain
  Eigen::MatrixXd Z;      // psi + delta*K
  double spectral_radius_z = 0.0;
};

struct Weights {
  double q = 0.5;
  double r = 1.0;
  double delta_q = 0.1;
  Eigen::MatrixXd H;
  double h = 0.0;  // largest diagonal entry of H
};

/// Closed-form transition without domain checks (zero inflow, full outflow supply), so it
/// can be differenced on both sides of the origin. `u` is the cell-indexed command vector.
Eigen::VectorXd open_transition(const Eigen::VectorXd& rho, const Eigen::VectorXd& u, const FundamentalDiagram& fd,
                                const Grid& grid);

double spectral_radius(const Eigen::MatrixXd& m);

/// Central differences of open_transition at the origin; K = 0 when psi is already Schur,
/// otherwise the discrete LQR gain for (qI, rI). Throws NumericalError if Z is not Schur.
LinearizedSystem linearize(const FundamentalDiagram& fd, const Grid& grid, double q, double r, double step = 1e-6);

/// Infinite-horizon cost matrix of the closed loop: sum over m of (Z^T)^m (Q* + dQ) Z^m.
Eigen::MatrixXd lyapunov_terminal(const Eigen::MatrixXd& Z, double q, double r, const Eigen::MatrixXd& K,
                                  double delta_q);

/// max-row-sum norm of Z^T H Z - H + Q* + dQ.
double lyapunov_residual(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& H, double q, double r,
                         const Eigen::MatrixXd& K, double delta_q);

/// Discrete LQR gain (u = K x) by Riccati iteration.
Eigen::MatrixXd dlqr(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                     const Eigen::MatrixXd& R);

Weights make_weights(const FundamentalDiagram& fd, const Grid& grid, const PlannerConfig& planner);

}  // namespace cavflow
