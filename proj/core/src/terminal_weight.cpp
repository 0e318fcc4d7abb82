#include "cavflow/terminal_weight.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include "cavflow/errors.hpp"

namespace cavflow {

namespace {

Eigen::MatrixXd closed_loop_weight(int n, double q, double r, const Eigen::MatrixXd& K, double delta_q) {
  Eigen::MatrixXd w = (q + delta_q) * Eigen::MatrixXd::Identity(n, n);
  w += r * K.transpose() * K;
  return w;
}

}  // namespace

Eigen::VectorXd open_transition(const Eigen::VectorXd& rho, const Eigen::VectorXd& u, const FundamentalDiagram& fd,
                                const Grid& grid) {
  const int n = grid.num_cells();
  const double V = fd.free_speed, R = fd.jam_density, rs = fd.critical_density();
  const double s = std::sqrt(1.0 - fd.alpha());
  auto f = [&](double x) { return V * x * (1.0 - x / R); };
  auto dem = [&](double x) { return f(std::min(x, rs)); };
  auto sup = [&](double x) { return f(std::max(x, rs)); };

  std::vector<bool> host(n, false);
  std::vector<double> hat(n, 0.0), down(n, 0.0);
  for (int j = 0; j < n; ++j) {
    const double k = 2.0 * V * rho[j] / (fd.alpha() * R);
    if (u[j] == 0.0 || !(V - k * (1.0 + s) < u[j] && u[j] < V - k * (1.0 - s))) continue;
    host[j] = true;
    const double base = R * (V - u[j]) / (2.0 * V);
    hat[j] = base * (1.0 + s);
    const double check = base * (1.0 - s);
    const double d = std::clamp((rho[j] - hat[j]) / (check - hat[j]), 0.0, 1.0);
    const double dt_i = (1.0 - d) * grid.dx() / u[j];
    down[j] = dt_i <= grid.dt() ? (grid.dx() / grid.dt()) * (check - rho[j]) + f(hat[j]) : f(check);
  }
  std::vector<double> flux(n + 1, 0.0);
  for (int i = 0; i <= n; ++i) {
    const double send = i == 0 ? 0.0 : (host[i - 1] ? down[i - 1] : dem(rho[i - 1]));
    const double recv = i == n ? fd.capacity() : (host[i] ? sup(hat[i]) : sup(rho[i]));
    flux[i] = std::min(send, recv);
  }
  Eigen::VectorXd out(n);
  for (int j = 0; j < n; ++j) out[j] = rho[j] + grid.dt_over_dx() * (flux[j] - flux[j + 1]);
  return out;
}

double spectral_radius(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(m, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

Eigen::MatrixXd dlqr(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                     const Eigen::MatrixXd& R) {
  Eigen::MatrixXd P = Q;
  for (int it = 0; it < 100000; ++it) {
    const Eigen::MatrixXd G = (R + B.transpose() * P * B).ldlt().solve(B.transpose() * P * A);
    const Eigen::MatrixXd next = Q + A.transpose() * P * (A - B * G);
    const double change = (next - P).cwiseAbs().maxCoeff();
    P = 0.5 * (next + next.transpose());
    if (change < 1e-12 * std::max(1.0, P.cwiseAbs().maxCoeff())) break;
  }
  return -(R + B.transpose() * P * B).ldlt().solve(B.transpose() * P * A);
}

LinearizedSystem linearize(const FundamentalDiagram& fd, const Grid& grid, double q, double r, double step) {
  const int n = grid.num_cells();
  LinearizedSystem ls;
  ls.psi.resize(n, n);
  ls.delta.resize(n, n);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(n);
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    e[j] = step;
    ls.psi.col(j) = (open_transition(e, zero, fd, grid) - open_transition(-e, zero, fd, grid)) / (2.0 * step);
    ls.delta.col(j) = (open_transition(zero, e, fd, grid) - open_transition(zero, -e, fd, grid)) / (2.0 * step);
  }
  if (spectral_radius(ls.psi) < 1.0) {
    ls.K = Eigen::MatrixXd::Zero(n, n);
  } else {
    ls.K = dlqr(ls.psi, ls.delta, q * Eigen::MatrixXd::Identity(n, n), r * Eigen::MatrixXd::Identity(n, n));
  }
  ls.Z = ls.psi + ls.delta * ls.K;
  ls.spectral_radius_z = spectral_radius(ls.Z);
  if (!(ls.spectral_radius_z < 1.0)) {
    throw NumericalError(fmt::format("no stabilising feedback: spectral radius of the closed loop is {}",
                                     ls.spectral_radius_z), -1);
  }
  return ls;
}

Eigen::MatrixXd lyapunov_terminal(const Eigen::MatrixXd& Z, double q, double r, const Eigen::MatrixXd& K,
                                  double delta_q) {
  const auto n = static_cast<int>(Z.rows());
  Eigen::MatrixXd term = closed_loop_weight(n, q, r, K, delta_q);
  Eigen::MatrixXd H = term;
  for (int m = 1; m <= 1'000'000; ++m) {
    term = Z.transpose() * term * Z;
    H += term;
    if (term.cwiseAbs().maxCoeff() < 1e-12) return 0.5 * (H + H.transpose());
  }
  throw NumericalError("terminal weight series did not converge", -1);
}

double lyapunov_residual(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& H, double q, double r,
                         const Eigen::MatrixXd& K, double delta_q) {
  const auto n = static_cast<int>(Z.rows());
  const Eigen::MatrixXd res = Z.transpose() * H * Z - H + closed_loop_weight(n, q, r, K, delta_q);
  return res.cwiseAbs().rowwise().sum().maxCoeff();
}

Weights make_weights(const FundamentalDiagram& fd, const Grid& grid, const PlannerConfig& planner) {
  const LinearizedSystem ls = linearize(fd, grid, planner.q, planner.r);
  Weights w;
  w.q = planner.q;
  w.r = planner.r;
  w.delta_q = planner.delta_q;
  w.H = lyapunov_terminal(ls.Z, planner.q, planner.r, ls.K, planner.delta_q);
  w.h = w.H.diagonal().maxCoeff();
  return w;
}

}  // namespace cavflow
