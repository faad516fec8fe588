#include <algorithm>
#include <cmath>
#include <numbers>

#include "metapde/error.hpp"
#include "metapde/oracles/oracles.hpp"

namespace metapde::oracles {

double godunov_flux(double uL, double uR) {
  if (uL <= uR) {
    // Rarefaction: minimum of u^2/2 over [uL, uR].
    if (uL <= 0.0 && uR >= 0.0) return 0.0;
    return 0.5 * std::min(uL * uL, uR * uR);
  }
  // Shock: maximum of u^2/2 over [uR, uL].
  return 0.5 * std::max(uL * uL, uR * uR);
}

double stable_dt(const FvGrid& grid, double safety) {
  const double umax = grid.u.size() ? grid.u.cwiseAbs().maxCoeff() : 0.0;
  double dt = grid.dx * grid.dx / (2 * grid.nu);
  if (umax > 0) dt = std::min(dt, grid.dx / umax);
  return safety * dt;
}

Eigen::VectorXd fv_rhs(const Eigen::VectorXd& u, double dx, double nu, double* boundary) {
  const Eigen::Index n = u.size();
  Eigen::VectorXd r(n);
  const double inv_dx = 1.0 / dx, diff = nu / (dx * dx);
  double f_left = godunov_flux(0.0, u[0]);  // wall flux at x = 0
  const double f_wall_left = f_left;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double um = i > 0 ? u[i - 1] : 0.0;
    const double up = i + 1 < n ? u[i + 1] : 0.0;
    const double f_right = godunov_flux(u[i], up);
    r[i] = -(f_right - f_left) * inv_dx + diff * (up - 2 * u[i] + um);
    f_left = f_right;
  }
  if (boundary) *boundary = f_wall_left - f_left - nu * (u[0] + u[n - 1]) * inv_dx;
  return r;
}

FvGrid fv_step(const FvGrid& grid, double* boundary_mass) {
  require(grid.nx > 0 && grid.u.size() == grid.nx, "fv_step: malformed grid");
  require(grid.dt > 0, "fv_step: dt must be positive");
  require(grid.dt <= stable_dt(grid) * (1 + 1e-12), "fv_step: CFL condition violated");
  const double dt = grid.dt;
  double b0 = 0, b1 = 0, b2 = 0;
  const Eigen::VectorXd& u = grid.u;
  Eigen::VectorXd u1 = u + dt * fv_rhs(u, grid.dx, grid.nu, &b0);
  Eigen::VectorXd u2 = 0.75 * u + 0.25 * (u1 + dt * fv_rhs(u1, grid.dx, grid.nu, &b1));
  FvGrid out = grid;
  out.u = (1.0 / 3.0) * u + (2.0 / 3.0) * (u2 + dt * fv_rhs(u2, grid.dx, grid.nu, &b2));
  out.t = grid.t + dt;
  if (boundary_mass) *boundary_mass = dt * (b0 + b1 + 4 * b2) / 6.0;
  return out;
}

FvGrid burgers_initial_grid(const tasks::BurgersTaskParams& p, int nx) {
  require(nx >= 1, "burgers_initial_grid: nx must be positive");
  FvGrid g;
  g.nx = nx;
  g.dx = 1.0 / nx;
  g.nu = p.nu;
  g.u.resize(nx);
  constexpr double pi = std::numbers::pi;
  // Exact cell average of sin(k pi x): (cos(k pi a) - cos(k pi b)) / (k pi dx).
  auto avg = [&](double k, double a, double b) { return (std::cos(k * pi * a) - std::cos(k * pi * b)) / (k * pi * g.dx); };
  for (int i = 0; i < nx; ++i) {
    const double a = i * g.dx, b = (i + 1) * g.dx;
    g.u[i] = avg(1, a, b) + p.theta1 * avg(2, a, b) + p.theta2 * avg(4, a, b);
  }
  return g;
}

BurgersReference::BurgersReference(int nx, std::vector<double> times, Eigen::MatrixXd snapshots)
    : nx_(nx), times_(std::move(times)), snaps_(std::move(snapshots)) {
  require(times_.size() >= 2 && snaps_.rows() == static_cast<Eigen::Index>(times_.size()) && snaps_.cols() == nx_,
          "BurgersReference: inconsistent snapshots");
}

Eigen::VectorXd BurgersReference::cell_centers() const {
  return Eigen::VectorXd::LinSpaced(nx_, 0.5 / nx_, 1.0 - 0.5 / nx_);
}

double BurgersReference::operator()(double x, double t) const {
  const double dx = 1.0 / nx_;
  x = std::clamp(x, 0.0, 1.0);
  t = std::clamp(t, times_.front(), times_.back());
  const double span = times_.back() - times_.front();
  const auto last = static_cast<Eigen::Index>(times_.size()) - 1;
  Eigen::Index j = std::min<Eigen::Index>(last - 1, static_cast<Eigen::Index>((t - times_.front()) / span * last));
  const double wt = (t - times_[static_cast<std::size_t>(j)]) / (times_[static_cast<std::size_t>(j + 1)] - times_[static_cast<std::size_t>(j)]);

  // Nodes are the cell centres plus the two walls, where u = 0.
  auto at = [&](Eigen::Index row) {
    const double s = x / dx - 0.5;
    if (s < 0) return snaps_(row, 0) * (x / (0.5 * dx));
    if (s > nx_ - 1) return snaps_(row, nx_ - 1) * ((1.0 - x) / (0.5 * dx));
    const Eigen::Index i = std::min<Eigen::Index>(nx_ - 2, static_cast<Eigen::Index>(s));
    const double w = s - i;
    return (1 - w) * snaps_(row, i) + w * snaps_(row, i + 1);
  };
  if (nx_ == 1) return (1 - wt) * snaps_(j, 0) + wt * snaps_(j + 1, 0);
  return (1 - wt) * at(j) + wt * at(j + 1);
}

BurgersReference solve_burgers_reference(const tasks::BurgersTaskParams& p, int nx, double t_end, int n_snapshots) {
  require(nx >= 16, "solve_burgers_reference: nx must be >= 16");
  require(t_end > 0 && n_snapshots >= 2, "solve_burgers_reference: need t_end > 0 and two snapshots");
  FvGrid g = burgers_initial_grid(p, nx);
  std::vector<double> times(static_cast<std::size_t>(n_snapshots));
  Eigen::MatrixXd snaps(n_snapshots, nx);
  snaps.row(0) = g.u.transpose();
  times[0] = 0.0;
  for (int j = 1; j < n_snapshots; ++j) {
    const double target = t_end * j / (n_snapshots - 1);
    times[static_cast<std::size_t>(j)] = target;
    while (g.t < target) {
      g.dt = std::min(stable_dt(g), target - g.t);
      if (target - (g.t + g.dt) < 1e-14 * t_end) g.dt = target - g.t;
      g = fv_step(g);
      if (!g.u.allFinite() || g.u.cwiseAbs().maxCoeff() > 1e3) {
        throw NumericalFailure("Burgers reference solution blew up at t = " + std::to_string(g.t));
      }
    }
    g.t = target;
    snaps.row(j) = g.u.transpose();
  }
  return BurgersReference(nx, std::move(times), std::move(snaps));
}

}  // namespace metapde::oracles
