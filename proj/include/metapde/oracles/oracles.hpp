#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "metapde/ad/jet.hpp"
#include "metapde/tasks/task.hpp"

namespace metapde::oracles {

// ------------------------------------------------------------ Burgers FV

/// Exact Riemann (Godunov) flux for f(u) = u^2 / 2.
double godunov_flux(double uL, double uR);

/// Cell averages of u on (0,1) with Dirichlet u = 0 ghost cells.
struct FvGrid {
  int nx = 0;
  double dx = 0.0;
  Eigen::VectorXd u;
  double nu = 0.01;
  double dt = 0.0;
  double t = 0.0;
};

inline constexpr double kCflSafety = 0.4;

/// safety * min(dx / max|u|, dx^2 / (2 nu)).
double stable_dt(const FvGrid& grid, double safety = kCflSafety);

/// Semi-discrete right-hand side -(F_{i+1/2} - F_{i-1/2})/dx + nu (u_{i+1} - 2u_i + u_{i-1})/dx^2.
/// When `boundary` is non-null it receives the rate at which mass enters
/// through the two walls, so that sum(rhs) * dx == *boundary.
Eigen::VectorXd fv_rhs(const Eigen::VectorXd& u, double dx, double nu, double* boundary = nullptr);

/// One SSP-RK3 (Shu-Osher) step of size grid.dt:
///   u1 = u + dt L(u)
///   u2 = 3/4 u + 1/4 (u1 + dt L(u1))
///   u' = 1/3 u + 2/3 (u2 + dt L(u2))
/// `boundary_mass` receives dt (L_b(u) + L_b(u1) + 4 L_b(u2)) / 6, the mass
/// that entered through the walls during the step.
FvGrid fv_step(const FvGrid& grid, double* boundary_mass = nullptr);

/// Grid initialized with exact cell averages of the task's initial condition.
FvGrid burgers_initial_grid(const tasks::BurgersTaskParams& p, int nx);

/// Snapshots of an FV run on a uniform time grid; queries interpolate
/// bilinearly between cell centres (and the u = 0 walls) and snapshots.
class BurgersReference {
 public:
  BurgersReference(int nx, std::vector<double> times, Eigen::MatrixXd snapshots);
  double operator()(double x, double t) const;
  int nx() const { return nx_; }
  const std::vector<double>& times() const { return times_; }
  /// Row j holds the cell averages at times()[j].
  const Eigen::MatrixXd& snapshots() const { return snaps_; }
  Eigen::VectorXd cell_centers() const;

 private:
  int nx_;
  std::vector<double> times_;
  Eigen::MatrixXd snaps_;
};

/// Integrates to t_end with CFL-adaptive steps, landing exactly on each of
/// `n_snapshots` uniformly spaced times (including 0 and t_end).
/// Throws NumericalFailure when |u| exceeds 1e3.
BurgersReference solve_burgers_reference(const tasks::BurgersTaskParams& p, int nx, double t_end,
                                         int n_snapshots = 201);

// ----------------------------------------------------------- Poisson

/// Closed-form solution u* = c0 + A sin(k1 x1 + phase) cos(k2 x2) on a
/// star-shaped domain. The source f* = div((1 + 0.1 u*^2) grad u*) is formed
/// from exact second-order jets of u*; boundary data is u* itself.
struct ManufacturedPoisson {
  tasks::PoissonTaskParams domain;
  double c0 = 0.0;
  double A = 1.0;
  double k1 = 1.0;
  double k2 = 1.0;
  double phase = 0.0;

  template <class T>
  T eval(const T& x1, const T& x2) const {
    using std::cos;
    using std::sin;
    return c0 + A * (sin(k1 * x1 + phase) * cos(k2 * x2));
  }

  double u(const Eigen::Vector2d& x) const { return eval(x[0], x[1]); }
  ad::Jet2<double> jet(const Eigen::Vector2d& x) const;
  double source(const Eigen::Vector2d& x) const;
  std::shared_ptr<tasks::PoissonTask> task() const;

  /// Random instance; the domain follows the full Poisson shape distribution.
  static ManufacturedPoisson sample(std::uint64_t seed);
};

/// Ein(z) = sum_{k>=1} (-1)^{k+1} z^k / (k k!), the entire exponential integral.
double ein(double z);

/// Exact solution of a radially symmetric nonlinear Poisson task (disc of
/// radius r0, one RBF source beta exp(-|x|^2) at the origin, constant
/// boundary value b0). With the Kirchhoff variable w = u + u^3/30 the
/// equation becomes lap w = f, so
///   w(r) = w(r0) - (beta/4) (Ein(r0^2) - Ein(r^2)),
/// and u follows from the monotone cubic.
class RadialPoissonSolution {
 public:
  /// Throws ContractViolation unless the task is radially symmetric.
  explicit RadialPoissonSolution(const tasks::PoissonTaskParams& p);
  double operator()(const Eigen::Vector2d& x) const;
  double at_radius(double r) const;

 private:
  double r0_, beta_, wb_;
};

/// Inverts w = u + u^3/30.
double kirchhoff_inverse(double w);

// -------------------------------------------------------- Elasticity

struct AffineElasticSolution {
  Eigen::Matrix2d F = Eigen::Matrix2d::Identity();
  double psi = 0.0;     // energy density of F
  double energy = 0.0;  // psi * area
  Eigen::Vector2d displacement(const Eigen::Vector2d& X) const { return (F - Eigen::Matrix2d::Identity()) * X; }
};

/// Affine map u = (F - I) X with F = diag(l1, l2) on a domain of the given
/// area. Throws InputError when l1 * l2 <= 0.
AffineElasticSolution affine_elastic_reference(const tasks::ElasticTaskParams& p, double l1, double l2,
                                               double area = 1.0);

// -------------------------------------------------------------- MSE

/// Batched field: points (dim x n) -> values (components x n).
using Field = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;
using DomainSampler = std::function<Eigen::MatrixXd(tasks::Rng&, int)>;

/// Mean over n sampled points of the squared Euclidean difference of A and B.
double mse_eval(const Field& a, const Field& b, const DomainSampler& domain, int n = 1024, std::uint64_t seed = 0);

}  // namespace metapde::oracles
