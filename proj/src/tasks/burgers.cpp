#include <cmath>
#include <numbers>
#include <sstream>

#include "metapde/error.hpp"
#include "metapde/tasks/task.hpp"

namespace metapde::tasks {

double BurgersTaskParams::initial(double x) const {
  constexpr double pi = std::numbers::pi;
  return std::sin(pi * x) + theta1 * std::sin(2 * pi * x) + theta2 * std::sin(4 * pi * x);
}

BurgersTask::BurgersTask(BurgersTaskParams p) : p_(p) {
  require(p_.nu > 0, "BurgersTask: viscosity must be positive");
  require(p_.T > 0, "BurgersTask: time horizon must be positive");
}

Eigen::MatrixXd BurgersTask::sample_interior(Rng& rng, int n) const {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Eigen::MatrixXd X(2, n);
  for (int i = 0; i < n; ++i) {
    X(0, i) = U(rng);
    // (0, T] rather than [0, T).
    X(1, i) = p_.T * (1.0 - U(rng));
  }
  return X;
}

Eigen::MatrixXd BurgersTask::sample_boundary(Rng& rng, int n) const {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Eigen::MatrixXd X(2, n);
  const int left = (n + 1) / 2;
  for (int i = 0; i < n; ++i) {
    X(0, i) = i < left ? 0.0 : 1.0;
    X(1, i) = p_.T * (1.0 - U(rng));
  }
  return X;
}

Eigen::MatrixXd BurgersTask::sample_initial(Rng& rng, int n) const {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Eigen::MatrixXd X(2, n);
  for (int i = 0; i < n; ++i) {
    X(0, i) = U(rng);
    X(1, i) = 0.0;
  }
  return X;
}

bool BurgersTask::in_interior(const Eigen::VectorXd& x) const {
  return x.size() == 2 && x[0] >= 0 && x[0] <= 1 && x[1] >= 0 && x[1] <= p_.T;
}

bool BurgersTask::on_boundary(const Eigen::VectorXd& x, double tol) const {
  return x.size() == 2 && (std::abs(x[0]) <= tol || std::abs(x[0] - 1) <= tol) && x[1] > 0 && x[1] <= p_.T;
}

LossTerms BurgersTask::build_loss(const siren::NetConfig& cfg, const siren::TapedParams& params,
                                  const CollocationBatch& batch) const {
  ad::Graph& g = params.weights.front().graph();
  static constexpr int kDirs[] = {0, 1};
  auto u = siren::forward_jets(cfg, params, batch.interior, kDirs, 1);
  ad::Var interior = ad::mean(ad::square(burgers_residual(u[0], p_.nu)));

  ad::Var boundary = ad::mean(ad::square(siren::forward_values(cfg, params, batch.boundary)));

  const Eigen::Index ni = batch.initial.cols();
  ad::Tensor u0(1, ni);
  for (Eigen::Index i = 0; i < ni; ++i) u0(0, i) = p_.initial(batch.initial(0, i));
  ad::Var ui = siren::forward_values(cfg, params, batch.initial);
  ad::Var initial = ad::mean(ad::square(ui - g.constant(std::move(u0))));

  LossTerms t;
  t.total = interior + boundary + initial;
  t.interior = interior.scalar();
  t.boundary = boundary.scalar();
  t.initial = initial.scalar();
  return t;
}

std::string BurgersTask::describe() const {
  std::ostringstream os;
  os.precision(17);
  os << "family = burgers\ntheta1 = " << p_.theta1 << "\ntheta2 = " << p_.theta2 << "\nnu = " << p_.nu
     << "\nT = " << p_.T << "\n";
  return os.str();
}

double burgers_residual(const siren::NetConfig& cfg, const siren::ParamVector& params, const Eigen::Vector2d& xt,
                        const BurgersTask& task) {
  static constexpr int kDirs[] = {0, 1};
  auto u = siren::spatial_jet(cfg, params, xt, kDirs);
  return burgers_residual(u[0], task.params().nu);
}

BurgersTaskParams sample_burgers_params(Rng& rng, Variant v) {
  double range = 0;
  if (v == Variant::Full) {
    range = 2.0;
  } else if (v == Variant::Narrow) {
    range = 0.5;
  } else {
    throw InputError(std::string("distribution '") + variant_name(v) + "' is not defined for burgers");
  }
  std::uniform_real_distribution<double> U(-range, range);
  BurgersTaskParams p;
  p.theta1 = U(rng);
  p.theta2 = U(rng);
  return p;
}

TaskSpec sample_burgers_task(std::uint64_t seed, Variant v) {
  Rng rng(seed);
  return std::make_shared<BurgersTask>(sample_burgers_params(rng, v));
}

}  // namespace metapde::tasks
