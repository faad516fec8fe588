#include <cmath>
#include <numbers>
#include <sstream>

#include "metapde/error.hpp"
#include "metapde/tasks/task.hpp"

namespace metapde::tasks {

double PoissonTaskParams::radius(double t) const {
  return r0 * (1.0 + c1 * std::cos(4 * t) + c2 * std::cos(8 * t));
}

double PoissonTaskParams::source(const Eigen::Vector2d& x) const {
  double f = 0.0;
  for (int i = 0; i < n_sources; ++i) f += beta[static_cast<std::size_t>(i)] * std::exp(-(x - mu[static_cast<std::size_t>(i)]).squaredNorm());
  return f;
}

double PoissonTaskParams::boundary_value(double t) const {
  return b[0] + b[1] * std::cos(t) + b[2] * std::sin(t) + b[3] * std::cos(2 * t) + b[4] * std::sin(2 * t);
}

PoissonTask::PoissonTask(PoissonTaskParams p) : p_(p) {
  require(p_.r0 > 0 && std::abs(p_.c1) + std::abs(p_.c2) < 1, "PoissonTask: r(theta) must stay positive");
  require(p_.n_sources >= 0 && p_.n_sources <= 3, "PoissonTask: at most 3 sources");
}

PoissonTask::PoissonTask(PoissonTaskParams p, Field source, Field boundary)
    : PoissonTask(p) {
  source_ = std::move(source);
  boundary_ = std::move(boundary);
}

double PoissonTask::source(const Eigen::Vector2d& x) const { return source_ ? source_(x) : p_.source(x); }

double PoissonTask::boundary_value(const Eigen::Vector2d& x) const {
  return boundary_ ? boundary_(x) : p_.boundary_value(std::atan2(x[1], x[0]));
}

Eigen::MatrixXd PoissonTask::sample_interior(Rng& rng, int n) const {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const double R = p_.r0 * (1.0 + std::abs(p_.c1) + std::abs(p_.c2));
  Eigen::MatrixXd X(2, n);
  for (int i = 0; i < n;) {
    const double rr = R * std::sqrt(U(rng));
    const double t = 2 * std::numbers::pi * U(rng);
    if (rr > p_.radius(t)) continue;
    X(0, i) = rr * std::cos(t);
    X(1, i) = rr * std::sin(t);
    ++i;
  }
  return X;
}

Eigen::MatrixXd PoissonTask::sample_boundary(Rng& rng, int n) const {
  std::uniform_real_distribution<double> U(0.0, 2 * std::numbers::pi);
  Eigen::MatrixXd X(2, n);
  for (int i = 0; i < n; ++i) {
    const double t = U(rng);
    const double r = p_.radius(t);
    X(0, i) = r * std::cos(t);
    X(1, i) = r * std::sin(t);
  }
  return X;
}

bool PoissonTask::in_interior(const Eigen::VectorXd& x) const {
  return x.size() == 2 && x.norm() <= p_.radius(std::atan2(x[1], x[0]));
}

bool PoissonTask::on_boundary(const Eigen::VectorXd& x, double tol) const {
  return x.size() == 2 && std::abs(x.norm() - p_.radius(std::atan2(x[1], x[0]))) <= tol;
}

LossTerms PoissonTask::build_loss(const siren::NetConfig& cfg, const siren::TapedParams& params,
                                  const CollocationBatch& batch) const {
  ad::Graph& g = params.weights.front().graph();
  const Eigen::Index n = batch.interior.cols();
  const Eigen::Index nb = batch.boundary.cols();

  ad::Tensor f(1, n);
  for (Eigen::Index i = 0; i < n; ++i) f(0, i) = source(batch.interior.col(i));
  ad::Tensor b(1, nb);
  for (Eigen::Index i = 0; i < nb; ++i) b(0, i) = boundary_value(batch.boundary.col(i));

  static constexpr int kDirs[] = {0, 1};
  auto u = siren::forward_jets(cfg, params, batch.interior, kDirs, 2);
  ad::Var res = poisson_residual(u[0], g.constant(std::move(f)));
  ad::Var interior = ad::mean(ad::square(res));
  ad::Var ub = siren::forward_values(cfg, params, batch.boundary);
  ad::Var boundary = ad::mean(ad::square(ub - g.constant(std::move(b))));

  LossTerms t;
  t.total = interior + boundary;
  t.interior = interior.scalar();
  t.boundary = boundary.scalar();
  return t;
}

std::string PoissonTask::describe() const {
  std::ostringstream os;
  os.precision(17);
  os << "family = poisson\n";
  os << "c1 = " << p_.c1 << "\nc2 = " << p_.c2 << "\nr0 = " << p_.r0 << "\n";
  for (int i = 0; i < p_.n_sources; ++i) {
    const auto k = static_cast<std::size_t>(i);
    os << "beta" << i << " = " << p_.beta[k] << "\nmu" << i << " = " << p_.mu[k][0] << " " << p_.mu[k][1] << "\n";
  }
  for (int i = 0; i < 5; ++i) os << "b" << i << " = " << p_.b[static_cast<std::size_t>(i)] << "\n";
  if (source_ || boundary_) os << "custom_data = true\n";
  return os.str();
}

double poisson_residual(const siren::NetConfig& cfg, const siren::ParamVector& params, const Eigen::Vector2d& x,
                        const PoissonTask& task) {
  static constexpr int kDirs[] = {0, 1};
  auto u = siren::spatial_jet(cfg, params, x, kDirs);
  return poisson_residual(u[0], task.source(x));
}

PoissonTaskParams sample_poisson_params(Rng& rng, Variant v) {
  std::uniform_real_distribution<double> Uc(-0.2, 0.2), Ub(-1.0, 1.0);
  std::normal_distribution<double> N(0.0, 1.0);
  PoissonTaskParams p;
  switch (v) {
    case Variant::Full:
      p.c1 = Uc(rng);
      p.c2 = Uc(rng);
      for (auto& beta : p.beta) beta = N(rng);
      for (auto& mu : p.mu) {
        mu[0] = N(rng);
        mu[1] = N(rng);
      }
      for (auto& b : p.b) b = Ub(rng);
      return p;
    case Variant::Narrow:
      // Disc, single unit RBF at the origin, constant boundary value.
      p.n_sources = 1;
      p.beta[0] = 1.0;
      p.b[0] = Ub(rng);
      return p;
    default:
      throw InputError(std::string("distribution '") + variant_name(v) + "' is not defined for poisson");
  }
}

TaskSpec sample_poisson_task(std::uint64_t seed, Variant v) {
  Rng rng(seed);
  return std::make_shared<PoissonTask>(sample_poisson_params(rng, v));
}

}  // namespace metapde::tasks
