#include <cmath>
#include <numbers>
#include <random>

#include "metapde/error.hpp"
#include "metapde/oracles/oracles.hpp"

namespace metapde::oracles {

ad::Jet2<double> ManufacturedPoisson::jet(const Eigen::Vector2d& x) const {
  return eval(ad::seed(x[0], 0, 2, 2), ad::seed(x[1], 1, 2, 2));
}

double ManufacturedPoisson::source(const Eigen::Vector2d& x) const {
  // The residual with zero source is div((1 + 0.1 u^2) grad u).
  return tasks::poisson_residual(jet(x), 0.0);
}

std::shared_ptr<tasks::PoissonTask> ManufacturedPoisson::task() const {
  auto self = *this;
  return std::make_shared<tasks::PoissonTask>(
      domain, [self](const Eigen::Vector2d& x) { return self.source(x); },
      [self](const Eigen::Vector2d& x) { return self.u(x); });
}

ManufacturedPoisson ManufacturedPoisson::sample(std::uint64_t seed) {
  tasks::Rng rng(seed);
  ManufacturedPoisson m;
  std::uniform_real_distribution<double> Uc(-0.2, 0.2);
  m.domain.c1 = Uc(rng);
  m.domain.c2 = Uc(rng);
  m.domain.n_sources = 0;
  m.c0 = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
  m.A = std::uniform_real_distribution<double>(0.5, 1.0)(rng);
  m.k1 = std::uniform_real_distribution<double>(0.5, 1.5)(rng);
  m.k2 = std::uniform_real_distribution<double>(0.5, 1.5)(rng);
  m.phase = std::uniform_real_distribution<double>(0.0, 2 * std::numbers::pi)(rng);
  return m;
}

double ein(double z) {
  // Alternating series; converges quickly for the |z| <= 4 used here.
  require(std::abs(z) <= 20, "ein: argument out of the series' accurate range");
  double term = z, sum = z;
  for (int k = 2; k < 200; ++k) {
    term *= -z / k;  // (-1)^{k+1} z^k / k!
    const double add = term / k;
    sum += add;
    if (std::abs(add) < 1e-18 * std::max(1.0, std::abs(sum))) break;
  }
  return sum;
}

double kirchhoff_inverse(double w) {
  // u + u^3/30 is strictly increasing with slope >= 1.
  double u = w;
  for (int it = 0; it < 100; ++it) {
    const double f = u + u * u * u / 30.0 - w;
    const double step = f / (1.0 + 0.1 * u * u);
    u -= step;
    if (std::abs(step) <= 1e-16 * std::max(1.0, std::abs(u))) break;
  }
  return u;
}

RadialPoissonSolution::RadialPoissonSolution(const tasks::PoissonTaskParams& p) {
  require(p.c1 == 0 && p.c2 == 0, "RadialPoissonSolution: domain must be a disc");
  require(p.b[1] == 0 && p.b[2] == 0 && p.b[3] == 0 && p.b[4] == 0,
          "RadialPoissonSolution: boundary value must be constant");
  require(p.n_sources <= 1, "RadialPoissonSolution: at most one source");
  if (p.n_sources == 1) require(p.mu[0].norm() == 0, "RadialPoissonSolution: source must sit at the origin");
  r0_ = p.r0;
  beta_ = p.n_sources == 1 ? p.beta[0] : 0.0;
  const double b0 = p.b[0];
  wb_ = b0 + b0 * b0 * b0 / 30.0;
}

double RadialPoissonSolution::at_radius(double r) const {
  const double w = wb_ - 0.25 * beta_ * (ein(r0_ * r0_) - ein(r * r));
  return kirchhoff_inverse(w);
}

double RadialPoissonSolution::operator()(const Eigen::Vector2d& x) const { return at_radius(x.norm()); }

AffineElasticSolution affine_elastic_reference(const tasks::ElasticTaskParams& p, double l1, double l2, double area) {
  if (l1 * l2 <= 0) throw InputError("affine_elastic_reference: stretches must have a positive product");
  require(area > 0, "affine_elastic_reference: area must be positive");
  AffineElasticSolution s;
  s.F = Eigen::Vector2d(l1, l2).asDiagonal();
  s.psi = tasks::elastic_energy_density(s.F - Eigen::Matrix2d::Identity(), p.lambda, p.mu);
  s.energy = s.psi * area;
  return s;
}

double mse_eval(const Field& a, const Field& b, const DomainSampler& domain, int n, std::uint64_t seed) {
  require(n > 0, "mse_eval: n must be positive");
  tasks::Rng rng(seed);
  const Eigen::MatrixXd X = domain(rng, n);
  const Eigen::MatrixXd A = a(X), B = b(X);
  require(A.rows() == B.rows() && A.cols() == n && B.cols() == n, "mse_eval: field shapes differ");
  return (A - B).colwise().squaredNorm().mean();
}

}  // namespace metapde::oracles
