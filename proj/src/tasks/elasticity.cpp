#include <cmath>
#include <numbers>
#include <sstream>

#include "metapde/error.hpp"
#include "metapde/tasks/task.hpp"

namespace metapde::tasks {

namespace {

constexpr double kEdgeTol = 1e-12;

template <class T>
T neo_hookean(const T& lnJ, const T& Ic, double lambda, double mu) {
  return 0.5 * lambda * (lnJ * lnJ) - mu * lnJ + 0.5 * mu * (Ic - 2.0);
}

}  // namespace

double ElasticTaskParams::pore_r0() const {
  return L0 * std::sqrt(2 * phi0) / std::sqrt(std::numbers::pi * (2 + c1 * c1 + c2 * c2));
}

double ElasticTaskParams::pore_radius(double t) const {
  return pore_r0() * (1.0 + c1 * std::cos(4 * t) + c2 * std::cos(8 * t));
}

std::array<Eigen::Vector2d, 4> ElasticTaskParams::pore_centers() const {
  const double a = 0.5 - 0.5 * L0, b = 0.5 + 0.5 * L0;
  return {Eigen::Vector2d(a, a), Eigen::Vector2d(b, a), Eigen::Vector2d(a, b), Eigen::Vector2d(b, b)};
}

bool ElasticTaskParams::pores_fit() const {
  if (affine || phi0 == 0.0) return true;
  // Scan the pore outline against its cell [-L0/2, L0/2]^2.
  const double half = 0.5 * L0;
  constexpr int kSteps = 4096;
  for (int i = 0; i < kSteps; ++i) {
    const double t = 2 * std::numbers::pi * i / kSteps;
    const double r = pore_radius(t);
    if (r <= 0 || std::abs(r * std::cos(t)) >= half || std::abs(r * std::sin(t)) >= half) return false;
  }
  return true;
}

bool ElasticTaskParams::in_pore(const Eigen::Vector2d& X) const {
  if (affine || phi0 == 0.0) return false;
  for (const auto& c : pore_centers()) {
    const Eigen::Vector2d d = X - c;
    if (d.norm() < pore_radius(std::atan2(d[1], d[0]))) return true;
  }
  return false;
}

double elastic_energy_density(const Eigen::Matrix2d& grad_u, double lambda, double mu, bool* inverted) {
  const Eigen::Matrix2d F = Eigen::Matrix2d::Identity() + grad_u;
  const double J = F(0, 0) * F(1, 1) - F(0, 1) * F(1, 0);
  if (inverted) *inverted = J <= 0;
  if (J <= 0) return kInversionPenalty * (1.0 + (1.0 - J) * (1.0 - J));
  return neo_hookean(std::log(J), F.squaredNorm(), lambda, mu);
}

ElasticTask::ElasticTask(ElasticTaskParams p) : p_(p) {
  require(p_.lambda > 0 && p_.mu > 0, "ElasticTask: material constants must be positive");
  require(p_.boundary_weight > 0, "ElasticTask: boundary weight must be positive");
  if (p_.affine) {
    if (p_.stretch1 * p_.stretch2 <= 0) throw InputError("affine stretches must have a positive product");
  } else {
    require(p_.phi0 >= 0 && p_.phi0 <= 0.75, "ElasticTask: porosity must lie in [0, 0.75]");
    if (!p_.pores_fit()) throw InputError("pores overflow their lattice cells; task rejected");
  }
}

Eigen::MatrixXd ElasticTask::sample_interior(Rng& rng, int n) const {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Eigen::MatrixXd X(2, n);
  for (int i = 0; i < n;) {
    const Eigen::Vector2d x(U(rng), U(rng));
    if (p_.in_pore(x)) continue;
    X.col(i++) = x;
  }
  return X;
}

Eigen::MatrixXd ElasticTask::sample_boundary(Rng& rng, int n) const {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Eigen::MatrixXd X(2, n);
  if (p_.affine) {
    for (int i = 0; i < n; ++i) {
      const double s = U(rng);
      switch (i % 4) {
        case 0: X.col(i) << s, 0.0; break;
        case 1: X.col(i) << 1.0, s; break;
        case 2: X.col(i) << s, 1.0; break;
        default: X.col(i) << 0.0, s; break;
      }
    }
    return X;
  }
  require(n >= 4, "sample_boundary: need at least 4 points");
  // Two bottom corners pin the rigid horizontal translation.
  X.col(0) << 0.0, 0.0;
  X.col(1) << 1.0, 0.0;
  const int rest = n - 2;
  for (int i = 0; i < rest; ++i) X.col(2 + i) << U(rng), (i < rest / 2 ? 0.0 : 1.0);
  return X;
}

bool ElasticTask::in_interior(const Eigen::VectorXd& x) const {
  return x.size() == 2 && x[0] >= 0 && x[0] <= 1 && x[1] >= 0 && x[1] <= 1 && !p_.in_pore(x);
}

bool ElasticTask::on_boundary(const Eigen::VectorXd& x, double tol) const {
  if (x.size() != 2 || x[0] < -tol || x[0] > 1 + tol || x[1] < -tol || x[1] > 1 + tol) return false;
  const bool bottom_top = std::abs(x[1]) <= tol || std::abs(x[1] - 1) <= tol;
  if (!p_.affine) return bottom_top;
  return bottom_top || std::abs(x[0]) <= tol || std::abs(x[0] - 1) <= tol;
}

ElasticTask::Dirichlet ElasticTask::dirichlet(const Eigen::Vector2d& X) const {
  Dirichlet d;
  if (p_.affine) {
    d.fix1 = d.fix2 = true;
    d.g1 = (p_.stretch1 - 1) * X[0];
    d.g2 = (p_.stretch2 - 1) * X[1];
    return d;
  }
  if (std::abs(X[1] - 1) <= kEdgeTol) {
    d.fix2 = true;
    d.g2 = -p_.delta;
  } else if (std::abs(X[1]) <= kEdgeTol) {
    d.fix2 = true;
    d.fix1 = std::abs(X[0]) <= kEdgeTol || std::abs(X[0] - 1) <= kEdgeTol;
  }
  return d;
}

LossTerms ElasticTask::build_loss(const siren::NetConfig& cfg, const siren::TapedParams& params,
                                  const CollocationBatch& batch) const {
  ad::Graph& g = params.weights.front().graph();
  static constexpr int kDirs[] = {0, 1};
  auto u = siren::forward_jets(cfg, params, batch.interior, kDirs, 0);
  ad::Var F11 = u[0].d[0] + 1.0, F12 = u[0].d[1];
  ad::Var F21 = u[1].d[0], F22 = u[1].d[1] + 1.0;
  ad::Var J = F11 * F22 - F12 * F21;
  ad::Var Ic = F11 * F11 + F12 * F12 + F21 * F21 + F22 * F22;

  // Inverted points take the penalty branch; log only sees J > 0.
  const ad::Tensor& Jv = J.value();
  ad::Tensor ok = (Jv.array() > 0).cast<double>().matrix();
  const int inversions = static_cast<int>(Jv.size() - ok.sum());
  ad::Var energy;
  if (inversions == 0) {
    energy = neo_hookean(ad::log(J), Ic, p_.lambda, p_.mu);
  } else {
    ad::Tensor bad = (1.0 - ok.array()).matrix();
    ad::Var okv = g.constant(ok), badv = g.constant(bad);
    ad::Var Jsafe = J * okv + badv;
    ad::Var psi = neo_hookean(ad::log(Jsafe), Ic, p_.lambda, p_.mu);
    ad::Var pen = kInversionPenalty * (1.0 + ad::square(1.0 - J));
    energy = psi * okv + pen * badv;
  }
  ad::Var interior = ad::mean(energy);

  const Eigen::Index nb = batch.boundary.cols();
  ad::Tensor mask = ad::Tensor::Zero(2, nb), target = ad::Tensor::Zero(2, nb);
  for (Eigen::Index i = 0; i < nb; ++i) {
    const Dirichlet d = dirichlet(batch.boundary.col(i));
    mask(0, i) = d.fix1;
    mask(1, i) = d.fix2;
    target(0, i) = d.g1;
    target(1, i) = d.g2;
  }
  const double constraints = mask.sum();
  require(constraints > 0, "build_loss: no Dirichlet constraint among the boundary points");
  ad::Var ub = siren::forward_values(cfg, params, batch.boundary);
  ad::Var mismatch = ad::dot(ad::square(ub - g.constant(std::move(target))), g.constant(std::move(mask))) *
                     (1.0 / constraints);

  LossTerms t;
  t.total = interior + p_.boundary_weight * mismatch;
  t.interior = interior.scalar();
  t.boundary = mismatch.scalar();
  t.inversions = inversions;
  return t;
}

std::string ElasticTask::describe() const {
  std::ostringstream os;
  os.precision(17);
  os << "family = elasticity\n";
  if (p_.affine) {
    os << "affine = true\nstretch1 = " << p_.stretch1 << "\nstretch2 = " << p_.stretch2 << "\n";
  } else {
    os << "phi0 = " << p_.phi0 << "\nc1 = " << p_.c1 << "\nc2 = " << p_.c2 << "\nL0 = " << p_.L0
       << "\ndelta = " << p_.delta << "\n";
  }
  os << "lambda = " << p_.lambda << "\nmu = " << p_.mu << "\nboundary_weight = " << p_.boundary_weight << "\n";
  return os.str();
}

double elastic_energy_density(const siren::NetConfig& cfg, const siren::ParamVector& params,
                              const Eigen::Vector2d& X, const ElasticTask& task, bool* inverted) {
  static constexpr int kDirs[] = {0, 1};
  auto u = siren::spatial_jet(cfg, params, X, kDirs);
  Eigen::Matrix2d G;
  G << u[0].d[0], u[0].d[1], u[1].d[0], u[1].d[1];
  return elastic_energy_density(G, task.params().lambda, task.params().mu, inverted);
}

ElasticTaskParams sample_elastic_params(Rng& rng, Variant v, const ElasticTaskParams& base) {
  ElasticTaskParams p = base;
  switch (v) {
    case Variant::Full: {
      p.affine = false;
      p.c1 = p.c2 = 0.0;
      p.phi0 = std::uniform_real_distribution<double>(0.0, 0.75)(rng);
      return p;
    }
    case Variant::Narrow: {
      p.affine = false;
      p.c1 = p.c2 = 0.0;
      p.phi0 = std::uniform_real_distribution<double>(0.0, 0.25)(rng);
      return p;
    }
    case Variant::ShapeStudy: {
      p.affine = false;
      p.phi0 = 0.5;
      std::uniform_real_distribution<double> U(-0.4, 0.4);
      // Shapes whose pores leave their cell are redrawn.
      for (int attempt = 0; attempt < 10000; ++attempt) {
        p.c1 = U(rng);
        p.c2 = U(rng);
        if (p.pores_fit()) return p;
      }
      throw NumericalFailure("could not draw a pore shape that fits its cell");
    }
    case Variant::Affine: {
      p.affine = true;
      p.phi0 = p.c1 = p.c2 = 0.0;
      std::uniform_real_distribution<double> U(0.9, 1.1);
      p.stretch1 = U(rng);
      p.stretch2 = U(rng);
      return p;
    }
  }
  throw ContractViolation("unknown variant");
}

TaskSpec sample_elastic_task(std::uint64_t seed, Variant v, const ElasticTaskParams& base) {
  Rng rng(seed);
  return std::make_shared<ElasticTask>(sample_elastic_params(rng, v, base));
}

}  // namespace metapde::tasks
