#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>

#include "metapde/ad/graph.hpp"
#include "metapde/ad/jet.hpp"
#include "metapde/siren/siren.hpp"

namespace metapde::tasks {

using Rng = std::mt19937_64;

enum class Family { Poisson, Burgers, Elasticity };
const char* family_name(Family f);
/// Throws InputError on unknown names.
Family parse_family(const std::string& name);

/// Sampled points, one per column (input_dim rows). `initial` is used only by
/// time-dependent tasks.
struct CollocationBatch {
  Eigen::MatrixXd interior;
  Eigen::MatrixXd boundary;
  Eigen::MatrixXd initial;
};

struct PointCounts {
  int interior = 0;
  int boundary = 0;
  int initial = 0;
};

/// Splits a per-task point budget: 80% interior and 20% boundary, with the
/// 20% halved between boundary and initial points for time-dependent tasks.
PointCounts split_points(Family family, int total);

/// Scalar loss node plus its parts (for logging).
struct LossTerms {
  ad::Var total;
  double interior = 0.0;
  double boundary = 0.0;
  double initial = 0.0;
  /// Interior points where the deformation inverted (elasticity only).
  int inversions = 0;
};

/// One PDE instance: samplers for its domain and boundary, plus the operators
/// that turn network outputs into residuals. Immutable once built.
class Task {
 public:
  virtual ~Task() = default;
  virtual Family family() const = 0;
  virtual int input_dim() const = 0;
  virtual int output_dim() const = 0;
  virtual bool time_dependent() const { return false; }

  virtual Eigen::MatrixXd sample_interior(Rng& rng, int n) const = 0;
  virtual Eigen::MatrixXd sample_boundary(Rng& rng, int n) const = 0;
  virtual Eigen::MatrixXd sample_initial(Rng& rng, int n) const;

  virtual bool in_interior(const Eigen::VectorXd& x) const = 0;
  virtual bool on_boundary(const Eigen::VectorXd& x, double tol = 1e-9) const = 0;

  /// Monte Carlo training loss on the tape that holds `params`.
  virtual LossTerms build_loss(const siren::NetConfig& cfg, const siren::TapedParams& params,
                               const CollocationBatch& batch) const = 0;

  /// Task parameters as `key = value` lines.
  virtual std::string describe() const = 0;

  CollocationBatch sample_batch(Rng& rng, const PointCounts& counts) const;
};

using TaskSpec = std::shared_ptr<const Task>;

/// Free-function form of Task::build_loss; checks that no bucket is empty.
LossTerms build_loss(const Task& task, const CollocationBatch& batch, const siren::NetConfig& cfg,
                     const siren::TapedParams& params);

// ---------------------------------------------------------------- Poisson

/// Star-shaped domain r(t) = r0 [1 + c1 cos 4t + c2 cos 8t], source
/// f = sum beta_i exp(-|x - mu_i|^2), boundary data
/// b = b0 + b1 cos t + b2 sin t + b3 cos 2t + b4 sin 2t.
struct PoissonTaskParams {
  double c1 = 0.0;
  double c2 = 0.0;
  double r0 = 1.0;
  int n_sources = 3;
  std::array<double, 3> beta{};
  std::array<Eigen::Vector2d, 3> mu{Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero()};
  std::array<double, 5> b{};

  double radius(double angle) const;
  double source(const Eigen::Vector2d& x) const;
  double boundary_value(double angle) const;
};

/// (1 + 0.1 u^2) lap u + 0.2 u |grad u|^2 - f, the expanded divergence form.
template <class T>
T poisson_residual(const ad::Jet2<T>& u, const T& f) {
  const T lap = u.dd[0] + u.dd[1];
  const T grad2 = u.d[0] * u.d[0] + u.d[1] * u.d[1];
  return (1.0 + 0.1 * (u.v * u.v)) * lap + 0.2 * (u.v * grad2) - f;
}

class PoissonTask : public Task {
 public:
  using Field = std::function<double(const Eigen::Vector2d&)>;

  explicit PoissonTask(PoissonTaskParams p);
  /// Same domain, custom source and boundary data (manufactured solutions).
  PoissonTask(PoissonTaskParams p, Field source, Field boundary);

  Family family() const override { return Family::Poisson; }
  int input_dim() const override { return 2; }
  int output_dim() const override { return 1; }
  Eigen::MatrixXd sample_interior(Rng& rng, int n) const override;
  Eigen::MatrixXd sample_boundary(Rng& rng, int n) const override;
  bool in_interior(const Eigen::VectorXd& x) const override;
  bool on_boundary(const Eigen::VectorXd& x, double tol = 1e-9) const override;
  LossTerms build_loss(const siren::NetConfig& cfg, const siren::TapedParams& params,
                       const CollocationBatch& batch) const override;
  std::string describe() const override;

  const PoissonTaskParams& params() const { return p_; }
  double source(const Eigen::Vector2d& x) const;
  double boundary_value(const Eigen::Vector2d& x) const;

 private:
  PoissonTaskParams p_;
  Field source_;
  Field boundary_;
};

/// Residual of the network at one interior point.
double poisson_residual(const siren::NetConfig& cfg, const siren::ParamVector& params, const Eigen::Vector2d& x,
                        const PoissonTask& task);

// ---------------------------------------------------------------- Burgers

/// u_t + u u_x - nu u_xx = 0 on (0,1) x (0,T], u(0,t) = u(1,t) = 0,
/// u(x,0) = sin(pi x) + theta1 sin(2 pi x) + theta2 sin(4 pi x).
struct BurgersTaskParams {
  double theta1 = 0.0;
  double theta2 = 0.0;
  double nu = 0.01;
  double T = 1.0;

  double initial(double x) const;
};

/// Jet directions are (x, t); only x carries a second derivative.
template <class T>
T burgers_residual(const ad::Jet2<T>& u, double nu) {
  return u.d[1] + u.v * u.d[0] - nu * u.dd[0];
}

class BurgersTask : public Task {
 public:
  explicit BurgersTask(BurgersTaskParams p);

  Family family() const override { return Family::Burgers; }
  int input_dim() const override { return 2; }
  int output_dim() const override { return 1; }
  bool time_dependent() const override { return true; }
  /// Points (x, t) with x in (0,1), t in (0,T].
  Eigen::MatrixXd sample_interior(Rng& rng, int n) const override;
  /// n points (x, t): the first half on x = 0, the rest on x = 1, each with
  /// its own sampled time.
  Eigen::MatrixXd sample_boundary(Rng& rng, int n) const override;
  /// Points (x, 0).
  Eigen::MatrixXd sample_initial(Rng& rng, int n) const override;
  bool in_interior(const Eigen::VectorXd& x) const override;
  bool on_boundary(const Eigen::VectorXd& x, double tol = 1e-9) const override;
  LossTerms build_loss(const siren::NetConfig& cfg, const siren::TapedParams& params,
                       const CollocationBatch& batch) const override;
  std::string describe() const override;

  const BurgersTaskParams& params() const { return p_; }

 private:
  BurgersTaskParams p_;
};

double burgers_residual(const siren::NetConfig& cfg, const siren::ParamVector& params, const Eigen::Vector2d& xt,
                        const BurgersTask& task);

// ------------------------------------------------------------- Elasticity

/// Unit reference square with a 2x2 lattice of pores, compressed from the top.
/// In affine mode the square is solid and every edge carries u = (F - I) X
/// with F = diag(stretch1, stretch2).
struct ElasticTaskParams {
  double phi0 = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double L0 = 0.5;
  double lambda = 1.5;
  double mu = 1.0;
  double delta = 0.1;
  bool affine = false;
  double stretch1 = 1.0;
  double stretch2 = 1.0;
  /// Weight of the Dirichlet mismatch term relative to the mean energy.
  double boundary_weight = 1.0;

  /// r0 = L0 sqrt(2 phi0) / sqrt(pi (2 + c1^2 + c2^2)); the pore area then
  /// equals phi0 L0^2, so the void fraction of the square is phi0.
  double pore_r0() const;
  double pore_radius(double angle) const;
  std::array<Eigen::Vector2d, 4> pore_centers() const;
  /// True when every pore fits inside its L0 x L0 cell.
  bool pores_fit() const;
  bool in_pore(const Eigen::Vector2d& X) const;
};

/// Energy assigned to an inverted point (J <= 0) before the gradient term.
inline constexpr double kInversionPenalty = 1e3;

/// Neo-Hookean energy 0.5 lambda ln(J)^2 - mu ln(J) + 0.5 mu (Ic - 2) with
/// F = I + grad u. Inverted deformations (J <= 0) get
/// kInversionPenalty * (1 + (1 - J)^2) instead, which keeps a gradient back
/// towards J > 0.
double elastic_energy_density(const Eigen::Matrix2d& grad_u, double lambda, double mu, bool* inverted = nullptr);

class ElasticTask : public Task {
 public:
  /// Throws InputError when the pores do not fit in their cells.
  explicit ElasticTask(ElasticTaskParams p);

  Family family() const override { return Family::Elasticity; }
  int input_dim() const override { return 2; }
  int output_dim() const override { return 2; }
  Eigen::MatrixXd sample_interior(Rng& rng, int n) const override;
  /// Dirichlet boundary points. Compression: n points split between the
  /// bottom and top edges plus the two bottom corners. Affine: n points
  /// spread over all four edges.
  Eigen::MatrixXd sample_boundary(Rng& rng, int n) const override;
  bool in_interior(const Eigen::VectorXd& x) const override;
  bool on_boundary(const Eigen::VectorXd& x, double tol = 1e-9) const override;
  LossTerms build_loss(const siren::NetConfig& cfg, const siren::TapedParams& params,
                       const CollocationBatch& batch) const override;
  std::string describe() const override;

  const ElasticTaskParams& params() const { return p_; }
  double solid_area() const { return 1.0 - (p_.affine ? 0.0 : p_.phi0); }

  /// Dirichlet data at a boundary point: which components are prescribed and
  /// their values.
  struct Dirichlet {
    bool fix1 = false;
    bool fix2 = false;
    double g1 = 0.0;
    double g2 = 0.0;
  };
  Dirichlet dirichlet(const Eigen::Vector2d& X) const;

 private:
  ElasticTaskParams p_;
};

/// Energy density of the network displacement at one point.
double elastic_energy_density(const siren::NetConfig& cfg, const siren::ParamVector& params,
                              const Eigen::Vector2d& X, const ElasticTask& task, bool* inverted = nullptr);

// ---------------------------------------------------------- distributions

enum class Variant {
  Full,        // the complete distribution for the family
  Narrow,      // reduced range used for desk-scale experiments
  ShapeStudy,  // elasticity: phi0 = 0.5, pore shape c1, c2 ~ U(-0.4, 0.4)
  Affine,      // elasticity: solid square, affine Dirichlet data
};
const char* variant_name(Variant v);
Variant parse_variant(const std::string& name);

struct TaskDistribution {
  Family family = Family::Poisson;
  Variant variant = Variant::Full;
  /// Template for elasticity tasks (material constants, compression,
  /// boundary weight, affine stretches); the sampled fields are overwritten.
  ElasticTaskParams elastic;

  /// Deterministic in `seed`.
  TaskSpec sample(std::uint64_t seed) const;
};

PoissonTaskParams sample_poisson_params(Rng& rng, Variant v);
BurgersTaskParams sample_burgers_params(Rng& rng, Variant v);
ElasticTaskParams sample_elastic_params(Rng& rng, Variant v, const ElasticTaskParams& base);

TaskSpec sample_poisson_task(std::uint64_t seed, Variant v = Variant::Full);
TaskSpec sample_burgers_task(std::uint64_t seed, Variant v = Variant::Full);
TaskSpec sample_elastic_task(std::uint64_t seed, Variant v = Variant::Full, const ElasticTaskParams& base = {});

}  // namespace metapde::tasks
