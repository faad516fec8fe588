#include "metapde/ad/unrolled.hpp"

#include <cmath>

#include "metapde/error.hpp"

namespace metapde::ad {

bool clip_by_norm(Eigen::VectorXd& g, double max_norm) {
  if (max_norm <= 0) return false;
  const double n = g.norm();
  if (n <= max_norm) return false;
  g *= max_norm / n;
  return true;
}

// For |g| > C the clip map is C g/|g|, whose Jacobian (C/|g|)(I - g g^T/|g|^2)
// is symmetric.
Eigen::VectorXd clip_jacobian_t(const Eigen::VectorXd& g, double max_norm, const Eigen::VectorXd& w) {
  const double n = g.norm();
  if (max_norm <= 0 || n <= max_norm) return w;
  const Eigen::VectorXd e = g / n;
  return (max_norm / n) * (w - e * e.dot(w));
}

UnrolledResult unrolled_grad(const Eigen::VectorXd& theta0, const Eigen::MatrixXd& alpha, const ProbeFn& probe,
                             const UnrolledOptions& options) {
  const int K = static_cast<int>(alpha.rows());
  require(K == 0 || alpha.cols() == theta0.size(), "unrolled_grad: alpha must be K x P");

  UnrolledResult r;
  r.trajectory.reserve(static_cast<std::size_t>(K) + 1);
  r.trajectory.push_back(theta0);
  std::vector<Eigen::VectorXd> raw;  // unclipped inner gradients
  raw.reserve(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    const Eigen::VectorXd& th = r.trajectory.back();
    Probe p = probe(k, th, nullptr);
    if (!std::isfinite(p.loss) || !p.grad.allFinite()) throw NumericalFailure("non-finite inner gradient");
    r.inner_losses.push_back(p.loss);
    Eigen::VectorXd c = p.grad;
    clip_by_norm(c, options.clip_norm);
    r.trajectory.push_back(th - alpha.row(k).transpose().cwiseProduct(c));
    raw.push_back(std::move(p.grad));
  }

  Probe meta = probe(K, r.trajectory.back(), nullptr);
  if (!std::isfinite(meta.loss) || !meta.grad.allFinite()) throw NumericalFailure("non-finite meta-gradient");
  r.meta_loss = meta.loss;

  Eigen::VectorXd g = std::move(meta.grad);
  r.d_alpha.resize(K, theta0.size());
  for (int k = K - 1; k >= 0; --k) {
    const Eigen::VectorXd& gk = raw[static_cast<std::size_t>(k)];
    Eigen::VectorXd c = gk;
    clip_by_norm(c, options.clip_norm);
    r.d_alpha.row(k) = -(g.cwiseProduct(c)).transpose();
    if (options.first_order) continue;
    // theta^{k+1} = theta^k - alpha_k .* clip(grad L_k(theta^k))
    const Eigen::VectorXd u = clip_jacobian_t(gk, options.clip_norm, alpha.row(k).transpose().cwiseProduct(g));
    Probe p = probe(k, r.trajectory[static_cast<std::size_t>(k)], &u);
    if (!p.hvp.allFinite()) throw NumericalFailure("non-finite Hessian-vector product");
    g -= p.hvp;
  }
  r.d_theta0 = std::move(g);
  return r;
}

}  // namespace metapde::ad
