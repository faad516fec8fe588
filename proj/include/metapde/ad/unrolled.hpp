#pragma once

#include <Eigen/Core>

#include <functional>
#include <vector>

namespace metapde::ad {

/// Loss, gradient and (when a direction is given) Hessian-vector product of
/// one scalar objective at a flat parameter vector.
struct Probe {
  double loss = 0.0;
  Eigen::VectorXd grad;
  Eigen::VectorXd hvp;
};

/// Objective used at unrolled step `step`: steps 0..K-1 are the inner losses,
/// step K is the meta-loss. Must be a pure function of (step, theta), so that
/// re-evaluating a step during the backward pass sees the same data.
using ProbeFn = std::function<Probe(int step, const Eigen::VectorXd& theta, const Eigen::VectorXd* direction)>;

/// g * min(1, max_norm / |g|). A non-positive max_norm disables clipping.
/// Returns true when the gradient was rescaled.
bool clip_by_norm(Eigen::VectorXd& g, double max_norm);

/// Transposed Jacobian of clip_by_norm at `g`, applied to `w`.
Eigen::VectorXd clip_jacobian_t(const Eigen::VectorXd& g, double max_norm, const Eigen::VectorXd& w);

struct UnrolledOptions {
  double clip_norm = 0.0;
  /// Drop second-order terms: treats each inner gradient as a constant of
  /// theta. An approximation, not the exact meta-gradient.
  bool first_order = false;
};

struct UnrolledResult {
  double meta_loss = 0.0;
  std::vector<double> inner_losses;
  std::vector<Eigen::VectorXd> trajectory;  // theta^0 .. theta^K
  Eigen::VectorXd d_theta0;
  Eigen::MatrixXd d_alpha;  // K x P, row k for the step-k rates
};

/// Runs theta^{k+1} = theta^k - alpha_k .* clip(grad L_k(theta^k)) for the K
/// rows of `alpha`, then differentiates L_K(theta^K) with respect to theta^0
/// and alpha exactly. Instead of one graph spanning all K steps, the adjoint
/// is carried backwards step by step. The probe sees each inner step twice:
/// once going forward without a direction, then once going backward with one
/// (for the Hessian-vector product), at the same theta.
UnrolledResult unrolled_grad(const Eigen::VectorXd& theta0, const Eigen::MatrixXd& alpha, const ProbeFn& probe,
                             const UnrolledOptions& options = {});

}  // namespace metapde::ad
