#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include "inner.hpp"

namespace metapde::meta {

struct PinnObjective::Tape {
  ad::Graph graph;
  siren::TapedParams params;
  ad::Var loss;
  ad::AdjointCache cache;
  Eigen::VectorXd theta;
};

PinnObjective::PinnObjective(tasks::TaskSpec task, siren::NetConfig net, int points, std::uint64_t seed,
                             int keep_steps)
    : task_(std::move(task)), net_(net), rng_(seed), keep_steps_(keep_steps) {
  require(task_ != nullptr, "PinnObjective: null task");
  counts_ = tasks::split_points(task_->family(), points);
}

PinnObjective::~PinnObjective() = default;

const tasks::CollocationBatch& PinnObjective::batch(int step) {
  require(step >= 0, "PinnObjective: negative step");
  while (batches_.size() <= static_cast<std::size_t>(step)) batches_.push_back(task_->sample_batch(rng_, counts_));
  return batches_[static_cast<std::size_t>(step)];
}

ad::Probe PinnObjective::operator()(int step, const Eigen::VectorXd& theta, const Eigen::VectorXd* direction) {
  require(theta.size() == net_.param_count(), "PinnObjective: parameter length mismatch");
  const auto slot = static_cast<std::size_t>(step);
  ad::Probe p;

  if (direction != nullptr && slot < tapes_.size() && tapes_[slot] != nullptr &&
      tapes_[slot]->theta.size() == theta.size() &&
      std::equal(theta.data(), theta.data() + theta.size(), tapes_[slot]->theta.data())) {
    std::unique_ptr<Tape> t = std::move(tapes_[slot]);
    siren::seed_param_tangents(t->graph, net_, t->params, *direction);
    const auto flat = t->params.flat();
    ad::GradHvp gh = ad::grad_hvp(t->graph, t->loss, flat, &t->cache);
    p.loss = t->loss.scalar();
    p.grad = std::move(gh.grad);
    p.hvp = std::move(gh.hvp);
    return p;
  }

  auto t = std::make_unique<Tape>();
  t->params = siren::tape_params(t->graph, net_, theta, direction);
  t->loss = tasks::build_loss(*task_, batch(step), net_, t->params).total;
  p.loss = t->loss.scalar();
  const auto flat = t->params.flat();
  if (direction != nullptr) {
    ad::GradHvp gh = ad::grad_hvp(t->graph, t->loss, flat);
    p.grad = std::move(gh.grad);
    p.hvp = std::move(gh.hvp);
    return p;
  }
  if (step >= keep_steps_) {
    p.grad = ad::grad(t->graph, t->loss, flat);
    return p;
  }
  p.grad = ad::grad(t->graph, t->loss, flat, &t->cache);
  t->theta = theta;
  if (tapes_.size() <= slot) tapes_.resize(slot + 1);
  tapes_[slot] = std::move(t);
  return p;
}

double PinnObjective::loss(int step, const Eigen::VectorXd& theta) {
  require(theta.size() == net_.param_count(), "PinnObjective: parameter length mismatch");
  ad::Graph g;
  const siren::TapedParams params = siren::tape_params(g, net_, theta);
  return tasks::build_loss(*task_, batch(step), net_, params).total.scalar();
}

namespace detail {

AdaptReport run_inner(const MetaState& meta, OptimizerKind leap_inner, const ad::ProbeFn& probe,
                      const LossFn& final_fn, int steps, bool final_loss, InnerTrace* trace) {
  require(steps >= 0, "adapt: negative step count");
  const bool maml = meta.method == Method::Maml;
  require(!maml || steps == 0 || meta.alpha.rows() > 0, "adapt: MAML state has no learned rates");
  using Clock = std::chrono::steady_clock;

  AdaptReport r;
  r.final_loss = std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd theta = meta.theta0;
  Adam adam;
  if (!maml && leap_inner == OptimizerKind::Adam) adam = Adam(AdamOptions{meta.leap_rate()}, theta.size());
  if (trace != nullptr) {
    trace->thetas.assign(1, theta);
    trace->grads.clear();
  }

  for (int k = 0; k < steps; ++k) {
    const auto start = Clock::now();
    ad::Probe p;
    try {
      p = probe(k, theta, nullptr);
    } catch (const NumericalFailure& e) {
      r.final_params = theta;
      throw AdaptFailure("adaptation step " + std::to_string(k) + ": " + e.what(), std::move(r));
    }
    if (!std::isfinite(p.loss) || !p.grad.allFinite()) {
      r.final_params = theta;
      throw AdaptFailure("adaptation step " + std::to_string(k) + ": non-finite loss or gradient", std::move(r));
    }
    const Eigen::VectorXd before = theta;
    Eigen::VectorXd g = p.grad;
    r.grad_norms.push_back(g.norm());
    r.clipped.push_back(ad::clip_by_norm(g, meta.clip_norm) ? 1 : 0);
    if (maml) {
      const Eigen::Index row = std::min<Eigen::Index>(k, meta.alpha.rows() - 1);
      theta -= meta.alpha.row(row).transpose().cwiseProduct(g);
    } else if (leap_inner == OptimizerKind::Adam) {
      adam.step(theta, g);
    } else {
      theta -= meta.leap_rate() * g;
    }
    r.losses.push_back(p.loss);
    r.step_norms.push_back((theta - before).norm());
    r.step_seconds.push_back(std::chrono::duration<double>(Clock::now() - start).count());
    if (trace != nullptr) {
      trace->grads.push_back(std::move(p.grad));
      trace->thetas.push_back(theta);
    }
  }

  r.final_params = theta;
  if (final_loss) {
    double L = 0.0;
    try {
      L = final_fn ? final_fn(steps, theta) : probe(steps, theta, nullptr).loss;
    } catch (const NumericalFailure& e) {
      throw AdaptFailure(std::string("final loss: ") + e.what(), std::move(r));
    }
    if (!std::isfinite(L)) throw AdaptFailure("final loss is not finite", std::move(r));
    r.final_loss = L;
  }
  return r;
}

}  // namespace detail

AdaptReport adapt(const MetaState& meta, const ad::ProbeFn& objective, int steps, const AdaptOptions& options) {
  meta.validate();
  return detail::run_inner(meta, OptimizerKind::Adam, objective, {}, steps, options.final_loss, nullptr);
}

AdaptReport adapt(const MetaState& meta, const tasks::TaskSpec& task, int steps, std::uint64_t seed, int points,
                  const AdaptOptions& options) {
  meta.validate();
  PinnObjective obj(task, meta.net, points, seed);
  const detail::LossFn final_fn = [&obj](int k, const Eigen::VectorXd& t) { return obj.loss(k, t); };
  return detail::run_inner(meta, OptimizerKind::Adam, obj.as_probe(), final_fn, steps, options.final_loss, nullptr);
}

double path_distance(std::span<const Eigen::VectorXd> thetas, std::span<const double> losses) {
  require(!thetas.empty() && thetas.size() == losses.size(), "path_distance: need a non-empty (theta, L) trace");
  double d = 0.0;
  for (std::size_t k = 1; k < thetas.size(); ++k) {
    const double dl = losses[k] - losses[k - 1];
    d += (thetas[k] - thetas[k - 1]).squaredNorm() + dl * dl;
  }
  return d;
}

double path_distance(const AdaptReport& report) {
  double d = 0.0;
  for (double s : report.step_norms) d += s * s;
  std::vector<double> L = report.losses;
  if (std::isfinite(report.final_loss)) L.push_back(report.final_loss);
  for (std::size_t k = 1; k < L.size(); ++k) d += (L[k] - L[k - 1]) * (L[k] - L[k - 1]);
  return d;
}

}  // namespace metapde::meta
