#include <algorithm>
#include <atomic>
#include <exception>
#include <optional>
#include <thread>

#include "inner.hpp"

namespace metapde::meta {

namespace detail {

void parallel_for(int n, const std::function<void(int)>& f) {
  const int workers = std::min(thread_count(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  auto work = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        f(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace detail

namespace {

Eigen::Map<Eigen::VectorXd> flat(Eigen::MatrixXd& m) { return {m.data(), m.size()}; }

}  // namespace

OuterStepReport maml_outer_step(MetaState& state, std::span<const ad::ProbeFn> objectives, OuterOptimizer& opt,
                                bool first_order) {
  state.validate();
  require(state.method == Method::Maml, "maml_outer_step: state is not a MAML state");
  require(!objectives.empty(), "maml_outer_step: no tasks");
  const int n = static_cast<int>(objectives.size());

  std::vector<std::optional<ad::UnrolledResult>> results(static_cast<std::size_t>(n));
  const ad::UnrolledOptions uo{state.clip_norm, first_order};
  detail::parallel_for(n, [&](int i) {
    try {
      results[static_cast<std::size_t>(i)] =
          ad::unrolled_grad(state.theta0, state.alpha, objectives[static_cast<std::size_t>(i)], uo);
    } catch (const NumericalFailure&) {
    }
  });

  OuterStepReport rep;
  Eigen::VectorXd g0 = Eigen::VectorXd::Zero(state.theta0.size());
  Eigen::MatrixXd ga = Eigen::MatrixXd::Zero(state.alpha.rows(), state.alpha.cols());
  for (auto& r : results) {
    if (!r) {
      ++rep.failed_tasks;
      continue;
    }
    ++rep.used_tasks;
    g0 += r->d_theta0;
    ga += r->d_alpha;
    rep.meta_loss += r->meta_loss;
    std::vector<double> L = r->inner_losses;
    L.push_back(r->meta_loss);
    rep.path_distance += path_distance(r->trajectory, L);
  }
  if (rep.used_tasks == 0) {
    rep.skipped = true;
    return rep;
  }
  const double inv = 1.0 / rep.used_tasks;
  g0 *= inv;
  ga *= inv;
  rep.meta_loss *= inv;
  rep.path_distance *= inv;
  rep.grad_norm = g0.norm();

  ad::clip_by_norm(g0, state.clip_norm);
  opt.apply(state.theta0, g0, false);
  if (ga.size() > 0) {
    Eigen::VectorXd gav = flat(ga);
    ad::clip_by_norm(gav, state.clip_norm);
    opt.apply(flat(state.alpha), gav, true);
  }
  return rep;
}

OuterStepReport leap_outer_step(MetaState& state, std::span<const ad::ProbeFn> objectives, OuterOptimizer& opt,
                                OptimizerKind inner) {
  state.validate();
  require(state.method == Method::Leap, "leap_outer_step: state is not a LEAP state");
  require(!objectives.empty(), "leap_outer_step: no tasks");
  const int n = static_cast<int>(objectives.size());
  const int K = state.inner_steps;

  struct TaskOut {
    Eigen::VectorXd g;
    double loss = 0.0;
    double path = 0.0;
  };
  std::vector<std::optional<TaskOut>> results(static_cast<std::size_t>(n));
  detail::parallel_for(n, [&](int i) {
    detail::InnerTrace tr;
    AdaptReport r;
    try {
      r = detail::run_inner(state, inner, objectives[static_cast<std::size_t>(i)], {}, K, true, &tr);
    } catch (const NumericalFailure&) {
      return;
    }
    TaskOut out;
    out.g = Eigen::VectorXd::Zero(state.theta0.size());
    std::vector<double> L = r.losses;
    L.push_back(r.final_loss);
    for (int k = 1; k <= K; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      out.g -= (tr.thetas[ku] - tr.thetas[ku - 1]) + (L[ku] - L[ku - 1]) * tr.grads[ku - 1];
    }
    out.loss = r.final_loss;
    out.path = path_distance(tr.thetas, L);
    results[static_cast<std::size_t>(i)] = std::move(out);
  });

  OuterStepReport rep;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(state.theta0.size());
  for (auto& r : results) {
    if (!r) {
      ++rep.failed_tasks;
      continue;
    }
    ++rep.used_tasks;
    g += r->g;
    rep.meta_loss += r->loss;
    rep.path_distance += r->path;
  }
  if (rep.used_tasks == 0) {
    rep.skipped = true;
    return rep;
  }
  const double inv = 1.0 / rep.used_tasks;
  g *= inv;
  rep.meta_loss *= inv;
  rep.path_distance *= inv;
  rep.grad_norm = g.norm();
  ad::clip_by_norm(g, state.clip_norm);
  opt.apply(state.theta0, g, false);
  return rep;
}

}  // namespace metapde::meta
