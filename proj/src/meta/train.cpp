#include <chrono>
#include <cmath>
#include <limits>

#include "inner.hpp"

namespace metapde::meta {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Seed streams; training and held-out draws never share one.
enum Stream : std::uint64_t { kTrainTask = 1, kTrainBatch = 2, kHeldoutTask = 3, kHeldoutBatch = 4 };

}  // namespace

tasks::TaskSpec heldout_task(const MetaConfig& cfg, int i) {
  return cfg.distribution.sample(derive_seed(cfg.heldout_seed, kHeldoutTask, static_cast<std::uint64_t>(i)));
}

std::uint64_t heldout_batch_seed(const MetaConfig& cfg, int i) {
  return derive_seed(cfg.heldout_seed, kHeldoutBatch, static_cast<std::uint64_t>(i));
}

HeldoutResult evaluate_heldout(const MetaState& state, const MetaConfig& cfg, int steps) {
  const int n = cfg.heldout_tasks;
  HeldoutResult h;
  h.reports.resize(static_cast<std::size_t>(n));
  detail::parallel_for(n, [&](int i) {
    auto& out = h.reports[static_cast<std::size_t>(i)];
    try {
      out = adapt(state, heldout_task(cfg, i), steps, heldout_batch_seed(cfg, i), cfg.points);
    } catch (const AdaptFailure& e) {
      out = e.report();
      out.final_loss = kNaN;
    }
  });
  for (const auto& r : h.reports) {
    h.mean_loss += r.final_loss;
    h.mean_path += path_distance(r);
  }
  h.mean_loss /= n;
  h.mean_path /= n;
  return h;
}

TrainResult meta_train(const MetaConfig& cfg, const LogSink& sink, const MetaState* start) {
  cfg.validate();
  TrainResult res;
  if (start != nullptr) {
    start->validate();
    if (start->method != cfg.method || !(start->net == cfg.net) || start->inner_steps != cfg.inner_steps) {
      throw InputError("starting state does not match the training configuration");
    }
    res.state = *start;
  } else {
    res.state = initial_state(cfg.method, cfg.net, cfg.inner_steps, cfg.inner_lr, cfg.clip_norm, cfg.seed);
  }
  MetaState& state = res.state;
  OuterOptimizer opt(cfg.outer_optimizer, cfg.outer_lr, state);

  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  auto log = [&](int it, double meta_loss, bool evaluate) {
    LogEntry e{it, meta_loss, kNaN, kNaN, 0.0};
    if (evaluate) {
      const HeldoutResult h = evaluate_heldout(state, cfg, cfg.inner_steps);
      e.heldout_loss = h.mean_loss;
      e.heldout_path = h.mean_path;
    }
    e.elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
    res.log.push_back(e);
    if (sink) sink(e);
  };

  log(0, kNaN, true);
  const bool maml = cfg.method == Method::Maml;
  for (int it = 1; it <= cfg.iterations; ++it) {
    std::vector<std::unique_ptr<PinnObjective>> objs;
    std::vector<ad::ProbeFn> probes;
    for (int i = 0; i < cfg.batch_size; ++i) {
      const auto idx = static_cast<std::uint64_t>(it - 1) * static_cast<std::uint64_t>(cfg.batch_size) +
                       static_cast<std::uint64_t>(i);
      objs.push_back(std::make_unique<PinnObjective>(cfg.distribution.sample(derive_seed(cfg.seed, kTrainTask, idx)),
                                                     cfg.net, cfg.points, derive_seed(cfg.seed, kTrainBatch, idx),
                                                     maml ? cfg.inner_steps : 0));
      probes.push_back(objs.back()->as_probe());
    }
    const OuterStepReport rep =
        maml ? maml_outer_step(state, probes, opt) : leap_outer_step(state, probes, opt, cfg.inner_optimizer);
    res.failed_tasks += rep.failed_tasks;
    if (rep.skipped) ++res.skipped_steps;
    const bool evaluate = it == cfg.iterations || (cfg.eval_every > 0 && it % cfg.eval_every == 0);
    log(it, rep.skipped ? kNaN : rep.meta_loss, evaluate);
  }
  return res;
}

}  // namespace metapde::meta
