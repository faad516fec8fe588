#pragma once

#include <functional>
#include <vector>

#include "metapde/meta/meta.hpp"

namespace metapde::meta::detail {

/// Parameters and raw gradients along one inner loop.
struct InnerTrace {
  std::vector<Eigen::VectorXd> thetas;  // theta^0 .. theta^steps
  std::vector<Eigen::VectorXd> grads;   // unclipped gradient at theta^k, k < steps
};

using LossFn = std::function<double(int step, const Eigen::VectorXd& theta)>;

/// The adaptation loop shared by adapt() and the LEAP outer step. LEAP runs
/// `leap_inner` at the stored rate. `final_fn` (if set) replaces a full probe
/// for the closing loss evaluation. Throws AdaptFailure.
AdaptReport run_inner(const MetaState& meta, OptimizerKind leap_inner, const ad::ProbeFn& probe,
                      const LossFn& final_fn, int steps, bool final_loss, InnerTrace* trace);

/// Runs f(0) .. f(n-1) on up to thread_count() workers. Exceptions are
/// rethrown in index order once all workers have finished.
void parallel_for(int n, const std::function<void(int)>& f);

}  // namespace metapde::meta::detail
