#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "metapde/ad/unrolled.hpp"
#include "metapde/error.hpp"
#include "metapde/siren/siren.hpp"
#include "metapde/tasks/task.hpp"

namespace metapde::meta {

enum class Method { Maml, Leap };
const char* method_name(Method m);
Method parse_method(const std::string& name);

enum class OptimizerKind { Sgd, Adam };
const char* optimizer_name(OptimizerKind k);
OptimizerKind parse_optimizer(const std::string& name);

/// Adaptive-moment optimizer with bias correction.
struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  Adam(const AdamOptions& options, Eigen::Index size);

  /// x <- x - lr * mhat / (sqrt(vhat) + eps).
  void step(Eigen::Ref<Eigen::VectorXd> x, const Eigen::VectorXd& g);
  long steps() const { return t_; }
  const AdamOptions& options() const { return o_; }

 private:
  AdamOptions o_;
  Eigen::VectorXd m_, v_;
  long t_ = 0;
};

/// Learned quantities. For MAML `alpha` holds one rate per inner step and
/// parameter (K x P); for LEAP it is 1 x 1, the fixed inner learning rate.
struct MetaState {
  Method method = Method::Maml;
  siren::NetConfig net;
  siren::ParamVector theta0;
  Eigen::MatrixXd alpha;
  int inner_steps = 0;
  double clip_norm = 100.0;

  /// Throws ContractViolation on inconsistent dimensions.
  void validate() const;
  double leap_rate() const { return alpha(0, 0); }
};

/// Sitzmann-initialized state with every rate set to `inner_lr`.
MetaState initial_state(Method method, const siren::NetConfig& net, int inner_steps, double inner_lr,
                        double clip_norm, std::uint64_t seed);

struct MetaConfig {
  Method method = Method::Maml;
  tasks::TaskDistribution distribution;
  siren::NetConfig net;
  int inner_steps = 5;
  double inner_lr = 1e-4;
  double outer_lr = 1e-5;
  double clip_norm = 100.0;
  int batch_size = 8;
  int iterations = 0;
  /// Collocation points per task and step.
  int points = 2048;
  OptimizerKind inner_optimizer = OptimizerKind::Sgd;
  OptimizerKind outer_optimizer = OptimizerKind::Adam;
  std::uint64_t seed = 0;
  /// Held-out evaluation every this many iterations (and at both ends); 0
  /// evaluates only at the ends.
  int eval_every = 100;
  int heldout_tasks = 8;
  std::uint64_t heldout_seed = 1000003;

  void validate() const;
};

// ------------------------------------------------------------- objectives

/// PINN loss of one task as a ProbeFn. The batch for step k is the k-th draw
/// from the objective's generator, made on first use, so evaluations are a
/// pure function of (step, theta).
///
/// For steps below `keep_steps`, the tape built for a direction-free call is
/// kept; a later call at the same step and theta with a direction then reuses
/// its values and adjoints instead of rebuilding (the MAML backward pass).
class PinnObjective {
 public:
  PinnObjective(tasks::TaskSpec task, siren::NetConfig net, int points, std::uint64_t seed, int keep_steps = 0);
  ~PinnObjective();
  PinnObjective(const PinnObjective&) = delete;
  PinnObjective& operator=(const PinnObjective&) = delete;

  ad::Probe operator()(int step, const Eigen::VectorXd& theta, const Eigen::VectorXd* direction);
  /// Loss only (no reverse sweep).
  double loss(int step, const Eigen::VectorXd& theta);
  const tasks::CollocationBatch& batch(int step);
  const tasks::Task& task() const { return *task_; }

  ad::ProbeFn as_probe() {
    return [this](int k, const Eigen::VectorXd& t, const Eigen::VectorXd* d) { return (*this)(k, t, d); };
  }

 private:
  struct Tape;
  tasks::TaskSpec task_;
  siren::NetConfig net_;
  tasks::PointCounts counts_;
  tasks::Rng rng_;
  int keep_steps_;
  std::vector<tasks::CollocationBatch> batches_;
  std::vector<std::unique_ptr<Tape>> tapes_;
};

// ------------------------------------------------------------- adaptation

struct AdaptReport {
  std::vector<double> losses;          // loss before each update
  std::vector<double> grad_norms;      // unclipped gradient norm per step
  std::vector<char> clipped;           // 1 when the step's gradient was clipped
  std::vector<double> step_seconds;    // wall-clock per step
  std::vector<double> step_norms;      // |theta^{k+1} - theta^k|
  siren::ParamVector final_params;
  /// Loss at final_params on the next batch; NaN when not evaluated.
  double final_loss = 0.0;

  std::size_t steps() const { return losses.size(); }
};

/// Thrown when adaptation hits a non-finite loss or gradient; carries the
/// steps completed so far.
class AdaptFailure : public NumericalFailure {
 public:
  AdaptFailure(const std::string& what, AdaptReport partial)
      : NumericalFailure(what), report_(std::move(partial)) {}
  const AdaptReport& report() const { return report_; }

 private:
  AdaptReport report_;
};

struct AdaptOptions {
  /// Evaluate the loss after the last update (one more batch).
  bool final_loss = true;
};

/// `steps` updates from theta0. MAML applies theta -= alpha_k .* clip(g),
/// reusing the last row of alpha past step K; LEAP runs a fresh Adam with
/// the stored rate on the clipped gradients.
AdaptReport adapt(const MetaState& meta, const ad::ProbeFn& objective, int steps, const AdaptOptions& options = {});
AdaptReport adapt(const MetaState& meta, const tasks::TaskSpec& task, int steps, std::uint64_t seed, int points,
                  const AdaptOptions& options = {});

/// Sum over the trace of |theta^k - theta^{k-1}|^2 + (L^k - L^{k-1})^2.
double path_distance(std::span<const Eigen::VectorXd> thetas, std::span<const double> losses);
/// Same measure from an adaptation report; the final loss closes the trace.
double path_distance(const AdaptReport& report);

// ------------------------------------------------------------- outer steps

struct OuterOptimizer {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 0.0;
  Adam theta;
  Adam alpha;

  OuterOptimizer() = default;
  OuterOptimizer(OptimizerKind kind, double lr, const MetaState& state);
  void apply(Eigen::Ref<Eigen::VectorXd> x, const Eigen::VectorXd& g, bool is_alpha);
};

struct OuterStepReport {
  double meta_loss = 0.0;  // MAML: mean post-adaptation loss; LEAP: mean final inner loss
  double path_distance = 0.0;
  double grad_norm = 0.0;  // of the averaged theta0 meta-gradient, before clipping
  int used_tasks = 0;
  int failed_tasks = 0;
  bool skipped = false;
};

/// Exact MAML step over one objective per task (second order unless
/// `first_order`). Failing tasks are left out of the average; when all
/// fail the state is untouched and the report says `skipped`.
OuterStepReport maml_outer_step(MetaState& state, std::span<const ad::ProbeFn> objectives, OuterOptimizer& opt,
                                bool first_order = false);

/// LEAP step with the frozen pull-forward gradient
/// dg_k = -(dtheta_k + (L_k - L_{k-1}) grad L(theta^{k-1})), summed over the
/// K inner steps and averaged over tasks. Updates theta0 only.
OuterStepReport leap_outer_step(MetaState& state, std::span<const ad::ProbeFn> objectives, OuterOptimizer& opt,
                                OptimizerKind inner = OptimizerKind::Adam);

// -------------------------------------------------------------- training

struct LogEntry {
  int iteration = 0;
  double meta_loss = 0.0;     // NaN before the first outer step
  double heldout_loss = 0.0;  // NaN when not evaluated at this iteration
  double heldout_path = 0.0;  // mean held-out path_distance, NaN when not evaluated
  double elapsed = 0.0;       // seconds since training started
};

struct TrainResult {
  MetaState state;
  std::vector<LogEntry> log;
  int skipped_steps = 0;
  int failed_tasks = 0;
};

struct HeldoutResult {
  double mean_loss = 0.0;
  double mean_path = 0.0;
  std::vector<AdaptReport> reports;
};

/// Adapts `steps` steps on each held-out task of the configured distribution
/// and averages the post-adaptation losses.
HeldoutResult evaluate_heldout(const MetaState& state, const MetaConfig& cfg, int steps);

/// Held-out task i of a distribution; disjoint from training draws.
tasks::TaskSpec heldout_task(const MetaConfig& cfg, int i);
/// Seed of the collocation batches used when adapting on held-out task i.
std::uint64_t heldout_batch_seed(const MetaConfig& cfg, int i);

using LogSink = std::function<void(const LogEntry&)>;

/// Meta-training loop. `start` (if given) continues from an existing state.
TrainResult meta_train(const MetaConfig& cfg, const LogSink& sink = {}, const MetaState* start = nullptr);

/// Worker threads for per-task work, from METAPDE_THREADS (default 1).
int thread_count();

/// Mixes a base seed with a stream and index (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index);

}  // namespace metapde::meta
