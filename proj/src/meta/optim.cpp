#include <cmath>
#include <cstdlib>
#include <string>

#include "metapde/meta/meta.hpp"

namespace metapde::meta {

const char* method_name(Method m) { return m == Method::Maml ? "maml" : "leap"; }

Method parse_method(const std::string& name) {
  if (name == "maml") return Method::Maml;
  if (name == "leap") return Method::Leap;
  throw InputError("unknown method '" + name + "' (expected maml or leap)");
}

const char* optimizer_name(OptimizerKind k) { return k == OptimizerKind::Sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "adam") return OptimizerKind::Adam;
  throw InputError("unknown optimizer '" + name + "' (expected sgd or adam)");
}

Adam::Adam(const AdamOptions& options, Eigen::Index size)
    : o_(options), m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)) {}

void Adam::step(Eigen::Ref<Eigen::VectorXd> x, const Eigen::VectorXd& g) {
  require(g.size() == m_.size() && x.size() == m_.size(), "Adam: size mismatch");
  ++t_;
  m_ = o_.beta1 * m_ + (1.0 - o_.beta1) * g;
  v_ = o_.beta2 * v_ + (1.0 - o_.beta2) * g.cwiseAbs2();
  const double c1 = 1.0 - std::pow(o_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(o_.beta2, static_cast<double>(t_));
  x.array() -= o_.lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + o_.eps);
}

void MetaState::validate() const {
  net.validate();
  require(theta0.size() == net.param_count(), "MetaState: theta0 does not match the network");
  require(inner_steps >= 0, "MetaState: negative inner step count");
  require(clip_norm > 0, "MetaState: clip_norm must be positive");
  if (method == Method::Maml) {
    require(alpha.rows() == inner_steps && alpha.cols() == theta0.size(), "MetaState: MAML alpha must be K x P");
  } else {
    require(alpha.rows() == 1 && alpha.cols() == 1, "MetaState: LEAP alpha must be 1 x 1");
  }
}

MetaState initial_state(Method method, const siren::NetConfig& net, int inner_steps, double inner_lr,
                        double clip_norm, std::uint64_t seed) {
  MetaState s;
  s.method = method;
  s.net = net;
  s.theta0 = siren::init_siren(net, seed);
  s.inner_steps = inner_steps;
  s.clip_norm = clip_norm;
  if (method == Method::Maml) {
    s.alpha = Eigen::MatrixXd::Constant(inner_steps, s.theta0.size(), inner_lr);
  } else {
    s.alpha = Eigen::MatrixXd::Constant(1, 1, inner_lr);
  }
  s.validate();
  return s;
}

void MetaConfig::validate() const {
  net.validate();
  if (inner_steps < 0) throw InputError("inner_steps must be >= 0");
  if (!(outer_lr > 0)) throw InputError("outer_lr must be > 0");
  if (!(clip_norm > 0)) throw InputError("clip_norm must be > 0");
  if (batch_size < 1) throw InputError("batch_size must be >= 1");
  if (iterations < 0) throw InputError("iterations must be >= 0");
  if (points < 10) throw InputError("points must be >= 10");
  if (eval_every < 0) throw InputError("eval_every must be >= 0");
  if (heldout_tasks < 1) throw InputError("heldout_tasks must be >= 1");
  if (method == Method::Maml && inner_optimizer != OptimizerKind::Sgd) {
    throw InputError("MAML learns per-step rates and needs the sgd inner optimizer");
  }
  const int out = distribution.family == tasks::Family::Elasticity ? 2 : 1;
  if (net.input_dim != 2 || net.output_dim != out) {
    throw InputError(std::string("network shape does not fit the ") + tasks::family_name(distribution.family) +
                     " family");
  }
}

OuterOptimizer::OuterOptimizer(OptimizerKind k, double learning_rate, const MetaState& state)
    : kind(k), lr(learning_rate) {
  if (kind == OptimizerKind::Adam) {
    theta = Adam(AdamOptions{lr}, state.theta0.size());
    alpha = Adam(AdamOptions{lr}, state.alpha.size());
  }
}

void OuterOptimizer::apply(Eigen::Ref<Eigen::VectorXd> x, const Eigen::VectorXd& g, bool is_alpha) {
  if (kind == OptimizerKind::Sgd) {
    x -= lr * g;
  } else {
    (is_alpha ? alpha : theta).step(x, g);
  }
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ stream) ^ index);
}

int thread_count() {
  const char* env = std::getenv("METAPDE_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || n < 1) throw InputError("METAPDE_THREADS must be a positive integer");
  return static_cast<int>(n);
}

}  // namespace metapde::meta
