#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <limits>
#include <vector>

#include "metapde/meta/meta.hpp"

using namespace metapde;
using namespace metapde::meta;

namespace {

// Smallest network: 1 -> 1 -> 1, four parameters. The toy objectives below
// only look at theta, so the network merely fixes the parameter count.
const siren::NetConfig kTiny{1, 1, 1, 1, 3.0};

MetaState toy_state(Method m, std::vector<double> theta, Eigen::MatrixXd alpha, double clip = 100.0) {
  MetaState s;
  s.method = m;
  s.net = kTiny;
  s.theta0 = Eigen::Map<Eigen::VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size()));
  s.alpha = std::move(alpha);
  s.inner_steps = m == Method::Maml ? static_cast<int>(s.alpha.rows()) : 1;
  s.clip_norm = clip;
  return s;
}

// L = |theta - c|^2 (or a scaled half-norm), exact gradient and HVP.
ad::ProbeFn quadratic(Eigen::VectorXd c, double scale = 1.0) {
  return [c, scale](int, const Eigen::VectorXd& th, const Eigen::VectorXd* v) {
    ad::Probe p;
    p.loss = scale * (th - c).squaredNorm();
    p.grad = 2 * scale * (th - c);
    if (v) p.hvp = 2 * scale * *v;
    return p;
  };
}

// L = c . theta: constant gradient c.
ad::ProbeFn linear(Eigen::VectorXd c) {
  return [c](int, const Eigen::VectorXd& th, const Eigen::VectorXd* v) {
    ad::Probe p;
    p.loss = c.dot(th);
    p.grad = c;
    if (v) p.hvp = Eigen::VectorXd::Zero(th.size());
    return p;
  };
}

Eigen::VectorXd e0() { return Eigen::VectorXd::Unit(4, 0); }

siren::NetConfig small_poisson_net() { return siren::NetConfig{2, 1, 1, 8, 3.0}; }

struct EnvGuard {
  explicit EnvGuard(const char* value) { setenv("METAPDE_THREADS", value, 1); }
  ~EnvGuard() { unsetenv("METAPDE_THREADS"); }
};

}  // namespace

TEST_CASE("adam first step moves each coordinate by about lr") {
  Adam a(AdamOptions{0.1}, 3);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd g(3);
  g << 5.0, -0.01, 0.0;
  a.step(x, g);
  CHECK(x[0] == doctest::Approx(-0.1));
  CHECK(x[1] == doctest::Approx(0.1 * 0.01 / (0.01 + 1e-8)));
  CHECK(x[2] == 0.0);
  CHECK(a.steps() == 1);
}

TEST_CASE("adapt on scalar toys") {
  Eigen::MatrixXd a1 = Eigen::MatrixXd::Constant(1, 4, 0.1);
  const MetaState s = toy_state(Method::Maml, {1, 0, 0, 0}, a1);
  const auto L = quadratic(Eigen::VectorXd::Zero(4));

  SUBCASE("zero steps return theta0") {
    AdaptReport r = adapt(s, L, 0);
    CHECK(r.final_params == s.theta0);
    CHECK(r.steps() == 0);
    CHECK(r.final_loss == 1.0);
  }
  SUBCASE("one step of L = theta^2") {
    AdaptReport r = adapt(s, L, 1);
    CHECK(r.final_params[0] == doctest::Approx(0.8));
    CHECK(r.losses == std::vector<double>{1.0});
    CHECK(r.grad_norms[0] == doctest::Approx(2.0));
    CHECK(r.clipped[0] == 0);
    CHECK(r.final_loss == doctest::Approx(0.64));
    CHECK(r.step_seconds.size() == 1);
    CHECK(r.step_norms[0] == doctest::Approx(0.2));
  }
  SUBCASE("a gradient of norm 200 is halved before the update") {
    Eigen::VectorXd c(4);
    c << 120, 160, 0, 0;
    AdaptReport r = adapt(s, linear(c), 1);
    CHECK(r.grad_norms[0] == doctest::Approx(200));
    CHECK(r.clipped[0] == 1);
    const Eigen::VectorXd step = s.theta0 - r.final_params;
    CHECK((step - 0.1 * 0.5 * c).norm() == doctest::Approx(0.0));
    CHECK(step.norm() <= 0.1 * 100 + 1e-12);
  }
  SUBCASE("steps past K reuse the last rate row") {
    Eigen::MatrixXd a2(2, 4);
    a2.row(0).setConstant(0.1);
    a2.row(1).setConstant(0.2);
    const MetaState s2 = toy_state(Method::Maml, {1, 0, 0, 0}, a2);
    AdaptReport r = adapt(s2, L, 4);
    REQUIRE(r.steps() == 4);
    CHECK(r.grad_norms.size() == 4);
    CHECK(r.clipped.size() == 4);
    CHECK(r.step_seconds.size() == 4);
    CHECK(r.step_norms.size() == 4);
    CHECK(r.final_params[0] == doctest::Approx(0.8 * 0.6 * 0.6 * 0.6));
    CHECK(r.losses[3] == doctest::Approx(std::pow(0.8 * 0.6 * 0.6, 2)));
  }
  SUBCASE("LEAP adapts with Adam at the stored rate") {
    const MetaState sl = toy_state(Method::Leap, {1, 0, 0, 0}, Eigen::MatrixXd::Constant(1, 1, 0.1));
    AdaptReport r = adapt(sl, L, 1);
    CHECK(r.final_params[0] == doctest::Approx(0.9));
    CHECK(r.final_params[1] == 0.0);
  }
  SUBCASE("a NaN aborts and keeps the completed steps") {
    ad::ProbeFn bad = [&](int k, const Eigen::VectorXd& th, const Eigen::VectorXd* v) {
      ad::Probe p = L(k, th, v);
      if (k == 2) p.loss = std::numeric_limits<double>::quiet_NaN();
      return p;
    };
    try {
      adapt(s, bad, 5);
      FAIL("expected AdaptFailure");
    } catch (const AdaptFailure& e) {
      CHECK(e.report().steps() == 2);
      CHECK(e.report().final_params[0] == doctest::Approx(0.64));
    }
  }
}

TEST_CASE("path_distance") {
  std::vector<Eigen::VectorXd> th{Eigen::Vector2d(1, 1), Eigen::Vector2d(1, 1)};
  std::vector<double> L{2.0, 2.0};
  CHECK(path_distance(th, L) == 0.0);

  th = {Eigen::Vector2d(0, 0), Eigen::Vector2d(3, 4)};
  CHECK(path_distance(th, L) == doctest::Approx(25.0));
  th.push_back(th.back());
  L.push_back(L.back());
  CHECK(path_distance(th, L) == doctest::Approx(25.0));

  L = {1.0, 3.0, 3.0};
  CHECK(path_distance(th, L) == doctest::Approx(29.0));
  CHECK(path_distance(std::span(th).first(1), std::span(L).first(1)) == 0.0);
  CHECK_THROWS_AS(path_distance(std::span(th).first(0), std::span(L).first(0)), ContractViolation);

  // From a report: step norms and the loss sequence closed by the final loss.
  AdaptReport r;
  r.step_norms = {5.0};
  r.losses = {1.0};
  r.final_loss = 3.0;
  CHECK(path_distance(r) == doctest::Approx(29.0));
}

TEST_CASE("MAML outer step") {
  Eigen::MatrixXd a1 = Eigen::MatrixXd::Constant(1, 4, 0.1);
  const auto L = quadratic(Eigen::VectorXd::Zero(4));

  SUBCASE("scalar toy with SGD") {
    MetaState s = toy_state(Method::Maml, {1, 0, 0, 0}, a1);
    OuterOptimizer opt(OptimizerKind::Sgd, 0.1, s);
    std::vector<ad::ProbeFn> tasks{L};
    OuterStepReport rep = maml_outer_step(s, tasks, opt);
    CHECK(s.theta0[0] == doctest::Approx(0.872));
    // dL/dalpha = -2 theta^1 * 2 theta^0 = -3.2 on the first coordinate only.
    CHECK(s.alpha(0, 0) == doctest::Approx(0.1 + 0.32));
    CHECK(s.alpha(0, 1) == doctest::Approx(0.1));
    CHECK(rep.meta_loss == doctest::Approx(0.64));
    CHECK(rep.grad_norm == doctest::Approx(1.28));
    CHECK(rep.used_tasks == 1);
  }
  SUBCASE("duplicated tasks give the same update") {
    MetaState s1 = toy_state(Method::Maml, {1, -0.5, 0.25, 2}, a1);
    MetaState s2 = s1;
    OuterOptimizer o1(OptimizerKind::Adam, 0.01, s1), o2(OptimizerKind::Adam, 0.01, s2);
    Eigen::VectorXd c(4);
    c << 0.3, 0.1, -0.2, 0.5;
    std::vector<ad::ProbeFn> one{quadratic(c)};
    std::vector<ad::ProbeFn> two{quadratic(c), quadratic(c)};
    maml_outer_step(s1, one, o1);
    maml_outer_step(s2, two, o2);
    CHECK((s1.theta0 - s2.theta0).norm() == doctest::Approx(0.0));
    CHECK((s1.alpha - s2.alpha).norm() == doctest::Approx(0.0));
  }
  SUBCASE("K = 0 is a plain gradient step") {
    MetaState s = toy_state(Method::Maml, {1, 2, 0, 0}, Eigen::MatrixXd(0, 4));
    OuterOptimizer opt(OptimizerKind::Sgd, 0.1, s);
    std::vector<ad::ProbeFn> tasks{L};
    maml_outer_step(s, tasks, opt);
    CHECK(s.theta0[0] == doctest::Approx(1 - 0.1 * 2));
    CHECK(s.theta0[1] == doctest::Approx(2 - 0.1 * 4));
  }
  SUBCASE("meta-gradients are clipped at clip_norm") {
    MetaState s = toy_state(Method::Maml, {100, 0, 0, 0}, Eigen::MatrixXd(0, 4), 10.0);
    OuterOptimizer opt(OptimizerKind::Sgd, 0.1, s);
    std::vector<ad::ProbeFn> tasks{L};
    OuterStepReport rep = maml_outer_step(s, tasks, opt);
    CHECK(rep.grad_norm == doctest::Approx(200));
    CHECK(s.theta0[0] == doctest::Approx(100 - 0.1 * 10));
  }
  SUBCASE("failing tasks are left out, all failing skips the step") {
    ad::ProbeFn bad = [](int, const Eigen::VectorXd& th, const Eigen::VectorXd*) {
      ad::Probe p;
      p.loss = std::numeric_limits<double>::quiet_NaN();
      p.grad = Eigen::VectorXd::Zero(th.size());
      return p;
    };
    MetaState s = toy_state(Method::Maml, {1, 0, 0, 0}, a1);
    MetaState ref = s;
    OuterOptimizer opt(OptimizerKind::Sgd, 0.1, s), oref(OptimizerKind::Sgd, 0.1, ref);
    std::vector<ad::ProbeFn> mixed{bad, L};
    std::vector<ad::ProbeFn> good{L};
    OuterStepReport rep = maml_outer_step(s, mixed, opt);
    maml_outer_step(ref, good, oref);
    CHECK(rep.failed_tasks == 1);
    CHECK(rep.used_tasks == 1);
    CHECK(s.theta0 == ref.theta0);

    MetaState before = s;
    std::vector<ad::ProbeFn> all_bad{bad, bad};
    rep = maml_outer_step(s, all_bad, opt);
    CHECK(rep.skipped);
    CHECK(rep.failed_tasks == 2);
    CHECK(s.theta0 == before.theta0);
    CHECK(s.alpha == before.alpha);
  }
}

TEST_CASE("LEAP outer step") {
  const MetaState base = toy_state(Method::Leap, {1, 0, 0, 0}, Eigen::MatrixXd::Constant(1, 1, 0.1));

  SUBCASE("an inner loop that never moves leaves theta0 alone") {
    MetaState s = base;
    s.inner_steps = 3;
    OuterOptimizer opt(OptimizerKind::Sgd, 0.1, s);
    std::vector<ad::ProbeFn> tasks{linear(Eigen::VectorXd::Zero(4))};
    OuterStepReport rep = leap_outer_step(s, tasks, opt, OptimizerKind::Sgd);
    CHECK(s.theta0 == base.theta0);
    CHECK(rep.grad_norm == 0.0);
    CHECK(rep.path_distance == 0.0);
  }
  SUBCASE("K = 1 pulls theta0 along the path") {
    MetaState s = base;
    OuterOptimizer opt(OptimizerKind::Sgd, 0.1, s);
    Eigen::VectorXd c(4);
    c << -1, 2, 0.5, 0;
    std::vector<ad::ProbeFn> tasks{quadratic(c, 0.5)};
    leap_outer_step(s, tasks, opt, OptimizerKind::Sgd);
    // Hand computation: g0 = theta0 - c, dtheta = -0.1 g0, dL = L1 - L0.
    const Eigen::VectorXd g0 = base.theta0 - c;
    const Eigen::VectorXd dth = -0.1 * g0;
    const double dL = 0.5 * (base.theta0 + dth - c).squaredNorm() - 0.5 * g0.squaredNorm();
    CHECK(dL < 0);
    const Eigen::VectorXd meta_grad = -(dth + dL * g0);
    const Eigen::VectorXd move = s.theta0 - base.theta0;
    CHECK((move + 0.1 * meta_grad).norm() == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(move.dot(dth) > 0);
  }
  SUBCASE("opposite unit increments cancel") {
    MetaState s = base;
    s.alpha(0, 0) = 1.0;
    OuterOptimizer opt(OptimizerKind::Sgd, 0.1, s);
    std::vector<ad::ProbeFn> tasks{linear(e0()), linear(-e0())};
    OuterStepReport rep = leap_outer_step(s, tasks, opt, OptimizerKind::Sgd);
    CHECK(rep.grad_norm == doctest::Approx(0.0));
    CHECK(s.theta0 == base.theta0);
  }
  SUBCASE("path distance of held-out traces shrinks on a quadratic family") {
    tasks::Rng rng(7);
    std::normal_distribution<double> noise(0.0, 0.1);
    auto draw = [&] {
      Eigen::VectorXd c(4);
      for (int i = 0; i < 4; ++i) c[i] = 2.0 + noise(rng);
      return quadratic(c, 0.5);
    };
    std::vector<ad::ProbeFn> heldout;
    for (int i = 0; i < 8; ++i) heldout.push_back(draw());
    MetaState s = base;
    s.theta0.setZero();
    s.inner_steps = 5;
    auto mean_path = [&] {
      double d = 0.0;
      for (const auto& h : heldout) d += path_distance(adapt(s, h, s.inner_steps));
      return d / 8;
    };
    const double before = mean_path();
    OuterOptimizer opt(OptimizerKind::Adam, 0.05, s);
    for (int it = 0; it < 100; ++it) {
      std::vector<ad::ProbeFn> batch;
      for (int i = 0; i < 4; ++i) batch.push_back(draw());
      leap_outer_step(s, batch, opt);
    }
    CHECK(mean_path() < before);
  }
}

TEST_CASE("PINN objective") {
  const siren::NetConfig net = small_poisson_net();
  const tasks::TaskSpec task = tasks::sample_poisson_task(3);
  const Eigen::VectorXd th = siren::init_siren(net, 11);
  Eigen::VectorXd v(th.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = std::sin(0.37 * static_cast<double>(i));

  PinnObjective kept(task, net, 64, 5, 1);
  PinnObjective fresh(task, net, 64, 5);
  const ad::Probe a = kept(0, th, nullptr);
  const ad::Probe b = kept(0, th, &v);
  const ad::Probe c = fresh(0, th, &v);
  CHECK(a.loss == c.loss);
  CHECK(a.grad == c.grad);
  CHECK(b.grad == c.grad);
  CHECK(b.hvp == c.hvp);
  CHECK(fresh.loss(0, th) == a.loss);
  // Different steps see different batches.
  CHECK(fresh.loss(1, th) != a.loss);
  // A different theta after a kept tape falls back to a fresh build.
  const Eigen::VectorXd th2 = th * 1.01;
  kept(0, th, nullptr);
  const ad::Probe d = kept(0, th2, &v);
  const ad::Probe e = fresh(0, th2, &v);
  CHECK(d.hvp == e.hvp);

  // The unrolled meta-gradient is the same with and without tape reuse.
  MetaState s = initial_state(Method::Maml, net, 2, 1e-3, 100.0, 4);
  PinnObjective o1(task, net, 64, 9, 2), o2(task, net, 64, 9);
  const auto r1 = ad::unrolled_grad(s.theta0, s.alpha, o1.as_probe(), {100.0, false});
  const auto r2 = ad::unrolled_grad(s.theta0, s.alpha, o2.as_probe(), {100.0, false});
  CHECK(r1.d_theta0 == r2.d_theta0);
  CHECK(r1.d_alpha == r2.d_alpha);
}

TEST_CASE("adapt on a PDE task is deterministic and prefix-stable") {
  const siren::NetConfig net = small_poisson_net();
  const MetaState s = initial_state(Method::Maml, net, 2, 1e-3, 100.0, 1);
  const tasks::TaskSpec task = tasks::sample_poisson_task(8);
  const AdaptReport a = adapt(s, task, 3, 42, 64);
  const AdaptReport b = adapt(s, task, 3, 42, 64);
  CHECK(a.losses == b.losses);
  CHECK(a.final_params == b.final_params);
  CHECK(a.final_loss == b.final_loss);
  const AdaptReport longer = adapt(s, task, 6, 42, 64);
  REQUIRE(longer.steps() == 6);
  for (int k = 0; k < 3; ++k) CHECK(longer.losses[static_cast<std::size_t>(k)] == a.losses[static_cast<std::size_t>(k)]);
  CHECK(longer.losses[3] == a.final_loss);
  CHECK(adapt(s, task, 3, 43, 64).losses != a.losses);
}

TEST_CASE("configuration checks") {
  MetaConfig cfg;
  cfg.net = small_poisson_net();
  CHECK_NOTHROW(cfg.validate());
  MetaConfig bad = cfg;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = cfg;
  bad.outer_lr = 0;
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = cfg;
  bad.inner_optimizer = OptimizerKind::Adam;
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = cfg;
  bad.distribution.family = tasks::Family::Elasticity;
  CHECK_THROWS_AS(bad.validate(), InputError);

  CHECK(parse_method("leap") == Method::Leap);
  CHECK_THROWS_AS(parse_method("reptile"), InputError);
  CHECK(parse_optimizer("adam") == OptimizerKind::Adam);

  CHECK(thread_count() == 1);
  {
    EnvGuard env("3");
    CHECK(thread_count() == 3);
  }
  {
    EnvGuard env("zero");
    CHECK_THROWS_AS(thread_count(), InputError);
  }
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
}

TEST_CASE("meta_train") {
  MetaConfig cfg;
  cfg.net = small_poisson_net();
  cfg.inner_steps = 2;
  cfg.inner_lr = 1e-3;
  cfg.outer_lr = 1e-3;
  cfg.batch_size = 2;
  cfg.points = 64;
  cfg.heldout_tasks = 2;
  cfg.seed = 5;

  SUBCASE("zero iterations return the initial state") {
    const TrainResult r = meta_train(cfg);
    const MetaState init = initial_state(cfg.method, cfg.net, 2, 1e-3, 100.0, 5);
    CHECK(r.state.theta0 == init.theta0);
    CHECK(r.state.alpha == init.alpha);
    REQUIRE(r.log.size() == 1);
    CHECK(r.log[0].iteration == 0);
    CHECK(std::isnan(r.log[0].meta_loss));
    CHECK(std::isfinite(r.log[0].heldout_loss));
  }
  SUBCASE("short runs are reproducible, threaded or not") {
    cfg.iterations = 3;
    cfg.eval_every = 2;
    std::vector<int> seen;
    const TrainResult a = meta_train(cfg, [&](const LogEntry& e) { seen.push_back(e.iteration); });
    CHECK(seen == std::vector<int>{0, 1, 2, 3});
    CHECK(std::isnan(a.log[1].heldout_loss));
    CHECK(std::isfinite(a.log[2].heldout_loss));
    CHECK(std::isfinite(a.log[3].meta_loss));
    CHECK(a.state.theta0 != initial_state(cfg.method, cfg.net, 2, 1e-3, 100.0, 5).theta0);
    EnvGuard env("2");
    const TrainResult b = meta_train(cfg);
    CHECK(b.state.theta0 == a.state.theta0);
    CHECK(b.state.alpha == a.state.alpha);
    CHECK(b.log[3].heldout_loss == a.log[3].heldout_loss);
  }
  SUBCASE("LEAP trains theta0 only") {
    cfg.method = Method::Leap;
    cfg.inner_optimizer = OptimizerKind::Adam;
    cfg.iterations = 2;
    const TrainResult r = meta_train(cfg);
    CHECK(r.state.alpha(0, 0) == 1e-3);
    CHECK(std::isfinite(r.log.back().heldout_path));
    CHECK(r.skipped_steps == 0);
  }
  SUBCASE("a mismatched starting state is rejected") {
    const MetaState other = initial_state(Method::Leap, cfg.net, 2, 1e-3, 100.0, 5);
    CHECK_THROWS_AS(meta_train(cfg, {}, &other), InputError);
  }
}
