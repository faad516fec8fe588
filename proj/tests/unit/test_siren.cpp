#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "metapde/siren/siren.hpp"

using namespace metapde;
using namespace metapde::siren;

namespace {

ParamVector random_params(const NetConfig& cfg, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0, scale);
  ParamVector p(cfg.param_count());
  for (auto& v : p) v = n(rng) / 3;
  return p;
}

}  // namespace

TEST_CASE("parameter layout") {
  NetConfig cfg{2, 1, 3, 64, 3.0};
  CHECK(cfg.param_count() == 2 * 64 + 64 + 2 * (64 * 64 + 64) + 64 + 1);
  CHECK(cfg.offset(1) == 2 * 64 + 64);
  NetConfig bad = cfg;
  bad.hidden_layers = 0;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
  bad = cfg;
  bad.omega0 = 0;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
}

TEST_CASE("init_siren bounds and determinism") {
  NetConfig cfg{2, 1, 3, 64, 3.0};
  ParamVector a = init_siren(cfg, 42), b = init_siren(cfg, 42), c = init_siren(cfg, 43);
  CHECK((a.array() == b.array()).all());
  CHECK((a.array() != c.array()).any());

  const double first_bound = 1.0 / 2;
  const double hidden_bound = std::sqrt(6.0 / 64) / 3;
  CHECK(hidden_bound == doctest::Approx(0.10206).epsilon(1e-4));
  for (int l = 0; l < cfg.layers(); ++l) {
    const double bound = l == 0 ? first_bound : hidden_bound;
    const Eigen::Index nw = static_cast<Eigen::Index>(cfg.fan_out(l)) * cfg.fan_in(l);
    auto w = a.segment(cfg.offset(l), nw);
    auto bias = a.segment(cfg.offset(l) + nw, cfg.fan_out(l));
    CHECK(w.cwiseAbs().maxCoeff() <= bound);
    CHECK(w.cwiseAbs().maxCoeff() > 0.9 * bound);
    CHECK(bias.cwiseAbs().maxCoeff() == 0.0);
  }

  // 10^5 first-layer draws stay within the bound.
  NetConfig wide{2, 1, 1, 50000, 3.0};
  ParamVector w = init_siren(wide, 7);
  auto first = w.segment(0, 100000);
  CHECK(first.maxCoeff() <= 0.5);
  CHECK(first.minCoeff() >= -0.5);
  CHECK(first.maxCoeff() > 0.499);
}

TEST_CASE("forward: trivial networks") {
  NetConfig cfg{2, 3, 2, 5, 3.0};
  ParamVector zero = ParamVector::Zero(cfg.param_count());
  CHECK(forward(cfg, zero, Eigen::Vector2d(0.3, -2)).cwiseAbs().maxCoeff() == 0.0);

  // Identity: first layer passes x through a small-angle sine, the head
  // inverts it. With width == input_dim, W = I, and a linear head we can
  // check the head alone by zeroing the sines' argument scale.
  NetConfig id{2, 2, 1, 2, 1.0};
  ParamVector p = ParamVector::Zero(id.param_count());
  p[0] = 1;
  p[3] = 1;  // W0 = I
  const Eigen::Index h = id.offset(1);
  p[h + 0] = 1;
  p[h + 3] = 1;  // W1 = I
  Eigen::Vector2d x(0.2, -0.4);
  Eigen::VectorXd y = forward(id, p, x);
  CHECK(y[0] == doctest::Approx(std::sin(0.2)));
  CHECK(y[1] == doctest::Approx(std::sin(-0.4)));
  CHECK_THROWS_AS(forward(id, p, Eigen::VectorXd::Zero(3)), ContractViolation);
}

TEST_CASE("taped forward equals plain forward bit-for-bit") {
  NetConfig cfg{2, 2, 3, 16, 3.0};
  ParamVector p = init_siren(cfg, 3);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  Eigen::MatrixXd X(2, 37);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = u(rng);
  ad::Graph g;
  auto t = tape_params(g, cfg, p);
  ad::Var y = forward_values(cfg, t, X);
  Eigen::MatrixXd plain = forward_batch(cfg, p, X);
  CHECK((y.value().array() == plain.array()).all());
}

TEST_CASE("spatial jets match finite differences") {
  NetConfig cfg{3, 2, 3, 12, 3.0};
  for (std::uint64_t s = 0; s < 3; ++s) {
    ParamVector p = random_params(cfg, 100 + s, 1.0);
    Eigen::Vector3d x(0.3, -0.2, 0.5);
    const std::vector<int> dirs{0, 1, 2};
    auto jets = spatial_jet(cfg, p, x, dirs);
    const double h = 1e-3;
    for (int c = 0; c < 2; ++c) {
      CHECK(jets[c].v == doctest::Approx(forward(cfg, p, x)[c]).epsilon(1e-13));
      for (int k = 0; k < 3; ++k) {
        Eigen::Vector3d e = Eigen::Vector3d::Zero();
        e[k] = h;
        const double fp = forward(cfg, p, x + e)[c], fm = forward(cfg, p, x - e)[c], f0 = forward(cfg, p, x)[c];
        const double d2 = (fp - 2 * f0 + fm) / (h * h);
        CHECK(jets[c].d[k] == doctest::Approx((fp - fm) / (2 * h)).epsilon(1e-4));
        CHECK(std::abs(jets[c].dd[k] - d2) <= 1e-4 * std::max(1.0, std::abs(d2)));
      }
    }

    // Taped jets agree with the plain ones.
    ad::Graph g;
    auto t = tape_params(g, cfg, p);
    Eigen::MatrixXd X(3, 2);
    X.col(0) = x;
    X.col(1) = Eigen::Vector3d(-0.1, 0.4, 0.0);
    const std::vector<int> tdirs{2, 0};
    auto tj = forward_jets(cfg, t, X, tdirs, 1);
    auto pj = spatial_jet(cfg, p, x, tdirs);
    for (int c = 0; c < 2; ++c) {
      CHECK(tj[c].v.value()(0, 0) == doctest::Approx(pj[c].v).epsilon(1e-13));
      CHECK(tj[c].d[0].value()(0, 0) == doctest::Approx(pj[c].d[0]).epsilon(1e-12));
      CHECK(tj[c].d[1].value()(0, 0) == doctest::Approx(pj[c].d[1]).epsilon(1e-12));
      CHECK(tj[c].dd[0].value()(0, 0) == doctest::Approx(pj[c].dd[0]).epsilon(1e-11));
    }
  }
}

TEST_CASE("jets of trivial networks") {
  // sin(3x) as a network: one hidden unit with W=1, omega0=3, head weight 1.
  NetConfig cfg{1, 1, 1, 1, 3.0};
  ParamVector p = ParamVector::Zero(cfg.param_count());
  p[0] = 1;
  p[cfg.offset(1)] = 1;
  const std::vector<int> dirs{0};
  auto j = spatial_jet(cfg, p, Eigen::VectorXd::Zero(1), dirs);
  CHECK(j[0].v == 0.0);
  CHECK(j[0].d[0] == doctest::Approx(3.0));
  CHECK(j[0].dd[0] == doctest::Approx(0.0));
}

TEST_CASE("gradient through taped jets matches finite differences") {
  NetConfig cfg{2, 1, 2, 8, 3.0};
  ParamVector p = init_siren(cfg, 9);
  Eigen::MatrixXd X(2, 5);
  X << 0.1, 0.5, -0.3, 0.7, -0.9, 0.2, -0.6, 0.4, 0.0, 0.3;
  const std::vector<int> dirs{0, 1};
  auto loss_of = [&](const ParamVector& q, Eigen::VectorXd* g_out) {
    ad::Graph g;
    auto t = tape_params(g, cfg, q);
    auto j = forward_jets(cfg, t, X, dirs, 2);
    ad::Var r = j[0].dd[0] + j[0].dd[1] + j[0].v * j[0].d[0] - 1.0;
    ad::Var loss = ad::mean(ad::square(r));
    if (g_out) *g_out = ad::grad(g, loss, t.flat());
    return loss.scalar();
  };
  Eigen::VectorXd g;
  loss_of(p, &g);
  Eigen::VectorXd fd(p.size());
  const double h = 1e-5;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    ParamVector a = p, b = p;
    a[i] += h;
    b[i] -= h;
    fd[i] = (loss_of(a, nullptr) - loss_of(b, nullptr)) / (2 * h);
  }
  CHECK((g - fd).norm() / fd.norm() <= 1e-5);
}
