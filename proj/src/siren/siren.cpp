#include "metapde/siren/siren.hpp"

#include <cmath>
#include <random>

#include "metapde/ad/vmath.hpp"
#include "metapde/error.hpp"

namespace metapde::siren {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::MatrixXd weight(const NetConfig& cfg, const ParamVector& p, int l) {
  return Eigen::Map<const RowMajor>(p.data() + cfg.offset(l), cfg.fan_out(l), cfg.fan_in(l));
}

Eigen::VectorXd bias(const NetConfig& cfg, const ParamVector& p, int l) {
  const Eigen::Index n = static_cast<Eigen::Index>(cfg.fan_out(l)) * cfg.fan_in(l);
  return p.segment(cfg.offset(l) + n, cfg.fan_out(l));
}

void check_params(const NetConfig& cfg, const ParamVector& p) {
  cfg.validate();
  require(p.size() == cfg.param_count(), "parameter vector length does not match the network");
}

}  // namespace

void NetConfig::validate() const {
  require(input_dim >= 1 && output_dim >= 1, "NetConfig: dimensions must be positive");
  require(hidden_layers >= 1, "NetConfig: hidden_layers must be >= 1");
  require(layer_width >= 1, "NetConfig: layer_width must be >= 1");
  require(omega0 > 0, "NetConfig: omega0 must be positive");
}

Eigen::Index NetConfig::offset(int layer) const {
  Eigen::Index off = 0;
  for (int l = 0; l < layer; ++l) off += static_cast<Eigen::Index>(fan_out(l)) * (fan_in(l) + 1);
  return off;
}

ParamVector init_siren(const NetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ParamVector p = ParamVector::Zero(cfg.param_count());
  for (int l = 0; l < cfg.layers(); ++l) {
    const double fan_in = cfg.fan_in(l);
    const double bound = l == 0 ? 1.0 / fan_in : std::sqrt(6.0 / fan_in) / cfg.omega0;
    std::uniform_real_distribution<double> u(-bound, bound);
    const Eigen::Index n = static_cast<Eigen::Index>(cfg.fan_out(l)) * cfg.fan_in(l);
    for (Eigen::Index i = 0; i < n; ++i) p[cfg.offset(l) + i] = u(rng);
  }
  return p;
}

Eigen::MatrixXd forward_batch(const NetConfig& cfg, const ParamVector& params, const Eigen::MatrixXd& points) {
  check_params(cfg, params);
  require(points.rows() == cfg.input_dim, "forward: point dimension mismatch");
  // Same operation sequence as forward_values so both paths agree bit-for-bit.
  Eigen::MatrixXd y = points;
  for (int l = 0; l < cfg.layers(); ++l) {
    Eigen::MatrixXd z;
    z.noalias() = weight(cfg, params, l) * y;
    z.colwise() += bias(cfg, params, l);
    if (l == cfg.hidden_layers) return z;
    y.resize(z.rows(), z.cols());
    ad::vmath::sin(z.data(), y.data(), static_cast<std::size_t>(z.size()), cfg.omega0);
  }
  return y;
}

Eigen::VectorXd forward(const NetConfig& cfg, const ParamVector& params, const Eigen::VectorXd& point) {
  require(point.size() == cfg.input_dim, "forward: point dimension mismatch");
  return forward_batch(cfg, params, Eigen::MatrixXd(point)).col(0);
}

std::vector<ad::Jet2<double>> spatial_jet(const NetConfig& cfg, const ParamVector& params,
                                          const Eigen::VectorXd& point, std::span<const int> directions) {
  check_params(cfg, params);
  require(point.size() == cfg.input_dim, "spatial_jet: point dimension mismatch");
  const int nd = static_cast<int>(directions.size());
  require(nd >= 1 && nd <= ad::Jet2<double>::kMaxDirections, "spatial_jet: 1 to 3 directions");
  using J = ad::Jet2<double>;
  std::vector<J> y(static_cast<std::size_t>(cfg.input_dim));
  for (int i = 0; i < cfg.input_dim; ++i) {
    y[static_cast<std::size_t>(i)] = J::constant(point[i]);
    y[static_cast<std::size_t>(i)].n1 = nd;
    y[static_cast<std::size_t>(i)].n2 = nd;
  }
  for (int k = 0; k < nd; ++k) {
    const int dir = directions[static_cast<std::size_t>(k)];
    require(dir >= 0 && dir < cfg.input_dim, "spatial_jet: direction out of range");
  }
  for (int i = 0; i < cfg.input_dim; ++i) {
    auto& j = y[static_cast<std::size_t>(i)];
    for (int k = 0; k < nd; ++k) {
      j.d[static_cast<std::size_t>(k)] = directions[static_cast<std::size_t>(k)] == i ? 1.0 : 0.0;
      j.dd[static_cast<std::size_t>(k)] = 0.0;
    }
  }
  for (int l = 0; l < cfg.layers(); ++l) {
    const Eigen::MatrixXd W = weight(cfg, params, l);
    const Eigen::VectorXd b = bias(cfg, params, l);
    std::vector<J> next(static_cast<std::size_t>(cfg.fan_out(l)));
    for (int r = 0; r < cfg.fan_out(l); ++r) {
      J z = J::constant(b[r]);
      for (int c = 0; c < cfg.fan_in(l); ++c) z = z + W(r, c) * y[static_cast<std::size_t>(c)];
      next[static_cast<std::size_t>(r)] = l == cfg.hidden_layers ? z : sin(cfg.omega0 * z);
    }
    y = std::move(next);
  }
  return y;
}

std::vector<ad::Var> TapedParams::flat() const {
  std::vector<ad::Var> out;
  out.reserve(weights.size() * 2);
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.push_back(weights[l]);
    out.push_back(biases[l]);
  }
  return out;
}

TapedParams tape_params(ad::Graph& g, const NetConfig& cfg, const ParamVector& params, const ParamVector* tangent) {
  check_params(cfg, params);
  if (tangent) require(tangent->size() == params.size(), "tape_params: tangent length mismatch");
  TapedParams t;
  for (int l = 0; l < cfg.layers(); ++l) {
    if (tangent) {
      t.weights.push_back(g.variable(weight(cfg, params, l), weight(cfg, *tangent, l)));
      t.biases.push_back(g.variable(bias(cfg, params, l), bias(cfg, *tangent, l)));
    } else {
      t.weights.push_back(g.variable(weight(cfg, params, l)));
      t.biases.push_back(g.variable(bias(cfg, params, l)));
    }
  }
  return t;
}

void seed_param_tangents(ad::Graph& g, const NetConfig& cfg, const TapedParams& p, const ParamVector& tangent) {
  require(tangent.size() == cfg.param_count(), "seed_param_tangents: tangent length mismatch");
  require(static_cast<int>(p.weights.size()) == cfg.layers(), "seed_param_tangents: layer count mismatch");
  std::vector<ad::Tensor> t;
  t.reserve(p.weights.size() * 2);
  for (int l = 0; l < cfg.layers(); ++l) {
    t.push_back(weight(cfg, tangent, l));
    t.push_back(bias(cfg, tangent, l));
  }
  g.seed_tangents(p.flat(), t);
}

ad::Var forward_values(const NetConfig& cfg, const TapedParams& p, const Eigen::MatrixXd& points) {
  require(points.rows() == cfg.input_dim, "forward_values: point dimension mismatch");
  ad::Graph& g = p.weights.front().graph();
  ad::Var y = g.constant(points);
  const ad::JetLayout plain{points.cols(), 0, 0};
  for (int l = 0; l < cfg.layers(); ++l) {
    ad::Var z = ad::affine(p.weights[static_cast<std::size_t>(l)], y, p.biases[static_cast<std::size_t>(l)]);
    if (l == cfg.hidden_layers) return z;
    y = ad::sine_jet(z, cfg.omega0, plain);
  }
  return y;
}

std::vector<ad::Jet2<ad::Var>> forward_jets(const NetConfig& cfg, const TapedParams& p,
                                            const Eigen::MatrixXd& points, std::span<const int> directions,
                                            int n_second) {
  require(points.rows() == cfg.input_dim, "forward_jets: point dimension mismatch");
  const int n1 = static_cast<int>(directions.size());
  require(n1 >= 1 && n1 <= ad::Jet2<ad::Var>::kMaxDirections, "forward_jets: 1 to 3 directions");
  require(n_second >= 0 && n_second <= n1, "forward_jets: n_second out of range");
  const Eigen::Index N = points.cols();
  const ad::JetLayout L{N, n1, n_second};

  // Stacked input [X | E_0 .. E_{n1-1} | 0 ..]: the seed of direction i is the
  // unit vector of its coordinate in every column.
  Eigen::MatrixXd x0 = Eigen::MatrixXd::Zero(cfg.input_dim, N * L.blocks());
  x0.leftCols(N) = points;
  for (int i = 0; i < n1; ++i) {
    const int dir = directions[static_cast<std::size_t>(i)];
    require(dir >= 0 && dir < cfg.input_dim, "forward_jets: direction out of range");
    x0.block(dir, N * (1 + i), 1, N).setOnes();
  }
  ad::Graph& g = p.weights.front().graph();
  ad::Var y = g.constant(std::move(x0));
  for (int l = 0; l < cfg.layers(); ++l) {
    ad::Var z = ad::affine(p.weights[static_cast<std::size_t>(l)], y, p.biases[static_cast<std::size_t>(l)], N);
    if (l == cfg.hidden_layers) {
      y = z;
      break;
    }
    y = ad::sine_jet(z, cfg.omega0, L);
  }
  std::vector<ad::Jet2<ad::Var>> out(static_cast<std::size_t>(cfg.output_dim));
  for (int c = 0; c < cfg.output_dim; ++c) {
    auto& j = out[static_cast<std::size_t>(c)];
    j.n1 = n1;
    j.n2 = n_second;
    j.v = ad::slice(y, c, 0, 1, N);
    for (int i = 0; i < n1; ++i) j.d[static_cast<std::size_t>(i)] = ad::slice(y, c, N * (1 + i), 1, N);
    for (int i = 0; i < n_second; ++i) j.dd[static_cast<std::size_t>(i)] = ad::slice(y, c, N * (1 + n1 + i), 1, N);
  }
  return out;
}

}  // namespace metapde::siren
