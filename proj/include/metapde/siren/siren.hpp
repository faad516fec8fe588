#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

#include "metapde/ad/graph.hpp"
#include "metapde/ad/jet.hpp"

namespace metapde::siren {

/// Flat parameter vector. Layers in forward order; for each layer the weight
/// matrix (fan_out x fan_in) in row-major order, followed by its biases.
using ParamVector = Eigen::VectorXd;

struct NetConfig {
  int input_dim = 2;
  int output_dim = 1;
  int hidden_layers = 3;
  int layer_width = 64;
  double omega0 = 3.0;

  void validate() const;
  /// Number of affine layers (hidden layers plus the output head).
  int layers() const { return hidden_layers + 1; }
  int fan_in(int layer) const { return layer == 0 ? input_dim : layer_width; }
  int fan_out(int layer) const { return layer == hidden_layers ? output_dim : layer_width; }
  /// Offset of layer `layer`'s weights in the ParamVector.
  Eigen::Index offset(int layer) const;
  Eigen::Index param_count() const { return offset(layers()); }

  bool operator==(const NetConfig&) const = default;
};

/// Sitzmann et al. initialization: first-layer weights U(-1/fan_in, 1/fan_in),
/// later weights U(-sqrt(6/fan_in)/omega0, +sqrt(6/fan_in)/omega0), zero biases.
ParamVector init_siren(const NetConfig& cfg, std::uint64_t seed);

/// Hidden layers y <- sin(omega0 (W y + b)); the last layer is affine.
Eigen::VectorXd forward(const NetConfig& cfg, const ParamVector& params, const Eigen::VectorXd& point);
/// Batched forward: `points` is input_dim x N, the result output_dim x N.
Eigen::MatrixXd forward_batch(const NetConfig& cfg, const ParamVector& params, const Eigen::MatrixXd& points);

/// Value, first and pure second derivatives of every output component along
/// the given input coordinates, by plain Jet2<double> propagation.
std::vector<ad::Jet2<double>> spatial_jet(const NetConfig& cfg, const ParamVector& params,
                                          const Eigen::VectorXd& point, std::span<const int> directions);

/// Network parameters as leaves on a tape, in ParamVector order.
struct TapedParams {
  std::vector<ad::Var> weights;
  std::vector<ad::Var> biases;
  /// W_0, b_0, W_1, b_1, ... : grad() over this list returns ParamVector layout.
  std::vector<ad::Var> flat() const;
};

/// Creates the parameter leaves. A non-null `tangent` (ParamVector layout)
/// seeds the forward direction for Hessian-vector products.
TapedParams tape_params(ad::Graph& g, const NetConfig& cfg, const ParamVector& params,
                        const ParamVector* tangent = nullptr);

/// Re-seeds the leaves' tangents on an already built tape (see
/// Graph::seed_tangents); `tangent` is in ParamVector layout.
void seed_param_tangents(ad::Graph& g, const NetConfig& cfg, const TapedParams& p, const ParamVector& tangent);

/// Network outputs on a tape for `points` (input_dim x N): output_dim x N.
ad::Var forward_values(const NetConfig& cfg, const TapedParams& p, const Eigen::MatrixXd& points);

/// Taped jets over a batch of points. `directions` lists the input coordinates
/// that get first derivatives; second derivatives are taken for the first
/// `n_second` of them. Returns one Jet2 per output component whose
/// coefficients are 1 x N nodes.
std::vector<ad::Jet2<ad::Var>> forward_jets(const NetConfig& cfg, const TapedParams& p,
                                            const Eigen::MatrixXd& points, std::span<const int> directions,
                                            int n_second);

}  // namespace metapde::siren
