#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "metapde/error.hpp"

namespace metapde::ad {

/// Dense 2-D block. A scalar is the 1x1 case; a batch of collocation points is
/// laid out with one point per column.
using Tensor = Eigen::MatrixXd;
using NodeId = std::int32_t;
inline constexpr NodeId kNoNode = -1;

enum class Op : std::uint8_t {
  Leaf,      // differentiable input
  Constant,  // data, no adjoint
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Scale,     // scalar * a
  AddConst,  // a + scalar
  Sin,
  Cos,
  Exp,
  Log,
  Sqrt,
  Tanh,
  PowInt,    // a^k, k = iarg[0]
  Sum,       // sum of all entries -> 1x1
  Dot,       // sum(a .* b) -> 1x1
  MatMul,
  AddBias,   // a + b broadcast over the first iarg[0] columns; b is rows x 1
  SineJet,   // fused sin(scalar * z) over a column-stacked second-order jet
  Slice,     // a.block(iarg[0], iarg[1], iarg[2], iarg[3])
  Affine,    // matmul(a, b) with bias c added to the first iarg[0] columns
};

const char* op_name(Op op);

/// One entry of the append-only tape. Parents always have smaller ids.
/// `tangent` is empty unless a forward tangent was seeded on some leaf the
/// node depends on (used for Hessian-vector products).
struct Node {
  Op op = Op::Constant;
  std::array<NodeId, 3> parents{kNoNode, kNoNode, kNoNode};
  double scalar = 0.0;
  std::array<Eigen::Index, 4> iarg{};
  bool requires_grad = false;
  Tensor value;
  Tensor tangent;
};

class Graph;

/// Handle to a node on a Graph. Cheap to copy; only valid while the graph is
/// alive and not cleared.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, NodeId id) : graph_(graph), id_(id) {}

  bool valid() const { return graph_ != nullptr && id_ != kNoNode; }
  NodeId id() const { return id_; }
  Graph& graph() const { return *graph_; }
  const Tensor& value() const;
  const Tensor& tangent() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  double scalar() const;

 private:
  Graph* graph_ = nullptr;
  NodeId id_ = kNoNode;
};

/// Append-only computation graph. Values (and tangents, when seeded) are
/// computed eagerly as nodes are created. A graph is confined to one thread;
/// reuse it across tasks with clear().
class Graph {
 public:
  Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Differentiable input. A non-empty `tangent` seeds the forward direction
  /// used by grad_hvp(); it must match the value's shape.
  Var variable(Tensor value, Tensor tangent = Tensor());
  Var variable(double value) { return variable(Tensor::Constant(1, 1, value)); }
  Var constant(Tensor value);
  Var constant(double value) { return constant(Tensor::Constant(1, 1, value)); }

  /// Replaces the tangents of all leaves (unlisted leaves get none, an empty
  /// tensor also means none) and recomputes every downstream tangent, so a
  /// built graph can serve Hessian-vector products along new directions.
  void seed_tangents(std::span<const Var> leaves, std::span<const Tensor> tangents);

  const Node& node(NodeId id) const { return nodes_[static_cast<std::size_t>(id)]; }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }
  void reserve(std::size_t n) { nodes_.reserve(n); }

  /// Low-level node creation; used by the op functions below.
  Var push(Node node);

 private:
  std::vector<Node> nodes_;
};

// Elementwise binary ops accept equal shapes or a 1x1 operand on either side.
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator+(const Var& a, double c);
Var operator+(double c, const Var& a);
Var operator-(const Var& a, double c);
Var operator-(double c, const Var& a);
Var operator*(const Var& a, double c);
Var operator*(double c, const Var& a);
Var operator/(const Var& a, double c);
Var operator/(double c, const Var& a);

Var sin(const Var& a);
Var cos(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var tanh(const Var& a);
Var pow(const Var& a, int k);
Var square(const Var& a);
Var sum(const Var& a);
Var dot(const Var& a, const Var& b);
Var mean(const Var& a);
Var matmul(const Var& a, const Var& b);
/// z + b on the first `columns` columns (all columns when negative).
Var add_bias(const Var& z, const Var& b, Eigen::Index columns = -1);
/// add_bias(matmul(w, x), b, columns) as a single node.
Var affine(const Var& w, const Var& x, const Var& b, Eigen::Index columns = -1);
Var slice(const Var& a, Eigen::Index row, Eigen::Index col, Eigen::Index rows, Eigen::Index cols);

/// Layout of a column-stacked jet block: [v | d_0 .. d_{n1-1} | dd_0 .. dd_{n2-1}],
/// each sub-block `block_cols` wide. Second derivatives exist for the first n2
/// directions only.
struct JetLayout {
  Eigen::Index block_cols = 0;
  int n1 = 0;
  int n2 = 0;
  int blocks() const { return 1 + n1 + n2; }
};

/// Fused sine activation on a stacked jet: propagates sin(omega * z) through
/// value, first and pure second directional derivatives in one node.
Var sine_jet(const Var& z, double omega, const JetLayout& layout);

/// Adjoints of every node from one reverse sweep. Lets a later grad_hvp() on
/// the same graph and root skip the plain adjoint pass.
struct AdjointCache {
  std::vector<Tensor> adjoints;
};

/// Gradient of a 1x1 root with respect to `wrt`, flattened node by node with
/// each node's entries in row-major order. With `cache`, all adjoints are
/// kept there.
Eigen::VectorXd grad(const Graph& graph, const Var& root, std::span<const Var> wrt, AdjointCache* cache = nullptr);

struct GradHvp {
  Eigen::VectorXd grad;
  /// Directional derivative of `grad` along the seeded leaf tangents, i.e. a
  /// Hessian-vector product when all wrt leaves were seeded.
  Eigen::VectorXd hvp;
};

/// Forward-over-reverse sweep: gradient plus its derivative along the leaf
/// tangents seeded on the graph. A cache filled by grad() for the same root is
/// consumed (left empty) and only the tangent half of the sweep runs.
GradHvp grad_hvp(const Graph& graph, const Var& root, std::span<const Var> wrt, AdjointCache* cache = nullptr);

/// Flattens a node's entries in row-major order (the ParamVector convention).
void append_row_major(const Tensor& t, Eigen::VectorXd& out, Eigen::Index& offset);

}  // namespace metapde::ad
