#include "metapde/ad/graph.hpp"

#include <cmath>
#include <algorithm>
#include <functional>
#include <mutex>

#include <malloc.h>
#include <string>

#include "metapde/ad/vmath.hpp"

namespace metapde::ad {

namespace {

using Eigen::Index;

bool same_shape(const Tensor& a, const Tensor& b) {
  return a.rows() == b.rows() && a.cols() == b.cols();
}

// Parent value/tangent viewed at the node's shape; 1x1 parents are expanded.
struct Operand {
  const Tensor* v = nullptr;
  const Tensor* t = nullptr;
  Tensor v_store;
  Tensor t_store;
};

void operand(const Node& p, Index rows, Index cols, Operand& o) {
  if (p.value.rows() == rows && p.value.cols() == cols) {
    o.v = &p.value;
    if (p.tangent.size() != 0) o.t = &p.tangent;
    return;
  }
  o.v_store = Tensor::Constant(rows, cols, p.value(0, 0));
  o.v = &o.v_store;
  if (p.tangent.size() != 0) {
    o.t_store = Tensor::Constant(rows, cols, p.tangent(0, 0));
    o.t = &o.t_store;
  }
}

// Sum of optional terms; stays empty when every term is absent.
struct Acc {
  Tensor t;
  template <class E>
  void add(const E& expr) {
    if (t.size() == 0) {
      t = expr;
    } else {
      t += expr;
    }
  }
  bool empty() const { return t.size() == 0; }
};

// out (+)= a * b^T. Long contractions are split into column chunks, which
// keeps Eigen's packed panels in cache.
void gemm_nt(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
  constexpr Index kChunk = 512;
  if (!accumulate) out.setZero(a.rows(), b.rows());
  const Index n = a.cols();
  for (Index j = 0; j < n; j += kChunk) {
    const Index w = std::min(kChunk, n - j);
    out.noalias() += a.middleCols(j, w) * b.middleCols(j, w).transpose();
  }
}

Tensor vsin(const Tensor& a, double scale = 1.0) {
  Tensor out(a.rows(), a.cols());
  vmath::sin(a.data(), out.data(), static_cast<std::size_t>(a.size()), scale);
  return out;
}

Tensor vcos(const Tensor& a, double scale = 1.0) {
  Tensor out(a.rows(), a.cols());
  vmath::cos(a.data(), out.data(), static_cast<std::size_t>(a.size()), scale);
  return out;
}

Tensor ipow(const Tensor& a, int k) {
  Tensor out = Tensor::Ones(a.rows(), a.cols());
  for (int i = 0; i < k; ++i) out.array() *= a.array();
  return out;
}

Graph& graph_of(const Var& a, const Var& b) {
  require(a.valid() && b.valid(), "invalid Var");
  require(&a.graph() == &b.graph(), "operands live on different graphs");
  return a.graph();
}

void broadcast_shape(const Tensor& a, const Tensor& b, Index& rows, Index& cols) {
  if (same_shape(a, b)) {
    rows = a.rows();
    cols = a.cols();
  } else if (a.size() == 1) {
    rows = b.rows();
    cols = b.cols();
  } else if (b.size() == 1) {
    rows = a.rows();
    cols = a.cols();
  } else {
    throw ContractViolation("elementwise op on incompatible shapes");
  }
}

Node make_node(Op op, std::initializer_list<const Var*> parents) {
  Node n;
  n.op = op;
  int k = 0;
  for (const Var* p : parents) {
    n.parents[static_cast<std::size_t>(k++)] = p->id();
    n.requires_grad = n.requires_grad || p->graph().node(p->id()).requires_grad;
  }
  return n;
}

Var binary(Op op, const Var& a, const Var& b) {
  Graph& g = graph_of(a, b);
  const Node& na = g.node(a.id());
  const Node& nb = g.node(b.id());
  Index rows = 0, cols = 0;
  broadcast_shape(na.value, nb.value, rows, cols);
  Operand A, B;
  operand(na, rows, cols, A);
  operand(nb, rows, cols, B);
  Node n = make_node(op, {&a, &b});
  const auto av = A.v->array();
  const auto bv = B.v->array();
  switch (op) {
    case Op::Add:
      n.value = (av + bv).matrix();
      break;
    case Op::Sub:
      n.value = (av - bv).matrix();
      break;
    case Op::Mul:
      n.value = (av * bv).matrix();
      break;
    case Op::Div:
      n.value = (av / bv).matrix();
      break;
    default:
      throw ContractViolation("not a binary elementwise op");
  }
  return g.push(std::move(n));
}

Var unary(Op op, const Var& a, double scalar = 0.0, int k = 0) {
  require(a.valid(), "invalid Var");
  Graph& g = a.graph();
  const Node& na = g.node(a.id());
  Node n = make_node(op, {&a});
  n.scalar = scalar;
  n.iarg[0] = k;
  const Tensor& A = na.value;
  switch (op) {
    case Op::Neg:
      n.value = -A;
      break;
    case Op::Scale:
      n.value = scalar * A;
      break;
    case Op::AddConst:
      n.value = (A.array() + scalar).matrix();
      break;
    case Op::Sin:
      n.value = vsin(A);
      break;
    case Op::Cos:
      n.value = vcos(A);
      break;
    case Op::Exp:
      n.value = A.array().exp().matrix();
      break;
    case Op::Log:
      n.value = A.array().log().matrix();
      break;
    case Op::Sqrt:
      n.value = A.array().sqrt().matrix();
      break;
    case Op::Tanh:
      n.value = A.array().tanh().matrix();
      break;
    case Op::PowInt:
      require(k >= 0, "pow: exponent must be non-negative");
      n.value = ipow(A, k);
      break;
    case Op::Sum:
      n.value = Tensor::Constant(1, 1, A.sum());
      break;
    default:
      throw ContractViolation("not a unary op");
  }
  return g.push(std::move(n));
}

// --- fused sine jet -------------------------------------------------------

struct JetBlocks {
  Index m = 0;  // entries per block
  int n1 = 0, n2 = 0;
  const double* base = nullptr;
  const double* blk(int k) const { return base + static_cast<Index>(k) * m; }
  const double* v() const { return blk(0); }
  const double* d(int i) const { return blk(1 + i); }
  const double* dd(int i) const { return blk(1 + n1 + i); }
};

struct MutBlocks {
  Index m = 0;
  int n1 = 0, n2 = 0;
  double* base = nullptr;
  double* blk(int k) const { return base + static_cast<Index>(k) * m; }
  double* v() const { return blk(0); }
  double* d(int i) const { return blk(1 + i); }
  double* dd(int i) const { return blk(1 + n1 + i); }
};

JetLayout layout_of(const Node& n) {
  return JetLayout{n.iarg[0], static_cast<int>(n.iarg[1]), static_cast<int>(n.iarg[2])};
}

JetBlocks view(const Tensor& t, const JetLayout& L) {
  return JetBlocks{t.rows() * L.block_cols, L.n1, L.n2, t.data()};
}

MutBlocks mview(Tensor& t, const JetLayout& L) {
  return MutBlocks{t.rows() * L.block_cols, L.n1, L.n2, t.data()};
}

// y.v = S, y.d_i = w C p_i, y.dd_i = w C q_i - w^2 S p_i^2
void sine_jet_forward(const Tensor& z, double w, const JetLayout& L, Tensor& y) {
  y.resize(z.rows(), z.cols());
  const JetBlocks Z = view(z, L);
  const MutBlocks Y = mview(y, L);
  const Index m = Z.m;
  vmath::sin(Z.v(), Y.v(), static_cast<std::size_t>(m), w);
  if (L.n1 == 0) return;
  Eigen::VectorXd C(m);
  vmath::cos(Z.v(), C.data(), static_cast<std::size_t>(m), w);
  const double* S = Y.v();
  const double w2 = w * w;
  for (int i = 0; i < L.n1; ++i) {
    const double* p = Z.d(i);
    double* out = Y.d(i);
    for (Index e = 0; e < m; ++e) out[e] = w * C[e] * p[e];
  }
  for (int i = 0; i < L.n2; ++i) {
    const double* p = Z.d(i);
    const double* q = Z.dd(i);
    double* out = Y.dd(i);
    for (Index e = 0; e < m; ++e) out[e] = w * C[e] * q[e] - w2 * S[e] * p[e] * p[e];
  }
}

void sine_jet_tangent(const Tensor& z, const Tensor& zt, const Tensor& y, double w, const JetLayout& L,
                      Tensor& yt) {
  yt.resize(z.rows(), z.cols());
  const JetBlocks Z = view(z, L);
  const JetBlocks Zt = view(zt, L);
  const MutBlocks Yt = mview(yt, L);
  const Index m = Z.m;
  Eigen::VectorXd C(m);
  vmath::cos(Z.v(), C.data(), static_cast<std::size_t>(m), w);
  const double* S = y.data();
  const double* a_t = Zt.v();
  const double w2 = w * w, w3 = w2 * w;
  for (Index e = 0; e < m; ++e) Yt.v()[e] = w * C[e] * a_t[e];
  for (int i = 0; i < L.n1; ++i) {
    const double* p = Z.d(i);
    const double* p_t = Zt.d(i);
    double* out = Yt.d(i);
    for (Index e = 0; e < m; ++e) out[e] = -w2 * S[e] * a_t[e] * p[e] + w * C[e] * p_t[e];
  }
  for (int i = 0; i < L.n2; ++i) {
    const double* p = Z.d(i);
    const double* p_t = Zt.d(i);
    const double* q = Z.dd(i);
    const double* q_t = Zt.dd(i);
    double* out = Yt.dd(i);
    for (Index e = 0; e < m; ++e) {
      out[e] = -w2 * S[e] * a_t[e] * q[e] + w * C[e] * q_t[e] - w3 * C[e] * a_t[e] * p[e] * p[e] -
               2.0 * w2 * S[e] * p[e] * p_t[e];
    }
  }
}

// Pointers into the blocks of one stacked jet tensor.
struct BlockPtrs {
  const double* v = nullptr;
  std::array<const double*, 3> d{};
  std::array<const double*, 3> dd{};
};

struct MutBlockPtrs {
  double* v = nullptr;
  std::array<double*, 3> d{};
  std::array<double*, 3> dd{};
};

BlockPtrs ptrs(const Tensor* t, const JetLayout& L) {
  BlockPtrs b;
  if (t == nullptr) return b;
  const JetBlocks J = view(*t, L);
  b.v = J.v();
  for (int i = 0; i < L.n1; ++i) b.d[static_cast<std::size_t>(i)] = J.d(i);
  for (int i = 0; i < L.n2; ++i) b.dd[static_cast<std::size_t>(i)] = J.dd(i);
  return b;
}

MutBlockPtrs mptrs(Tensor* t, const Tensor& shape, const JetLayout& L) {
  MutBlockPtrs b;
  if (t == nullptr) return b;
  t->resize(shape.rows(), shape.cols());
  const MutBlocks J = mview(*t, L);
  b.v = J.v();
  for (int i = 0; i < L.n1; ++i) b.d[static_cast<std::size_t>(i)] = J.d(i);
  for (int i = 0; i < L.n2; ++i) b.dd[static_cast<std::size_t>(i)] = J.dd(i);
  return b;
}

struct SineJetBackwardArgs {
  Index m = 0;
  double w = 0.0;
  const double* S = nullptr;  // sin(w z.v)
  const double* C = nullptr;  // cos(w z.v)
  BlockPtrs z, ybar, zt, ybar_t;
  MutBlockPtrs zbar, zbar_t;
};

// One pass over the entries; every output block is written exactly once.
// With y.v = S, y.d_i = w C p_i, y.dd_i = w C q_i - w^2 S p_i^2:
//   abar = w C yv - w^2 S sum p_i yd_i - sum (w^2 S q_i + w^3 C p_i^2) ydd_i
//   pbar_i = w C yd_i - 2 w^2 S p_i ydd_i,  qbar_i = w C ydd_i
// and the tangent of these along (zt, ybar_t), using S' = w C a_t and
// C' = -w S a_t.
template <int N1, int N2, bool Adj, bool Tan, bool HasZt, bool HasYbt>
void sine_jet_backward_kernel(const SineJetBackwardArgs& A) {
  const double w = A.w, w2 = w * w, w3 = w2 * w;
  const Index m = A.m;
#pragma GCC ivdep
  for (Index e = 0; e < m; ++e) {
    const double c = A.C[e], s = A.S[e];
    const double wc = w * c, w2s = w2 * s, w3c = w3 * c;
    const double yv = A.ybar.v[e];
    double ab = wc * yv;
    double pb[3] = {0, 0, 0};
    double ab_t = 0.0;
    double pb_t[3] = {0, 0, 0};
    double at = 0.0;
    if constexpr (HasZt) at = A.zt.v[e];
    if constexpr (Tan && HasZt) ab_t -= w2s * at * yv;
    if constexpr (Tan && HasYbt) ab_t += wc * A.ybar_t.v[e];
    for (int i = 0; i < N1; ++i) {
      const double p = A.z.d[i][e];
      const double yd = A.ybar.d[i][e];
      pb[i] = wc * yd;
      ab -= w2s * p * yd;
      if constexpr (Tan && HasZt) {
        const double pt = A.zt.d[i][e];
        pb_t[i] -= w2s * at * yd;
        ab_t -= w2 * (wc * at * p + s * pt) * yd;
      }
      if constexpr (Tan && HasYbt) {
        const double ydt = A.ybar_t.d[i][e];
        pb_t[i] += wc * ydt;
        ab_t -= w2s * p * ydt;
      }
    }
    for (int i = 0; i < N2; ++i) {
      const double p = A.z.d[i][e];
      const double q = A.z.dd[i][e];
      const double ydd = A.ybar.dd[i][e];
      pb[i] -= 2.0 * w2s * p * ydd;
      ab -= (w2s * q + w3c * p * p) * ydd;
      if constexpr (Adj) A.zbar.dd[i][e] = wc * ydd;
      if constexpr (Tan) {
        double qb_t = 0.0;
        if constexpr (HasZt) {
          const double pt = A.zt.d[i][e];
          const double qt = A.zt.dd[i][e];
          qb_t -= w2s * at * ydd;
          pb_t[i] -= 2.0 * w2 * (wc * at * p + s * pt) * ydd;
          ab_t -= w2 * (wc * at * q + s * qt) * ydd + w3 * (-w * s * at * p * p + 2.0 * c * p * pt) * ydd;
        }
        if constexpr (HasYbt) {
          const double yddt = A.ybar_t.dd[i][e];
          qb_t += wc * yddt;
          pb_t[i] -= 2.0 * w2s * p * yddt;
          ab_t -= (w2s * q + w3c * p * p) * yddt;
        }
        A.zbar_t.dd[i][e] = qb_t;
      }
    }
    if constexpr (Adj) {
      A.zbar.v[e] = ab;
      for (int i = 0; i < N1; ++i) A.zbar.d[i][e] = pb[i];
    }
    if constexpr (Tan) {
      A.zbar_t.v[e] = ab_t;
      for (int i = 0; i < N1; ++i) A.zbar_t.d[i][e] = pb_t[i];
    }
  }
}

template <int N1, int N2>
void dispatch_flags(const SineJetBackwardArgs& A, bool adj, bool tan, bool zt, bool ybt) {
  const int key = (adj ? 8 : 0) | (tan ? 4 : 0) | (zt ? 2 : 0) | (ybt ? 1 : 0);
  switch (key) {
    case 8: case 9: case 10: case 11:
      return sine_jet_backward_kernel<N1, N2, true, false, false, false>(A);
    case 12: return sine_jet_backward_kernel<N1, N2, true, true, false, false>(A);
    case 13: return sine_jet_backward_kernel<N1, N2, true, true, false, true>(A);
    case 14: return sine_jet_backward_kernel<N1, N2, true, true, true, false>(A);
    case 15: return sine_jet_backward_kernel<N1, N2, true, true, true, true>(A);
    case 4: return sine_jet_backward_kernel<N1, N2, false, true, false, false>(A);
    case 5: return sine_jet_backward_kernel<N1, N2, false, true, false, true>(A);
    case 6: return sine_jet_backward_kernel<N1, N2, false, true, true, false>(A);
    case 7: return sine_jet_backward_kernel<N1, N2, false, true, true, true>(A);
    default: return;
  }
}

void dispatch_shape(const SineJetBackwardArgs& A, const JetLayout& L, bool adj, bool tan, bool zt, bool ybt) {
  switch (L.n1 * 4 + L.n2) {
    case 0: return dispatch_flags<0, 0>(A, adj, tan, zt, ybt);
    case 4: return dispatch_flags<1, 0>(A, adj, tan, zt, ybt);
    case 5: return dispatch_flags<1, 1>(A, adj, tan, zt, ybt);
    case 8: return dispatch_flags<2, 0>(A, adj, tan, zt, ybt);
    case 9: return dispatch_flags<2, 1>(A, adj, tan, zt, ybt);
    case 10: return dispatch_flags<2, 2>(A, adj, tan, zt, ybt);
    case 12: return dispatch_flags<3, 0>(A, adj, tan, zt, ybt);
    case 13: return dispatch_flags<3, 1>(A, adj, tan, zt, ybt);
    case 14: return dispatch_flags<3, 2>(A, adj, tan, zt, ybt);
    case 15: return dispatch_flags<3, 3>(A, adj, tan, zt, ybt);
    default: throw ContractViolation("sine_jet: unsupported jet layout");
  }
}

// Adjoint of the fused sine jet (skipped when `zbar` is null). When `zbar_t`
// is given, also returns the tangent of the adjoint (forward-over-reverse);
// missing `zt` / `ybar_t` mean zero.
void sine_jet_backward(const Tensor& z, const Tensor& y, double w, const JetLayout& L, const Tensor& ybar,
                       Tensor* zbar, const Tensor* zt, const Tensor* ybar_t, Tensor* zbar_t) {
  SineJetBackwardArgs A;
  A.m = z.rows() * L.block_cols;
  A.w = w;
  Eigen::VectorXd C(A.m);
  vmath::cos(z.data(), C.data(), static_cast<std::size_t>(A.m), w);
  A.S = y.data();
  A.C = C.data();
  A.z = ptrs(&z, L);
  A.ybar = ptrs(&ybar, L);
  A.zt = ptrs(zt, L);
  A.ybar_t = ptrs(ybar_t, L);
  A.zbar = mptrs(zbar, z, L);
  A.zbar_t = mptrs(zbar_t, z, L);
  dispatch_shape(A, L, zbar != nullptr, zbar_t != nullptr, zt != nullptr, ybar_t != nullptr);
}

// --- forward tangents ----------------------------------------------------

// Recomputes n.tangent from its parents' values and tangents; leaves it empty
// when no parent carries one. Leaf and constant tangents are left alone.
void compute_tangent(const Graph& g, Node& n) {
  if (n.op == Op::Leaf || n.op == Op::Constant) return;
  n.tangent.resize(0, 0);
  const Node& na = g.node(n.parents[0]);
  const Node* nb = n.parents[1] == kNoNode ? nullptr : &g.node(n.parents[1]);
  const Node* nc = n.parents[2] == kNoNode ? nullptr : &g.node(n.parents[2]);
  if (na.tangent.size() == 0 && (nb == nullptr || nb->tangent.size() == 0) &&
      (nc == nullptr || nc->tangent.size() == 0)) {
    return;
  }
  const Index rows = n.value.rows(), cols = n.value.cols();
  const Tensor* At = na.tangent.size() ? &na.tangent : nullptr;
  const Tensor& A = na.value;
  switch (n.op) {
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div: {
      Operand OA, OB;
      operand(na, rows, cols, OA);
      operand(*nb, rows, cols, OB);
      const auto av = OA.v->array();
      const auto bv = OB.v->array();
      Acc t;
      if (n.op == Op::Add) {
        if (OA.t) t.add(*OA.t);
        if (OB.t) t.add(*OB.t);
      } else if (n.op == Op::Sub) {
        if (OA.t) t.add(*OA.t);
        if (OB.t) t.add(-*OB.t);
      } else if (n.op == Op::Mul) {
        if (OA.t) t.add((OA.t->array() * bv).matrix());
        if (OB.t) t.add((av * OB.t->array()).matrix());
      } else {
        if (OA.t) t.add((OA.t->array() / bv).matrix());
        if (OB.t) t.add((-av * OB.t->array() / bv.square()).matrix());
      }
      n.tangent = std::move(t.t);
      return;
    }
    case Op::Neg:
      n.tangent = -*At;
      return;
    case Op::Scale:
      n.tangent = n.scalar * *At;
      return;
    case Op::AddConst:
      n.tangent = *At;
      return;
    case Op::Sin:
      n.tangent = (vcos(A).array() * At->array()).matrix();
      return;
    case Op::Cos:
      n.tangent = (-vsin(A).array() * At->array()).matrix();
      return;
    case Op::Exp:
      n.tangent = (n.value.array() * At->array()).matrix();
      return;
    case Op::Log:
      n.tangent = (At->array() / A.array()).matrix();
      return;
    case Op::Sqrt:
      n.tangent = (0.5 * At->array() / n.value.array()).matrix();
      return;
    case Op::Tanh:
      n.tangent = ((1.0 - n.value.array().square()) * At->array()).matrix();
      return;
    case Op::PowInt: {
      const int k = static_cast<int>(n.iarg[0]);
      n.tangent = k == 0 ? Tensor(Tensor::Zero(A.rows(), A.cols()))
                         : Tensor((double(k) * ipow(A, k - 1).array() * At->array()).matrix());
      return;
    }
    case Op::Sum:
      n.tangent = Tensor::Constant(1, 1, At->sum());
      return;
    case Op::Dot: {
      Acc t;
      if (At) t.add(Tensor::Constant(1, 1, At->cwiseProduct(nb->value).sum()));
      if (nb->tangent.size()) t.add(Tensor::Constant(1, 1, A.cwiseProduct(nb->tangent).sum()));
      n.tangent = std::move(t.t);
      return;
    }
    case Op::MatMul:
    case Op::Affine:
      if (At || nb->tangent.size()) {
        n.tangent.resize(rows, cols);
        if (At) {
          n.tangent.noalias() = *At * nb->value;
          if (nb->tangent.size()) n.tangent.noalias() += A * nb->tangent;
        } else {
          n.tangent.noalias() = A * nb->tangent;
        }
      } else {
        n.tangent.setZero(rows, cols);
      }
      if (n.op == Op::Affine && nc->tangent.size()) n.tangent.leftCols(n.iarg[0]).colwise() += nc->tangent.col(0);
      return;
    case Op::AddBias: {
      const Index c = n.iarg[0];
      n.tangent = At ? *At : Tensor(Tensor::Zero(rows, cols));
      if (nb->tangent.size()) n.tangent.leftCols(c).colwise() += nb->tangent.col(0);
      return;
    }
    case Op::Slice:
      n.tangent = At->block(n.iarg[0], n.iarg[1], n.iarg[2], n.iarg[3]);
      return;
    case Op::SineJet:
      sine_jet_tangent(A, *At, n.value, n.scalar, layout_of(n), n.tangent);
      return;
    case Op::Leaf:
    case Op::Constant:
      return;
  }
}

// --- reverse sweep --------------------------------------------------------

class ReverseSweep {
 public:
  ReverseSweep(const Graph& g, bool with_tangent)
      : g_(g), tangent_(with_tangent), adj_(g.size()), adj_t_(with_tangent ? g.size() : 0) {}

  // Tangent-only sweep over adjoints recorded by an earlier sweep of the same
  // graph and root.
  ReverseSweep(const Graph& g, std::vector<Tensor>&& adjoints)
      : g_(g), tangent_(true), adj_(std::move(adjoints)), adj_t_(g.size()), adj_on_(false) {
    require(adj_.size() == g.size(), "grad_hvp: adjoint cache does not belong to this graph");
  }

  void keep(NodeId id) { keep_.push_back(id); }
  void keep_all() { keep_all_ = true; }
  // Checks every adjoint and throws at the first non-finite one.
  void check_each() { check_each_ = true; }
  std::vector<Tensor> release() { return std::move(adj_); }

  void run(NodeId root) {
    std::vector<bool> keep(g_.size(), keep_all_);
    for (NodeId k : keep_) keep[static_cast<std::size_t>(k)] = true;
    if (adj_on_) adj_[static_cast<std::size_t>(root)] = Tensor::Ones(1, 1);
    for (NodeId id = root; id >= 0; --id) {
      const Node& n = g_.node(id);
      Tensor& Y = adj_[static_cast<std::size_t>(id)];
      if (Y.size() == 0 || !n.requires_grad) continue;
      if (check_each_ && !Y.allFinite()) {
        throw NumericalFailure("non-finite adjoint at node " + std::to_string(id) + " (" + op_name(n.op) + ")",
                               id);
      }
      Tensor* Yt = nullptr;
      if (tangent_ && adj_t_[static_cast<std::size_t>(id)].size() != 0) Yt = &adj_t_[static_cast<std::size_t>(id)];
      movable_ = adj_on_ && !keep[static_cast<std::size_t>(id)];
      step(n, Y, Yt);
      if (!keep[static_cast<std::size_t>(id)]) {
        // Interior adjoints are no longer needed.
        Y.resize(0, 0);
        if (tangent_) adj_t_[static_cast<std::size_t>(id)].resize(0, 0);
      }
    }
  }

  const Tensor& adjoint(NodeId id) const { return adj_[static_cast<std::size_t>(id)]; }
  const Tensor& adjoint_tangent(NodeId id) const { return adj_t_[static_cast<std::size_t>(id)]; }

 private:
  bool wants(NodeId p) const { return p != kNoNode && g_.node(p).requires_grad; }

  static void accum_into(Tensor& slot, const Node& parent, Tensor&& c) {
    if (!same_shape(c, parent.value)) c = Tensor::Constant(1, 1, c.sum());
    if (slot.size() == 0) {
      slot = std::move(c);
    } else {
      slot += c;
    }
  }
  void accum(NodeId p, Tensor&& c) { accum_into(adj_[static_cast<std::size_t>(p)], g_.node(p), std::move(c)); }
  void accum_t(NodeId p, Acc&& c) {
    if (c.empty()) return;
    accum_into(adj_t_[static_cast<std::size_t>(p)], g_.node(p), std::move(c.t));
  }

  // Passes the node's adjoint on unchanged; steals it when it is not kept.
  Tensor pass(Tensor& Y) const { return movable_ ? std::move(Y) : Tensor(Y); }

  void step(const Node& n, Tensor& Y, Tensor* Yt) {
    const NodeId pa = n.parents[0];
    const NodeId pb = n.parents[1];
    const NodeId pc = n.parents[2];
    const Index rows = n.value.rows(), cols = n.value.cols();
    switch (n.op) {
      case Op::Leaf:
      case Op::Constant:
        return;
      case Op::Add:
      case Op::Sub: {
        const double sb = n.op == Op::Add ? 1.0 : -1.0;
        if (wants(pb)) {
          if (adj_on_) accum(pb, sb * Y);
          if (tangent_ && Yt) accum_t(pb, Acc{sb * *Yt});
        }
        if (wants(pa)) {
          if (tangent_ && Yt) accum_t(pa, Acc{pass(*Yt)});
          if (adj_on_) accum(pa, pass(Y));
        }
        return;
      }
      case Op::Mul: {
        Operand A, B;
        operand(g_.node(pa), rows, cols, A);
        operand(g_.node(pb), rows, cols, B);
        if (wants(pa)) {
          if (adj_on_) accum(pa, (Y.array() * B.v->array()).matrix());
          if (tangent_) {
            Acc t;
            if (Yt) t.add((Yt->array() * B.v->array()).matrix());
            if (B.t) t.add((Y.array() * B.t->array()).matrix());
            accum_t(pa, std::move(t));
          }
        }
        if (wants(pb)) {
          if (adj_on_) accum(pb, (Y.array() * A.v->array()).matrix());
          if (tangent_) {
            Acc t;
            if (Yt) t.add((Yt->array() * A.v->array()).matrix());
            if (A.t) t.add((Y.array() * A.t->array()).matrix());
            accum_t(pb, std::move(t));
          }
        }
        return;
      }
      case Op::Div: {
        Operand A, B;
        operand(g_.node(pa), rows, cols, A);
        operand(g_.node(pb), rows, cols, B);
        const auto a = A.v->array();
        const auto b = B.v->array();
        if (wants(pa)) {
          if (adj_on_) accum(pa, (Y.array() / b).matrix());
          if (tangent_) {
            Acc t;
            if (Yt) t.add((Yt->array() / b).matrix());
            if (B.t) t.add((-Y.array() * B.t->array() / b.square()).matrix());
            accum_t(pa, std::move(t));
          }
        }
        if (wants(pb)) {
          if (adj_on_) accum(pb, (-Y.array() * a / b.square()).matrix());
          if (tangent_) {
            Acc t;
            if (Yt) t.add((-Yt->array() * a / b.square()).matrix());
            if (A.t) t.add((-Y.array() * A.t->array() / b.square()).matrix());
            if (B.t) t.add((2.0 * Y.array() * a * B.t->array() / (b.square() * b)).matrix());
            accum_t(pb, std::move(t));
          }
        }
        return;
      }
      case Op::Neg:
      case Op::Scale: {
        const double c = n.op == Op::Neg ? -1.0 : n.scalar;
        if (!wants(pa)) return;
        if (adj_on_) accum(pa, c * Y);
        if (tangent_ && Yt) accum_t(pa, Acc{c * *Yt});
        return;
      }
      case Op::AddConst:
        if (!wants(pa)) return;
        if (tangent_ && Yt) accum_t(pa, Acc{pass(*Yt)});
        if (adj_on_) accum(pa, pass(Y));
        return;
      case Op::Sin:
      case Op::Cos:
      case Op::Exp:
      case Op::Log:
      case Op::Sqrt:
      case Op::Tanh:
      case Op::PowInt:
        unary_step(n, Y, Yt);
        return;
      case Op::Sum: {
        if (!wants(pa)) return;
        const Node& p = g_.node(pa);
        if (adj_on_) accum(pa, Tensor::Constant(p.value.rows(), p.value.cols(), Y(0, 0)));
        if (tangent_ && Yt) accum_t(pa, Acc{Tensor::Constant(p.value.rows(), p.value.cols(), (*Yt)(0, 0))});
        return;
      }
      case Op::Dot: {
        const Node& a = g_.node(pa);
        const Node& b = g_.node(pb);
        const double y = Y(0, 0);
        if (wants(pa)) {
          if (adj_on_) accum(pa, y * b.value);
          if (tangent_) {
            Acc t;
            if (Yt) t.add((*Yt)(0, 0) * b.value);
            if (b.tangent.size()) t.add(y * b.tangent);
            accum_t(pa, std::move(t));
          }
        }
        if (wants(pb)) {
          if (adj_on_) accum(pb, y * a.value);
          if (tangent_) {
            Acc t;
            if (Yt) t.add((*Yt)(0, 0) * a.value);
            if (a.tangent.size()) t.add(y * a.tangent);
            accum_t(pb, std::move(t));
          }
        }
        return;
      }
      case Op::MatMul:
      case Op::Affine: {
        const Node& a = g_.node(pa);
        const Node& b = g_.node(pb);
        if (n.op == Op::Affine && wants(pc)) {
          const Index c = n.iarg[0];
          if (adj_on_) accum(pc, Y.leftCols(c).rowwise().sum());
          if (tangent_ && Yt) accum_t(pc, Acc{Yt->leftCols(c).rowwise().sum()});
        }
        if (wants(pa)) {
          if (adj_on_) {
            Tensor c;
            gemm_nt(Y, b.value, c, false);
            accum(pa, std::move(c));
          }
          if (tangent_ && (Yt || b.tangent.size())) {
            Tensor u = Tensor::Zero(a.value.rows(), a.value.cols());
            if (Yt) gemm_nt(*Yt, b.value, u, true);
            if (b.tangent.size()) gemm_nt(Y, b.tangent, u, true);
            accum_t(pa, Acc{std::move(u)});
          }
        }
        if (wants(pb)) {
          if (adj_on_) {
            Tensor c;
            c.noalias() = a.value.transpose() * Y;
            accum(pb, std::move(c));
          }
          if (tangent_ && (Yt || a.tangent.size())) {
            Tensor u;
            if (Yt) {
              u.noalias() = a.value.transpose() * *Yt;
              if (a.tangent.size()) u.noalias() += a.tangent.transpose() * Y;
            } else {
              u.noalias() = a.tangent.transpose() * Y;
            }
            accum_t(pb, Acc{std::move(u)});
          }
        }
        return;
      }
      case Op::AddBias: {
        const Index c = n.iarg[0];
        if (wants(pb)) {
          if (adj_on_) accum(pb, Y.leftCols(c).rowwise().sum());
          if (tangent_ && Yt) accum_t(pb, Acc{Yt->leftCols(c).rowwise().sum()});
        }
        if (wants(pa)) {
          if (tangent_ && Yt) accum_t(pa, Acc{pass(*Yt)});
          if (adj_on_) accum(pa, pass(Y));
        }
        return;
      }
      case Op::Slice: {
        if (!wants(pa)) return;
        const Node& p = g_.node(pa);
        if (adj_on_) {
          Tensor& slot = adj_[static_cast<std::size_t>(pa)];
          if (slot.size() == 0) slot = Tensor::Zero(p.value.rows(), p.value.cols());
          slot.block(n.iarg[0], n.iarg[1], n.iarg[2], n.iarg[3]) += Y;
        }
        if (tangent_ && Yt) {
          Tensor& ts = adj_t_[static_cast<std::size_t>(pa)];
          if (ts.size() == 0) ts = Tensor::Zero(p.value.rows(), p.value.cols());
          ts.block(n.iarg[0], n.iarg[1], n.iarg[2], n.iarg[3]) += *Yt;
        }
        return;
      }
      case Op::SineJet: {
        if (!wants(pa)) return;
        const Node& z = g_.node(pa);
        const JetLayout L = layout_of(n);
        Tensor zbar;
        if (tangent_) {
          Tensor zbar_t;
          sine_jet_backward(z.value, n.value, n.scalar, L, Y, adj_on_ ? &zbar : nullptr,
                            z.tangent.size() ? &z.tangent : nullptr, Yt, &zbar_t);
          if (adj_on_) accum(pa, std::move(zbar));
          accum_t(pa, Acc{std::move(zbar_t)});
        } else {
          sine_jet_backward(z.value, n.value, n.scalar, L, Y, &zbar, nullptr, nullptr, nullptr);
          if (adj_on_) accum(pa, std::move(zbar));
        }
        return;
      }
    }
  }

  // y = f(a): abar += f'(a) ybar; tangent: f''(a) a_t ybar + f'(a) ybar_t.
  void unary_step(const Node& n, const Tensor& Y, const Tensor* Yt) {
    const NodeId pa = n.parents[0];
    if (!wants(pa)) return;
    const Node& p = g_.node(pa);
    const Tensor& a = p.value;
    const Tensor& y = n.value;
    Tensor f1, f2;
    const bool need_f2 = tangent_ && p.tangent.size() != 0;
    switch (n.op) {
      case Op::Sin:
        f1 = vcos(a);
        if (need_f2) f2 = -y;
        break;
      case Op::Cos:
        f1 = -vsin(a);
        if (need_f2) f2 = -y;
        break;
      case Op::Exp:
        f1 = y;
        if (need_f2) f2 = y;
        break;
      case Op::Log:
        f1 = a.array().inverse().matrix();
        if (need_f2) f2 = (-a.array().square().inverse()).matrix();
        break;
      case Op::Sqrt:
        f1 = (0.5 / y.array()).matrix();
        if (need_f2) f2 = (-0.25 / (y.array() * y.array() * y.array())).matrix();
        break;
      case Op::Tanh:
        f1 = (1.0 - y.array().square()).matrix();
        if (need_f2) f2 = (-2.0 * y.array() * (1.0 - y.array().square())).matrix();
        break;
      case Op::PowInt: {
        const int k = static_cast<int>(n.iarg[0]);
        f1 = k == 0 ? Tensor(Tensor::Zero(a.rows(), a.cols())) : Tensor(double(k) * ipow(a, k - 1));
        if (need_f2) {
          f2 = k < 2 ? Tensor(Tensor::Zero(a.rows(), a.cols())) : Tensor(double(k) * double(k - 1) * ipow(a, k - 2));
        }
        break;
      }
      default:
        throw ContractViolation("unary_step: unexpected op");
    }
    if (tangent_) {
      Acc t;
      if (need_f2) t.add((f2.array() * p.tangent.array() * Y.array()).matrix());
      if (Yt) t.add((f1.array() * Yt->array()).matrix());
      accum_t(pa, std::move(t));
    }
    if (adj_on_) accum(pa, (f1.array() * Y.array()).matrix());
  }

  const Graph& g_;
  bool tangent_;
  std::vector<Tensor> adj_;
  std::vector<Tensor> adj_t_;
  std::vector<NodeId> keep_;
  bool movable_ = false;
  bool adj_on_ = true;
  bool keep_all_ = false;
  bool check_each_ = false;
};

void check_root(const Graph& g, const Var& root) {
  require(root.valid() && &root.graph() == &g, "grad: root is not on this graph");
  require(root.rows() == 1 && root.cols() == 1, "grad: root must be a scalar (1x1) node");
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Constant: return "constant";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Neg: return "neg";
    case Op::Scale: return "scale";
    case Op::AddConst: return "add_const";
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sqrt: return "sqrt";
    case Op::Tanh: return "tanh";
    case Op::PowInt: return "pow_int";
    case Op::Sum: return "sum";
    case Op::Dot: return "dot";
    case Op::MatMul: return "matmul";
    case Op::AddBias: return "add_bias";
    case Op::SineJet: return "sine_jet";
    case Op::Slice: return "slice";
    case Op::Affine: return "affine";
  }
  return "?";
}

const Tensor& Var::value() const { return graph_->node(id_).value; }
const Tensor& Var::tangent() const { return graph_->node(id_).tangent; }
double Var::scalar() const {
  const Tensor& v = value();
  require(v.size() == 1, "Var::scalar on a non-scalar node");
  return v(0, 0);
}

Graph::Graph() {
  // Tape tensors are large and short-lived. Keeping freed blocks in the heap
  // instead of returning them to the OS avoids a page-fault storm on every
  // rebuild.
  static std::once_flag tuned;
  std::call_once(tuned, [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
  });
}

Var Graph::push(Node node) {
  compute_tangent(*this, node);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<NodeId>(nodes_.size() - 1));
}

void Graph::seed_tangents(std::span<const Var> leaves, std::span<const Tensor> tangents) {
  require(leaves.size() == tangents.size(), "seed_tangents: one tangent per leaf");
  for (Node& n : nodes_) {
    if (n.op == Op::Leaf) n.tangent.resize(0, 0);
  }
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    require(leaves[i].valid() && &leaves[i].graph() == this, "seed_tangents: leaf is not on this graph");
    Node& n = nodes_[static_cast<std::size_t>(leaves[i].id())];
    require(n.op == Op::Leaf, "seed_tangents: not a leaf");
    require(tangents[i].size() == 0 || same_shape(n.value, tangents[i]), "seed_tangents: tangent shape mismatch");
    n.tangent = tangents[i];
  }
  for (Node& n : nodes_) compute_tangent(*this, n);
}

Var Graph::variable(Tensor value, Tensor tangent) {
  require(tangent.size() == 0 || same_shape(value, tangent), "variable: tangent shape mismatch");
  Node n;
  n.op = Op::Leaf;
  n.requires_grad = true;
  n.value = std::move(value);
  n.tangent = std::move(tangent);
  return push(std::move(n));
}

Var Graph::constant(Tensor value) {
  Node n;
  n.op = Op::Constant;
  n.value = std::move(value);
  return push(std::move(n));
}

Var operator+(const Var& a, const Var& b) { return binary(Op::Add, a, b); }
Var operator-(const Var& a, const Var& b) { return binary(Op::Sub, a, b); }
Var operator*(const Var& a, const Var& b) { return binary(Op::Mul, a, b); }
Var operator/(const Var& a, const Var& b) { return binary(Op::Div, a, b); }
Var operator-(const Var& a) { return unary(Op::Neg, a); }
Var operator+(const Var& a, double c) { return unary(Op::AddConst, a, c); }
Var operator+(double c, const Var& a) { return unary(Op::AddConst, a, c); }
Var operator-(const Var& a, double c) { return unary(Op::AddConst, a, -c); }
Var operator-(double c, const Var& a) { return unary(Op::AddConst, unary(Op::Neg, a), c); }
Var operator*(const Var& a, double c) { return unary(Op::Scale, a, c); }
Var operator*(double c, const Var& a) { return unary(Op::Scale, a, c); }
Var operator/(const Var& a, double c) { return unary(Op::Scale, a, 1.0 / c); }
Var operator/(double c, const Var& a) { return binary(Op::Div, a.graph().constant(c), a); }

Var sin(const Var& a) { return unary(Op::Sin, a); }
Var cos(const Var& a) { return unary(Op::Cos, a); }
Var exp(const Var& a) { return unary(Op::Exp, a); }
Var log(const Var& a) { return unary(Op::Log, a); }
Var sqrt(const Var& a) { return unary(Op::Sqrt, a); }
Var tanh(const Var& a) { return unary(Op::Tanh, a); }
Var pow(const Var& a, int k) { return unary(Op::PowInt, a, 0.0, k); }
Var square(const Var& a) { return unary(Op::PowInt, a, 0.0, 2); }
Var sum(const Var& a) { return unary(Op::Sum, a); }
Var mean(const Var& a) { return unary(Op::Sum, a) * (1.0 / static_cast<double>(a.value().size())); }

Var dot(const Var& a, const Var& b) {
  Graph& g = graph_of(a, b);
  const Node& na = g.node(a.id());
  const Node& nb = g.node(b.id());
  require(same_shape(na.value, nb.value), "dot: shape mismatch");
  Node n = make_node(Op::Dot, {&a, &b});
  n.value = Tensor::Constant(1, 1, na.value.cwiseProduct(nb.value).sum());
  return g.push(std::move(n));
}

Var matmul(const Var& a, const Var& b) {
  Graph& g = graph_of(a, b);
  const Node& na = g.node(a.id());
  const Node& nb = g.node(b.id());
  require(na.value.cols() == nb.value.rows(), "matmul: inner dimension mismatch");
  Node n = make_node(Op::MatMul, {&a, &b});
  n.value.noalias() = na.value * nb.value;
  return g.push(std::move(n));
}

Var add_bias(const Var& z, const Var& b, Eigen::Index columns) {
  Graph& g = graph_of(z, b);
  const Node& nz = g.node(z.id());
  const Node& nb = g.node(b.id());
  const Eigen::Index c = columns < 0 ? nz.value.cols() : columns;
  require(nb.value.cols() == 1 && nb.value.rows() == nz.value.rows(), "add_bias: bias must be rows x 1");
  require(c <= nz.value.cols(), "add_bias: column count out of range");
  Node n = make_node(Op::AddBias, {&z, &b});
  n.iarg[0] = c;
  n.value = nz.value;
  n.value.leftCols(c).colwise() += nb.value.col(0);
  return g.push(std::move(n));
}

Var affine(const Var& w, const Var& x, const Var& b, Eigen::Index columns) {
  Graph& g = graph_of(w, x);
  graph_of(w, b);
  const Node& nw = g.node(w.id());
  const Node& nx = g.node(x.id());
  const Node& nb = g.node(b.id());
  require(nw.value.cols() == nx.value.rows(), "affine: inner dimension mismatch");
  const Eigen::Index c = columns < 0 ? nx.value.cols() : columns;
  require(nb.value.cols() == 1 && nb.value.rows() == nw.value.rows(), "affine: bias must be rows x 1");
  require(c <= nx.value.cols(), "affine: column count out of range");
  Node n = make_node(Op::Affine, {&w, &x, &b});
  n.iarg[0] = c;
  n.value.noalias() = nw.value * nx.value;
  n.value.leftCols(c).colwise() += nb.value.col(0);
  return g.push(std::move(n));
}

Var slice(const Var& a, Eigen::Index row, Eigen::Index col, Eigen::Index rows, Eigen::Index cols) {
  require(a.valid(), "invalid Var");
  Graph& g = a.graph();
  const Node& na = g.node(a.id());
  require(row >= 0 && col >= 0 && row + rows <= na.value.rows() && col + cols <= na.value.cols(),
          "slice: block out of range");
  Node n = make_node(Op::Slice, {&a});
  n.iarg = {row, col, rows, cols};
  n.value = na.value.block(row, col, rows, cols);
  return g.push(std::move(n));
}

Var sine_jet(const Var& z, double omega, const JetLayout& layout) {
  require(z.valid(), "invalid Var");
  Graph& g = z.graph();
  const Node& nz = g.node(z.id());
  require(layout.n2 <= layout.n1, "sine_jet: second-order directions must be a prefix of the first-order ones");
  require(nz.value.cols() == layout.block_cols * layout.blocks(), "sine_jet: column count does not match layout");
  Node n = make_node(Op::SineJet, {&z});
  n.scalar = omega;
  n.iarg = {layout.block_cols, layout.n1, layout.n2, 0};
  sine_jet_forward(nz.value, omega, layout, n.value);
  return g.push(std::move(n));
}

void append_row_major(const Tensor& t, Eigen::VectorXd& out, Eigen::Index& offset) {
  for (Eigen::Index r = 0; r < t.rows(); ++r) {
    for (Eigen::Index c = 0; c < t.cols(); ++c) out[offset++] = t(r, c);
  }
}

namespace {
Eigen::Index total_size(std::span<const Var> wrt) {
  Eigen::Index n = 0;
  for (const Var& v : wrt) n += v.value().size();
  return n;
}

void gather(const Graph& g, std::span<const Var> wrt, Eigen::VectorXd& out,
            const std::function<const Tensor&(NodeId)>& pick) {
  out = Eigen::VectorXd::Zero(total_size(wrt));
  Eigen::Index off = 0;
  for (const Var& v : wrt) {
    require(&v.graph() == &g, "grad: wrt node is not on this graph");
    const Tensor& a = pick(v.id());
    if (a.size() == 0) {
      off += v.value().size();
    } else {
      append_row_major(a, out, off);
    }
  }
}
}  // namespace

// A non-finite adjoint always reaches the wrt adjoints, so sweeps check only
// their result. On failure the sweep is repeated with per-node checks to name
// the node where it started.
[[noreturn]] static void diagnose(const Graph& graph, const Var& root) {
  ReverseSweep sweep(graph, false);
  sweep.check_each();
  sweep.run(root.id());
  // Only the tangent half went non-finite.
  throw NumericalFailure("non-finite Hessian-vector product at root " + std::to_string(root.id()), root.id());
}

Eigen::VectorXd grad(const Graph& graph, const Var& root, std::span<const Var> wrt, AdjointCache* cache) {
  check_root(graph, root);
  ReverseSweep sweep(graph, false);
  for (const Var& v : wrt) sweep.keep(v.id());
  if (cache) sweep.keep_all();
  sweep.run(root.id());
  Eigen::VectorXd out;
  gather(graph, wrt, out, [&](NodeId id) -> const Tensor& { return sweep.adjoint(id); });
  if (!out.allFinite()) diagnose(graph, root);
  if (cache) cache->adjoints = sweep.release();
  return out;
}

GradHvp grad_hvp(const Graph& graph, const Var& root, std::span<const Var> wrt, AdjointCache* cache) {
  check_root(graph, root);
  ReverseSweep sweep = cache ? ReverseSweep(graph, std::move(cache->adjoints)) : ReverseSweep(graph, true);
  if (cache) cache->adjoints.clear();
  for (const Var& v : wrt) sweep.keep(v.id());
  sweep.run(root.id());
  GradHvp r;
  gather(graph, wrt, r.grad, [&](NodeId id) -> const Tensor& { return sweep.adjoint(id); });
  gather(graph, wrt, r.hvp, [&](NodeId id) -> const Tensor& { return sweep.adjoint_tangent(id); });
  if (!r.grad.allFinite() || !r.hvp.allFinite()) diagnose(graph, root);
  return r;
}

}  // namespace metapde::ad
