#include <bit>
#include <fstream>
#include <iterator>

#include "metapde/bench/bench.hpp"

namespace metapde::bench {

namespace {

constexpr char kMagic[4] = {'M', 'P', 'D', 'E'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& b, std::size_t end) : b_(b), end_(end) {}
  std::uint64_t uint(int n) {
    if (pos_ + static_cast<std::size_t>(n) > end_) throw InputError("checkpoint is truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  std::uint64_t u64() { return uint(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t pos() const { return pos_; }
  void skip(std::size_t n) { pos_ += n; }
  std::size_t remaining() const { return end_ - pos_; }

 private:
  const std::string& b_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

template <class E>
E to_enum(std::uint32_t v, std::uint32_t count, const char* what) {
  if (v >= count) throw InputError(std::string("checkpoint has an unknown ") + what + " tag");
  return static_cast<E>(v);
}

}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t size) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

meta::MetaConfig Checkpoint::meta_config(int heldout_tasks) const {
  meta::MetaConfig m;
  m.method = state.method;
  m.distribution = distribution;
  m.net = state.net;
  m.inner_steps = state.inner_steps;
  m.clip_norm = state.clip_norm;
  m.points = points;
  m.heldout_tasks = heldout_tasks;
  m.heldout_seed = heldout_seed;
  m.inner_optimizer = state.method == meta::Method::Maml ? meta::OptimizerKind::Sgd : meta::OptimizerKind::Adam;
  return m;
}

Checkpoint make_checkpoint(const RunConfig& cfg, const meta::MetaState& state) {
  Checkpoint c;
  c.state = state;
  c.distribution = cfg.meta.distribution;
  c.points = cfg.meta.points;
  c.heldout_seed = cfg.meta.heldout_seed;
  return c;
}

std::string encode_checkpoint(const Checkpoint& c) {
  c.state.validate();
  const auto& s = c.state;
  const auto& el = c.distribution.elastic;
  Writer w;
  w.raw(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(c.distribution.family));
  w.u32(static_cast<std::uint32_t>(s.method));
  w.u32(static_cast<std::uint32_t>(c.distribution.variant));
  w.u32(static_cast<std::uint32_t>(s.net.input_dim));
  w.u32(static_cast<std::uint32_t>(s.net.output_dim));
  w.u32(static_cast<std::uint32_t>(s.net.hidden_layers));
  w.u32(static_cast<std::uint32_t>(s.net.layer_width));
  w.f64(s.net.omega0);
  w.u32(static_cast<std::uint32_t>(s.inner_steps));
  w.f64(s.clip_norm);
  w.u32(static_cast<std::uint32_t>(c.points));
  w.u64(c.heldout_seed);
  for (double v : {el.lambda, el.mu, el.delta, el.L0, el.boundary_weight, el.stretch1, el.stretch2}) w.f64(v);
  w.u64(static_cast<std::uint64_t>(s.theta0.size()));
  for (Eigen::Index i = 0; i < s.theta0.size(); ++i) w.f64(s.theta0[i]);
  w.u64(static_cast<std::uint64_t>(s.alpha.rows()));
  w.u64(static_cast<std::uint64_t>(s.alpha.cols()));
  for (Eigen::Index r = 0; r < s.alpha.rows(); ++r) {
    for (Eigen::Index k = 0; k < s.alpha.cols(); ++k) w.f64(s.alpha(r, k));
  }
  const std::uint64_t sum = fnv1a64(w.bytes().data(), w.bytes().size());
  w.u64(sum);
  return std::move(w.bytes());
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 16 || bytes.compare(0, 4, kMagic, 4) != 0) throw InputError("not a checkpoint (bad magic)");
  const std::size_t body = bytes.size() - 8;
  Reader tail(bytes, bytes.size());
  tail.skip(body);
  if (tail.u64() != fnv1a64(bytes.data(), body)) throw InputError("checkpoint checksum mismatch");

  Reader r(bytes, body);
  r.skip(4);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw InputError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint c;
  auto& s = c.state;
  auto& el = c.distribution.elastic;
  c.distribution.family = to_enum<tasks::Family>(r.u32(), 3, "family");
  s.method = to_enum<meta::Method>(r.u32(), 2, "method");
  c.distribution.variant = to_enum<tasks::Variant>(r.u32(), 4, "distribution");
  s.net.input_dim = static_cast<int>(r.u32());
  s.net.output_dim = static_cast<int>(r.u32());
  s.net.hidden_layers = static_cast<int>(r.u32());
  s.net.layer_width = static_cast<int>(r.u32());
  s.net.omega0 = r.f64();
  s.inner_steps = static_cast<int>(r.u32());
  s.clip_norm = r.f64();
  c.points = static_cast<int>(r.u32());
  c.heldout_seed = r.u64();
  for (double* v : {&el.lambda, &el.mu, &el.delta, &el.L0, &el.boundary_weight, &el.stretch1, &el.stretch2}) {
    *v = r.f64();
  }
  const std::uint64_t P = r.u64();
  if (P > r.remaining() / 8) throw InputError("checkpoint is truncated");
  s.theta0.resize(static_cast<Eigen::Index>(P));
  for (Eigen::Index i = 0; i < s.theta0.size(); ++i) s.theta0[i] = r.f64();
  const std::uint64_t rows = r.u64(), cols = r.u64();
  if (cols != 0 && rows > r.remaining() / 8 / cols) throw InputError("checkpoint is truncated");
  s.alpha.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < s.alpha.rows(); ++i) {
    for (Eigen::Index k = 0; k < s.alpha.cols(); ++k) s.alpha(i, k) = r.f64();
  }
  if (r.remaining() != 0) throw InputError("checkpoint has trailing bytes");
  try {
    s.validate();
  } catch (const ContractViolation& e) {
    throw InputError(std::string("inconsistent checkpoint: ") + e.what());
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  const std::string bytes = encode_checkpoint(c);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw InputError("cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw InputError("cannot write " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot read " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace metapde::bench
