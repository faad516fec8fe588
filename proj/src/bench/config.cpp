#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "metapde/bench/bench.hpp"

namespace metapde::bench {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const ConfigEntry& e, const char* expected) {
  throw InputError(e.origin + ": " + (e.section.empty() ? "" : e.section + ".") + e.key + " = '" + e.value +
                   "' is not " + expected);
}

double to_double(const ConfigEntry& e) {
  double v = 0.0;
  const char* end = e.value.data() + e.value.size();
  auto [p, ec] = std::from_chars(e.value.data(), end, v);
  if (ec != std::errc() || p != end || !std::isfinite(v)) bad_value(e, "a finite number");
  return v;
}

long long to_integer(const ConfigEntry& e, long long lo, long long hi) {
  long long v = 0;
  const char* end = e.value.data() + e.value.size();
  auto [p, ec] = std::from_chars(e.value.data(), end, v);
  if (ec != std::errc() || p != end || v < lo || v > hi) bad_value(e, "an integer in range");
  return v;
}

int to_int(const ConfigEntry& e) {
  return static_cast<int>(to_integer(e, std::numeric_limits<int>::min(), std::numeric_limits<int>::max()));
}

std::uint64_t to_u64(const ConfigEntry& e) {
  std::uint64_t v = 0;
  const char* end = e.value.data() + e.value.size();
  auto [p, ec] = std::from_chars(e.value.data(), end, v);
  if (ec != std::errc() || p != end) bad_value(e, "an unsigned integer");
  return v;
}

bool is_run_key(const ConfigEntry& e, const char* key) {
  return (e.section.empty() || e.section == "run") && e.key == key;
}

struct Table {
  int layers, width, K;
  double inner_lr, outer_lr;
  int points, iterations;
};

// Network, inner steps and rates, then points and iterations.
Table table_row(tasks::Family f, meta::Method m) {
  using tasks::Family;
  if (m == meta::Method::Maml) {
    switch (f) {
      case Family::Poisson:
        return {3, 64, 5, 1.0e-4, 1.0e-5, 2048, 120000};
      case Family::Burgers:
        return {8, 64, 5, 1.0e-4, 1.0e-5, 1024, 60000};
      case Family::Elasticity:
        return {5, 64, 5, 1.0e-5, 5.0e-6, 1024, 180000};
    }
  } else {
    switch (f) {
      case Family::Poisson:
        return {5, 64, 60, 2.5e-5, 5.0e-5, 4096, 55000};
      case Family::Burgers:
        return {10, 128, 80, 1.0e-6, 5.0e-5, 2048, 7000};
      case Family::Elasticity:
        return {10, 128, 20, 5.0e-6, 5.0e-6, 1024, 140000};
    }
  }
  throw ContractViolation("unknown family");
}

}  // namespace

RunConfig default_config(tasks::Family family, meta::Method method) {
  const Table t = table_row(family, method);
  RunConfig c;
  meta::MetaConfig& m = c.meta;
  m.method = method;
  m.distribution.family = family;
  m.distribution.variant = tasks::Variant::Full;
  m.net.input_dim = 2;
  m.net.output_dim = family == tasks::Family::Elasticity ? 2 : 1;
  m.net.hidden_layers = t.layers;
  m.net.layer_width = t.width;
  m.net.omega0 = 3.0;
  m.inner_steps = t.K;
  m.inner_lr = t.inner_lr;
  m.outer_lr = t.outer_lr;
  m.clip_norm = 100.0;
  m.batch_size = 8;
  m.points = t.points;
  m.iterations = t.iterations;
  m.inner_optimizer = method == meta::Method::Maml ? meta::OptimizerKind::Sgd : meta::OptimizerKind::Adam;
  m.outer_optimizer = meta::OptimizerKind::Adam;
  m.seed = 0;
  return c;
}

std::vector<ConfigEntry> parse_config(const std::string& text, const std::string& origin) {
  std::vector<ConfigEntry> out;
  std::istringstream in(text);
  std::string line, section;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::string where = origin + ":" + std::to_string(n);
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']' || s.size() < 3) throw InputError(where + ": malformed section header");
      section = trim(s.substr(1, s.size() - 2));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw InputError(where + ": expected 'key = value'");
    ConfigEntry e{section, trim(s.substr(0, eq)), trim(s.substr(eq + 1)), where};
    if (e.key.empty()) throw InputError(where + ": empty key");
    out.push_back(std::move(e));
  }
  return out;
}

ConfigEntry parse_override(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw InputError("override '" + text + "' is not section.key=value");
  ConfigEntry e;
  e.origin = "command line";
  std::string key = trim(text.substr(0, eq));
  e.value = trim(text.substr(eq + 1));
  const auto dot = key.find('.');
  if (dot != std::string::npos) {
    e.section = key.substr(0, dot);
    key = key.substr(dot + 1);
  }
  e.key = key;
  if (e.key.empty()) throw InputError("override '" + text + "' has an empty key");
  return e;
}

RunConfig resolve_config(std::span<const ConfigEntry> entries) {
  tasks::Family family = tasks::Family::Poisson;
  meta::Method method = meta::Method::Maml;
  for (const auto& e : entries) {
    if (is_run_key(e, "family")) family = tasks::parse_family(e.value);
    if (is_run_key(e, "method")) method = meta::parse_method(e.value);
  }
  RunConfig c = default_config(family, method);
  meta::MetaConfig& m = c.meta;
  tasks::ElasticTaskParams& el = m.distribution.elastic;

  for (const auto& e : entries) {
    const std::string& k = e.key;
    bool known = true;
    if (e.section.empty() || e.section == "run") {
      if (k == "family" || k == "method") {
      } else if (k == "seed") {
        m.seed = to_u64(e);
      } else if (k == "out_dir") {
        c.out_dir = e.value;
      } else {
        known = false;
      }
    } else if (e.section == "net") {
      if (k == "hidden_layers") {
        m.net.hidden_layers = to_int(e);
      } else if (k == "layer_width") {
        m.net.layer_width = to_int(e);
      } else if (k == "omega0") {
        m.net.omega0 = to_double(e);
      } else {
        known = false;
      }
    } else if (e.section == "meta") {
      if (k == "inner_steps") {
        m.inner_steps = to_int(e);
      } else if (k == "inner_lr") {
        m.inner_lr = to_double(e);
      } else if (k == "outer_lr") {
        m.outer_lr = to_double(e);
      } else if (k == "clip_norm") {
        m.clip_norm = to_double(e);
      } else if (k == "batch_size") {
        m.batch_size = to_int(e);
      } else if (k == "iterations") {
        m.iterations = to_int(e);
      } else if (k == "points") {
        m.points = to_int(e);
      } else if (k == "inner_optimizer") {
        m.inner_optimizer = meta::parse_optimizer(e.value);
      } else if (k == "outer_optimizer") {
        m.outer_optimizer = meta::parse_optimizer(e.value);
      } else if (k == "eval_every") {
        m.eval_every = to_int(e);
      } else if (k == "heldout_tasks") {
        m.heldout_tasks = to_int(e);
      } else if (k == "heldout_seed") {
        m.heldout_seed = to_u64(e);
      } else {
        known = false;
      }
    } else if (e.section == "sampler") {
      if (k == "variant") {
        m.distribution.variant = tasks::parse_variant(e.value);
      } else if (k == "lambda") {
        el.lambda = to_double(e);
      } else if (k == "mu") {
        el.mu = to_double(e);
      } else if (k == "delta") {
        el.delta = to_double(e);
      } else if (k == "cell_size") {
        el.L0 = to_double(e);
      } else if (k == "boundary_weight") {
        el.boundary_weight = to_double(e);
      } else if (k == "stretch1") {
        el.stretch1 = to_double(e);
      } else if (k == "stretch2") {
        el.stretch2 = to_double(e);
      } else {
        known = false;
      }
    } else {
      throw InputError(e.origin + ": unknown section [" + e.section + "]");
    }
    if (!known) {
      throw InputError(e.origin + ": unknown key '" + k + "'" + (e.section.empty() ? "" : " in [" + e.section + "]"));
    }
  }
  if (m.distribution.variant != tasks::Variant::Full) {
    // Fails early on variants the family does not define.
    (void)m.distribution.sample(0);
  }
  try {
    m.validate();
  } catch (const ContractViolation& e) {
    throw InputError(e.what());
  }
  return c;
}

std::string manifest(const RunConfig& c) {
  const meta::MetaConfig& m = c.meta;
  const tasks::ElasticTaskParams& el = m.distribution.elastic;
  std::ostringstream os;
  os << "# effective configuration\n"
     << "[run]\n"
     << "family = " << tasks::family_name(m.distribution.family) << "\n"
     << "method = " << meta::method_name(m.method) << "\n"
     << "seed = " << m.seed << "\n"
     << "out_dir = " << c.out_dir.string() << "\n\n"
     << "[net]\n"
     << "hidden_layers = " << m.net.hidden_layers << "\n"
     << "layer_width = " << m.net.layer_width << "\n"
     << "omega0 = " << format_double(m.net.omega0) << "\n\n"
     << "[meta]\n"
     << "inner_steps = " << m.inner_steps << "\n"
     << "inner_lr = " << format_double(m.inner_lr) << "\n"
     << "outer_lr = " << format_double(m.outer_lr) << "\n"
     << "clip_norm = " << format_double(m.clip_norm) << "\n"
     << "batch_size = " << m.batch_size << "\n"
     << "iterations = " << m.iterations << "\n"
     << "points = " << m.points << "\n"
     << "inner_optimizer = " << meta::optimizer_name(m.inner_optimizer) << "\n"
     << "outer_optimizer = " << meta::optimizer_name(m.outer_optimizer) << "\n"
     << "eval_every = " << m.eval_every << "\n"
     << "heldout_tasks = " << m.heldout_tasks << "\n"
     << "heldout_seed = " << m.heldout_seed << "\n\n"
     << "[sampler]\n"
     << "variant = " << tasks::variant_name(m.distribution.variant) << "\n";
  if (m.distribution.family == tasks::Family::Elasticity) {
    os << "lambda = " << format_double(el.lambda) << "\n"
       << "mu = " << format_double(el.mu) << "\n"
       << "delta = " << format_double(el.delta) << "\n"
       << "cell_size = " << format_double(el.L0) << "\n"
       << "boundary_weight = " << format_double(el.boundary_weight) << "\n"
       << "stretch1 = " << format_double(el.stretch1) << "\n"
       << "stretch2 = " << format_double(el.stretch2) << "\n";
  }
  return os.str();
}

}  // namespace metapde::bench
