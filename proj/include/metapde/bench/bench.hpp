#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "metapde/meta/meta.hpp"
#include "metapde/oracles/oracles.hpp"

namespace metapde::bench {

// ------------------------------------------------------------- configuration

/// Everything a training run needs. The family lives in
/// meta.distribution.family.
struct RunConfig {
  meta::MetaConfig meta;
  std::filesystem::path out_dir = ".";

  tasks::Family family() const { return meta.distribution.family; }
};

/// Default hyperparameters for one (family, method) pair, with the
/// distribution's default variant and seed 0.
RunConfig default_config(tasks::Family family, meta::Method method);

/// One `key = value` line; `section` is empty before the first header.
struct ConfigEntry {
  std::string section;
  std::string key;
  std::string value;
  std::string origin;  // "file:line" or "command line", for messages
};

/// Grammar: blank lines and lines starting with '#' or ';' are ignored,
/// `[name]` opens a section, every other line is `key = value`. Throws
/// InputError on malformed lines.
std::vector<ConfigEntry> parse_config(const std::string& text, const std::string& origin);
/// "section.key=value" (or "key=value" for the run section).
ConfigEntry parse_override(const std::string& text);

/// Starts from default_config(family, method), where family and method come
/// from the entries (last one wins; poisson and maml when absent), then
/// applies every other entry in order. Unknown sections or keys and bad
/// values throw InputError; the result is validated.
RunConfig resolve_config(std::span<const ConfigEntry> entries);

/// Effective configuration in the same grammar; resolve_config() of its
/// parse reproduces `cfg`.
std::string manifest(const RunConfig& cfg);

// ---------------------------------------------------------------- checkpoint

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// A trained meta-state plus what is needed to rebuild its task
/// distribution and held-out set.
struct Checkpoint {
  meta::MetaState state;
  tasks::TaskDistribution distribution;
  int points = 0;  // collocation points per task used in training
  std::uint64_t heldout_seed = 0;

  /// MetaConfig carrying the distribution, network and held-out settings.
  meta::MetaConfig meta_config(int heldout_tasks = 8) const;
};

Checkpoint make_checkpoint(const RunConfig& cfg, const meta::MetaState& state);

/// Little-endian binary image ending in a 64-bit FNV-1a checksum of all
/// preceding bytes.
std::string encode_checkpoint(const Checkpoint& c);
/// Throws InputError on a bad magic, version, length or checksum.
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::uint64_t fnv1a64(const void* data, std::size_t size);

// -------------------------------------------------------------- field dumps

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);
/// 17 significant digits, as used in every CSV file.
std::string csv_double(double v);

/// Regular n x n grid over [lo, hi]^2, as 2 x n^2 columns.
Eigen::MatrixXd regular_grid(const Eigen::Vector2d& lo, const Eigen::Vector2d& hi, int n);

/// Nodes of an n x n grid over the task's bounding box that lie in its
/// closed domain (pores excluded). Not for time-dependent tasks.
Eigen::MatrixXd domain_grid(const tasks::Task& task, int n);

/// `x1,x2,u` (or `X1,X2,u1,u2` for two components) rows for each column of
/// `points`.
void write_point_field(std::ostream& os, const Eigen::MatrixXd& points, const Eigen::MatrixXd& values);

/// Header `t,x_1..x_nx`, then one `t,u_1..u_nx` row per snapshot.
void write_snapshots(std::ostream& os, std::span<const double> x, std::span<const double> times,
                     const Eigen::MatrixXd& rows);

/// Field of a network on the points of a regular evaluation grid that lie in
/// the task's domain (Poisson, elasticity) or on a space-time grid
/// (Burgers, `nx` cell centres by `snapshots` times).
void dump_network_field(std::ostream& os, const tasks::Task& task, const siren::NetConfig& net,
                        const siren::ParamVector& params, int grid, int snapshots);

// ----------------------------------------------------------------- oracles

/// Reference solution of a held-out task and a sampler for its domain.
struct Reference {
  oracles::Field field;
  oracles::DomainSampler domain;
};

/// The family's oracle: exact radial solution (narrow Poisson), FV at
/// `burgers_nx` cells (Burgers), closed-form affine map (affine elasticity).
/// Throws InputError for tasks without an oracle.
Reference family_reference(const tasks::TaskSpec& task, int burgers_nx = 2048);

/// Network as an oracles::Field.
oracles::Field network_field(const siren::NetConfig& net, const siren::ParamVector& params);

// ------------------------------------------------------------------ bench

struct BenchRow {
  int task = 0;
  int steps = 0;
  double seconds = 0.0;
  double mse = 0.0;
  double final_loss = 0.0;
};

/// Classical solver on the same task, for Pareto comparison.
struct OracleRow {
  int task = 0;
  std::string solver;
  int resolution = 0;
  double seconds = 0.0;
  double mse = 0.0;
};

struct BenchOptions {
  int tasks = 8;
  std::vector<int> steps{0, 5, 10, 20, 40};
  int points = 0;  // 0: the checkpoint's training points
  int mse_points = 1024;
  int burgers_nx = 2048;
  /// Coarser FV resolutions timed against the reference (Burgers only).
  std::vector<int> oracle_resolutions{64, 128, 256, 512};
};

/// For each held-out task and step count, adapts from the meta-state with
/// its own timer and scores against the family oracle. Rows come out in
/// task order, then step order.
std::vector<BenchRow> run_bench(const Checkpoint& c, const BenchOptions& options,
                                std::vector<OracleRow>* oracle_rows = nullptr);

void write_bench_csv(std::ostream& os, std::span<const BenchRow> rows);
void write_oracle_csv(std::ostream& os, std::span<const OracleRow> rows);

// ---------------------------------------------------------------- commands

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumerical = 3;

struct TrainOptions {
  std::vector<ConfigEntry> entries;  // config file entries, then overrides
  std::filesystem::path resume;      // optional checkpoint to continue from
};

/// Writes checkpoint.mpde, manifest.ini and an append-only train_log.csv in
/// the output directory. Returns kExitNumerical when more than half of the
/// outer steps were skipped or the final held-out loss is not finite.
int cmd_train(const TrainOptions& options, std::ostream& log);

struct SolveOptions {
  std::filesystem::path checkpoint;
  std::uint64_t task_seed = 0;
  int steps = 0;
  std::filesystem::path out;
  std::filesystem::path report;  // empty: <out>.report.json
  int points = 0;                // 0: the checkpoint's training points
  int grid = 64;
  int snapshots = 11;
};

/// Adapts on one task and dumps the field plus a JSON report. A NaN abort
/// still writes the partial report and returns kExitNumerical.
int cmd_solve(const SolveOptions& options, std::ostream& log);

struct BenchCommandOptions {
  std::filesystem::path checkpoint;
  BenchOptions bench;
  std::filesystem::path out;
  std::filesystem::path oracle_out;  // empty: <out>.oracle.csv
};

int cmd_bench(const BenchCommandOptions& options, std::ostream& log);

struct OracleOptions {
  tasks::Family family = tasks::Family::Burgers;
  std::filesystem::path out;
  // Burgers
  double theta1 = 0.0;
  double theta2 = 0.0;
  double nu = 0.01;
  double t_end = 1.0;
  int nx = 256;
  int snapshots = 11;
  // Poisson: manufactured solution drawn from this seed
  std::uint64_t seed = 0;
  int grid = 64;
  // Elasticity: affine stretches
  double stretch1 = 0.9;
  double stretch2 = 1.0;
};

int cmd_oracle(const OracleOptions& options, std::ostream& log);

}  // namespace metapde::bench
