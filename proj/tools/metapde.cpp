// Command-line front end: train, solve, bench, oracle.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>

#include "metapde/bench/bench.hpp"

using namespace metapde;

namespace {

std::vector<bench::ConfigEntry> read_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot read config " + path);
  const std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return bench::parse_config(text, path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Meta-learned PINN solvers for parameterized PDEs"};
  app.require_subcommand(1);
  app.footer("Exit codes: 0 success, 2 input error, 3 numerical failure. METAPDE_THREADS sets worker threads.");

  // train
  auto* train = app.add_subcommand("train", "Meta-train on a task family and write a checkpoint");
  std::string config_path, family, method, out_dir, resume;
  std::vector<std::string> sets;
  std::optional<int> iterations;
  std::optional<std::uint64_t> train_seed;
  train->add_option("--config", config_path, "Configuration file (key = value with [sections])");
  train->add_option("--family", family, "poisson, burgers or elasticity");
  train->add_option("--method", method, "maml or leap");
  train->add_option("--iterations", iterations, "Outer iterations");
  train->add_option("--seed", train_seed, "Training seed");
  train->add_option("--out", out_dir, "Output directory");
  train->add_option("--set", sets, "Override as section.key=value (repeatable)");
  train->add_option("--resume", resume, "Continue from this checkpoint");

  // solve
  auto* solve = app.add_subcommand("solve", "Adapt a checkpoint to one task and dump the field");
  bench::SolveOptions so;
  std::string so_ckpt, so_out, so_report;
  solve->add_option("--checkpoint", so_ckpt, "Checkpoint file")->required();
  solve->add_option("--seed,--task-seed", so.task_seed, "Task seed within the checkpoint's distribution");
  solve->add_option("--steps", so.steps, "Adaptation steps");
  solve->add_option("--out", so_out, "Field CSV")->required();
  solve->add_option("--report", so_report, "Report JSON (default: <out>.report.json)");
  solve->add_option("--points", so.points, "Collocation points per step (default: as trained)");
  solve->add_option("--grid", so.grid, "Evaluation grid nodes per side");
  solve->add_option("--snapshots", so.snapshots, "Time snapshots (Burgers)");

  // bench
  auto* bch = app.add_subcommand("bench", "Speed/accuracy sweep over held-out tasks");
  bench::BenchCommandOptions bo;
  std::string bo_ckpt, bo_out, bo_oracle;
  bch->add_option("--checkpoint", bo_ckpt, "Checkpoint file")->required();
  bch->add_option("--tasks", bo.bench.tasks, "Held-out tasks");
  bch->add_option("--steps", bo.bench.steps, "Ascending step counts")->delimiter(',');
  bch->add_option("--out", bo_out, "Bench CSV")->required();
  bch->add_option("--oracle-out", bo_oracle, "Oracle rows CSV (default: <out>.oracle.csv)");
  bch->add_option("--points", bo.bench.points, "Collocation points per step (default: as trained)");
  bch->add_option("--reference-nx", bo.bench.burgers_nx, "FV cells of the Burgers reference");

  // oracle
  auto* orc = app.add_subcommand("oracle", "Dump a reference solution");
  bench::OracleOptions oo;
  std::string oo_family = "burgers", oo_out;
  orc->add_option("--family", oo_family, "poisson, burgers or elasticity");
  orc->add_option("--out", oo_out, "Field CSV")->required();
  orc->add_option("--theta1", oo.theta1, "Burgers initial-condition coefficient");
  orc->add_option("--theta2", oo.theta2, "Burgers initial-condition coefficient");
  orc->add_option("--nu", oo.nu, "Burgers viscosity");
  orc->add_option("--t-end", oo.t_end, "Burgers final time");
  orc->add_option("--nx", oo.nx, "Burgers FV cells");
  orc->add_option("--snapshots", oo.snapshots, "Burgers time snapshots");
  orc->add_option("--seed", oo.seed, "Seed of the manufactured Poisson solution");
  orc->add_option("--grid", oo.grid, "Grid nodes per side (Poisson, elasticity)");
  orc->add_option("--stretch1", oo.stretch1, "Affine stretch along X1");
  orc->add_option("--stretch2", oo.stretch2, "Affine stretch along X2");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : bench::kExitInput;
  }

  try {
    if (train->parsed()) {
      bench::TrainOptions to;
      if (!config_path.empty()) to.entries = read_config(config_path);
      auto add = [&](const std::string& section, const std::string& key, const std::string& value) {
        to.entries.push_back(bench::ConfigEntry{section, key, value, "command line"});
      };
      if (!family.empty()) add("run", "family", family);
      if (!method.empty()) add("run", "method", method);
      if (iterations) add("meta", "iterations", std::to_string(*iterations));
      if (train_seed) add("run", "seed", std::to_string(*train_seed));
      if (!out_dir.empty()) add("run", "out_dir", out_dir);
      for (const auto& s : sets) to.entries.push_back(bench::parse_override(s));
      to.resume = resume;
      return bench::cmd_train(to, std::cerr);
    }
    if (solve->parsed()) {
      so.checkpoint = so_ckpt;
      so.out = so_out;
      so.report = so_report;
      return bench::cmd_solve(so, std::cerr);
    }
    if (bch->parsed()) {
      bo.checkpoint = bo_ckpt;
      bo.out = bo_out;
      bo.oracle_out = bo_oracle;
      return bench::cmd_bench(bo, std::cerr);
    }
    oo.family = tasks::parse_family(oo_family);
    oo.out = oo_out;
    return bench::cmd_oracle(oo, std::cerr);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return bench::kExitInput;
  } catch (const ContractViolation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return bench::kExitInput;
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return bench::kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
