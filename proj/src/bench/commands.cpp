#include <cmath>
#include <fstream>
#include <optional>
#include <ostream>

#include <json.hpp>

#include "metapde/bench/bench.hpp"

namespace metapde::bench {

namespace {

// Seed stream for the batches of a single solve.
constexpr std::uint64_t kSolveBatch = 5;

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::trunc) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::out | mode);
  if (!f) throw InputError("cannot write " + path.string());
  return f;
}

nlohmann::json report_json(const meta::AdaptReport& r) {
  nlohmann::json j;
  j["steps"] = r.steps();
  j["losses"] = r.losses;
  j["grad_norms"] = r.grad_norms;
  std::vector<int> clipped(r.clipped.begin(), r.clipped.end());
  j["clipped"] = clipped;
  j["step_seconds"] = r.step_seconds;
  j["step_norms"] = r.step_norms;
  j["final_loss"] = std::isfinite(r.final_loss) ? nlohmann::json(r.final_loss) : nlohmann::json();
  return j;
}

}  // namespace

int cmd_train(const TrainOptions& options, std::ostream& log) {
  const RunConfig cfg = resolve_config(options.entries);
  std::optional<meta::MetaState> start;
  if (!options.resume.empty()) start = load_checkpoint(options.resume).state;

  std::filesystem::create_directories(cfg.out_dir);
  {
    auto f = open_out(cfg.out_dir / "manifest.ini");
    f << manifest(cfg);
  }
  const auto log_path = cfg.out_dir / "train_log.csv";
  const bool fresh = !std::filesystem::exists(log_path) || std::filesystem::file_size(log_path) == 0;
  auto csv = open_out(log_path, std::ios::app);
  if (fresh) csv << "iteration,meta_loss,heldout_loss,heldout_path,elapsed\n";

  const meta::TrainResult r = meta::meta_train(
      cfg.meta,
      [&](const meta::LogEntry& e) {
        csv << e.iteration << ',' << csv_double(e.meta_loss) << ',' << csv_double(e.heldout_loss) << ','
            << csv_double(e.heldout_path) << ',' << csv_double(e.elapsed) << '\n';
        csv.flush();
        if (std::isfinite(e.heldout_loss) || std::isnan(e.meta_loss)) {
          log << "iteration " << e.iteration << ": held-out loss " << e.heldout_loss << ", path "
              << e.heldout_path << " (" << e.elapsed << " s)\n";
        }
      },
      start ? &*start : nullptr);

  save_checkpoint(cfg.out_dir / "checkpoint.mpde", make_checkpoint(cfg, r.state));
  log << "wrote " << (cfg.out_dir / "checkpoint.mpde").string() << "\n";
  if (r.skipped_steps > 0) log << r.skipped_steps << " outer steps skipped, " << r.failed_tasks << " tasks failed\n";
  const bool nan_dominated = 2 * r.skipped_steps > cfg.meta.iterations || !std::isfinite(r.log.back().heldout_loss);
  if (nan_dominated) {
    log << "training was dominated by numerical failures\n";
    return kExitNumerical;
  }
  return kExitOk;
}

int cmd_solve(const SolveOptions& o, std::ostream& log) {
  if (o.steps < 0) throw InputError("steps must be >= 0");
  const Checkpoint c = load_checkpoint(o.checkpoint);
  const tasks::TaskSpec task = c.distribution.sample(o.task_seed);
  const int points = o.points > 0 ? o.points : c.points;
  const auto report_path = o.report.empty() ? std::filesystem::path(o.out.string() + ".report.json") : o.report;

  nlohmann::json j;
  j["task_seed"] = o.task_seed;
  j["family"] = tasks::family_name(c.distribution.family);
  j["task"] = task->describe();
  meta::AdaptReport rep;
  int code = kExitOk;
  try {
    rep = meta::adapt(c.state, task, o.steps, meta::derive_seed(o.task_seed, kSolveBatch, 0), points);
    j["status"] = "ok";
  } catch (const meta::AdaptFailure& e) {
    rep = e.report();
    j["status"] = "failed";
    j["message"] = e.what();
    code = kExitNumerical;
  }
  j["report"] = report_json(rep);
  {
    auto f = open_out(report_path);
    f << j.dump(2) << '\n';
  }
  if (code != kExitOk) {
    log << "adaptation failed: " << j["message"].get<std::string>() << "\n";
    return code;
  }
  {
    auto f = open_out(o.out);
    dump_network_field(f, *task, c.state.net, rep.final_params, o.grid, o.snapshots);
  }
  log << "adapted " << o.steps << " steps, final loss " << rep.final_loss << "; wrote " << o.out.string() << "\n";
  return kExitOk;
}

int cmd_bench(const BenchCommandOptions& o, std::ostream& log) {
  const Checkpoint c = load_checkpoint(o.checkpoint);
  std::vector<OracleRow> oracle_rows;
  std::vector<BenchRow> rows;
  try {
    rows = run_bench(c, o.bench, &oracle_rows);
  } catch (const meta::AdaptFailure& e) {
    log << "adaptation failed: " << e.what() << "\n";
    return kExitNumerical;
  }
  {
    auto f = open_out(o.out);
    write_bench_csv(f, rows);
  }
  const auto oracle_path = o.oracle_out.empty() ? std::filesystem::path(o.out.string() + ".oracle.csv") : o.oracle_out;
  {
    auto f = open_out(oracle_path);
    write_oracle_csv(f, oracle_rows);
  }
  log << "wrote " << rows.size() << " rows to " << o.out.string() << "\n";
  return kExitOk;
}

int cmd_oracle(const OracleOptions& o, std::ostream& log) {
  auto f = open_out(o.out);
  switch (o.family) {
    case tasks::Family::Burgers: {
      if (o.nx < 16) throw InputError("nx must be >= 16");
      if (o.snapshots < 2) throw InputError("snapshots must be >= 2");
      tasks::BurgersTaskParams p{o.theta1, o.theta2, o.nu, o.t_end};
      const oracles::BurgersReference ref = oracles::solve_burgers_reference(p, o.nx, o.t_end, o.snapshots);
      const Eigen::VectorXd x = ref.cell_centers();
      write_snapshots(f, std::span<const double>(x.data(), static_cast<std::size_t>(x.size())), ref.times(),
                      ref.snapshots());
      break;
    }
    case tasks::Family::Poisson: {
      const oracles::ManufacturedPoisson m = oracles::ManufacturedPoisson::sample(o.seed);
      const Eigen::MatrixXd pts = domain_grid(*m.task(), o.grid);
      Eigen::MatrixXd u(1, pts.cols());
      for (Eigen::Index c = 0; c < pts.cols(); ++c) u(0, c) = m.u(pts.col(c));
      write_point_field(f, pts, u);
      break;
    }
    case tasks::Family::Elasticity: {
      tasks::ElasticTaskParams p;
      p.affine = true;
      p.stretch1 = o.stretch1;
      p.stretch2 = o.stretch2;
      const oracles::AffineElasticSolution sol = oracles::affine_elastic_reference(p, o.stretch1, o.stretch2);
      const Eigen::MatrixXd g = regular_grid(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1), o.grid);
      Eigen::MatrixXd u(2, g.cols());
      for (Eigen::Index c = 0; c < g.cols(); ++c) u.col(c) = sol.displacement(g.col(c));
      write_point_field(f, g, u);
      log << "total energy " << format_double(sol.energy) << "\n";
      break;
    }
  }
  log << "wrote " << o.out.string() << "\n";
  return kExitOk;
}

}  // namespace metapde::bench
