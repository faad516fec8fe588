#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "metapde/bench/bench.hpp"

namespace metapde::bench {

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  require(ec == std::errc(), "format_double: buffer too small");
  return {buf, p};
}

std::string csv_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Eigen::MatrixXd regular_grid(const Eigen::Vector2d& lo, const Eigen::Vector2d& hi, int n) {
  require(n >= 2, "regular_grid: need at least 2 nodes per side");
  Eigen::MatrixXd g(2, n * n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      g(0, j * n + i) = lo[0] + (hi[0] - lo[0]) * i / (n - 1);
      g(1, j * n + i) = lo[1] + (hi[1] - lo[1]) * j / (n - 1);
    }
  }
  return g;
}

void write_point_field(std::ostream& os, const Eigen::MatrixXd& points, const Eigen::MatrixXd& values) {
  require(points.rows() == 2 && values.cols() == points.cols(), "write_point_field: shape mismatch");
  require(values.rows() == 1 || values.rows() == 2, "write_point_field: one or two components");
  os << (values.rows() == 1 ? "x1,x2,u\n" : "X1,X2,u1,u2\n");
  for (Eigen::Index c = 0; c < points.cols(); ++c) {
    os << csv_double(points(0, c)) << ',' << csv_double(points(1, c));
    for (Eigen::Index r = 0; r < values.rows(); ++r) os << ',' << csv_double(values(r, c));
    os << '\n';
  }
}

void write_snapshots(std::ostream& os, std::span<const double> x, std::span<const double> times,
                     const Eigen::MatrixXd& rows) {
  require(rows.rows() == static_cast<Eigen::Index>(times.size()) && rows.cols() == static_cast<Eigen::Index>(x.size()),
          "write_snapshots: shape mismatch");
  os << 't';
  for (double v : x) os << ',' << csv_double(v);
  os << '\n';
  for (std::size_t j = 0; j < times.size(); ++j) {
    os << csv_double(times[j]);
    for (Eigen::Index i = 0; i < rows.cols(); ++i) os << ',' << csv_double(rows(static_cast<Eigen::Index>(j), i));
    os << '\n';
  }
}

Eigen::MatrixXd domain_grid(const tasks::Task& task, int n) {
  require(!task.time_dependent(), "domain_grid: time-dependent task");
  Eigen::Vector2d lo(0, 0), hi(1, 1);
  if (const auto* p = dynamic_cast<const tasks::PoissonTask*>(&task)) {
    const double R = p->params().r0 * (1.0 + std::abs(p->params().c1) + std::abs(p->params().c2));
    lo.setConstant(-R);
    hi.setConstant(R);
  }
  const Eigen::MatrixXd g = regular_grid(lo, hi, n);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index c = 0; c < g.cols(); ++c) {
    const Eigen::VectorXd x = g.col(c);
    bool in = false;
    if (const auto* e = dynamic_cast<const tasks::ElasticTask*>(&task)) {
      in = !e->params().in_pore(x);
    } else {
      in = task.in_interior(x) || task.on_boundary(x, 1e-12);
    }
    if (in) keep.push_back(c);
  }
  Eigen::MatrixXd out(2, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = g.col(keep[k]);
  return out;
}

void dump_network_field(std::ostream& os, const tasks::Task& task, const siren::NetConfig& net,
                        const siren::ParamVector& params, int grid, int snapshots) {
  if (const auto* b = dynamic_cast<const tasks::BurgersTask*>(&task)) {
    require(grid >= 1 && snapshots >= 2, "dump_network_field: need a grid and two snapshots");
    std::vector<double> x(static_cast<std::size_t>(grid)), t(static_cast<std::size_t>(snapshots));
    for (int i = 0; i < grid; ++i) x[static_cast<std::size_t>(i)] = (i + 0.5) / grid;
    for (int j = 0; j < snapshots; ++j) t[static_cast<std::size_t>(j)] = b->params().T * j / (snapshots - 1);
    Eigen::MatrixXd rows(snapshots, grid);
    Eigen::MatrixXd pts(2, grid);
    for (int j = 0; j < snapshots; ++j) {
      for (int i = 0; i < grid; ++i) pts.col(i) << x[static_cast<std::size_t>(i)], t[static_cast<std::size_t>(j)];
      rows.row(j) = siren::forward_batch(net, params, pts);
    }
    write_snapshots(os, x, t, rows);
    return;
  }
  const Eigen::MatrixXd pts = domain_grid(task, grid);
  write_point_field(os, pts, siren::forward_batch(net, params, pts));
}

oracles::Field network_field(const siren::NetConfig& net, const siren::ParamVector& params) {
  return [net, params](const Eigen::MatrixXd& x) { return siren::forward_batch(net, params, x); };
}

Reference family_reference(const tasks::TaskSpec& task, int burgers_nx) {
  require(task != nullptr, "family_reference: null task");
  Reference r;
  r.domain = [task](tasks::Rng& rng, int n) { return task->sample_interior(rng, n); };
  if (const auto* p = dynamic_cast<const tasks::PoissonTask*>(task.get())) {
    std::shared_ptr<const oracles::RadialPoissonSolution> sol;
    try {
      sol = std::make_shared<const oracles::RadialPoissonSolution>(p->params());
    } catch (const ContractViolation&) {
      throw InputError("no reference solution for this Poisson task; benchmarks need the narrow (radial) distribution");
    }
    r.field = [sol](const Eigen::MatrixXd& x) {
      Eigen::MatrixXd u(1, x.cols());
      for (Eigen::Index c = 0; c < x.cols(); ++c) u(0, c) = (*sol)(x.col(c));
      return u;
    };
  } else if (const auto* b = dynamic_cast<const tasks::BurgersTask*>(task.get())) {
    auto ref = std::make_shared<const oracles::BurgersReference>(
        oracles::solve_burgers_reference(b->params(), burgers_nx, b->params().T));
    r.field = [ref](const Eigen::MatrixXd& x) {
      Eigen::MatrixXd u(1, x.cols());
      for (Eigen::Index c = 0; c < x.cols(); ++c) u(0, c) = (*ref)(x(0, c), x(1, c));
      return u;
    };
  } else if (const auto* e = dynamic_cast<const tasks::ElasticTask*>(task.get())) {
    if (!e->params().affine) {
      throw InputError("no reference solution for porous elasticity; benchmarks need the affine distribution");
    }
    const oracles::AffineElasticSolution sol =
        oracles::affine_elastic_reference(e->params(), e->params().stretch1, e->params().stretch2);
    r.field = [sol](const Eigen::MatrixXd& x) {
      Eigen::MatrixXd u(2, x.cols());
      for (Eigen::Index c = 0; c < x.cols(); ++c) u.col(c) = sol.displacement(x.col(c));
      return u;
    };
  } else {
    throw InputError("no reference solution for this task type");
  }
  return r;
}

namespace {

constexpr std::uint64_t kMsePoints = 6;

}  // namespace

std::vector<BenchRow> run_bench(const Checkpoint& c, const BenchOptions& o, std::vector<OracleRow>* oracle_rows) {
  if (o.tasks < 1) throw InputError("bench needs at least one task");
  if (o.steps.empty()) throw InputError("bench needs at least one step count");
  for (std::size_t i = 0; i < o.steps.size(); ++i) {
    if (o.steps[i] < 0 || (i > 0 && o.steps[i] <= o.steps[i - 1])) {
      throw InputError("bench step counts must be non-negative and strictly ascending");
    }
  }
  const meta::MetaConfig cfg = c.meta_config(o.tasks);
  const int points = o.points > 0 ? o.points : c.points;
  using Clock = std::chrono::steady_clock;

  std::vector<BenchRow> rows;
  for (int i = 0; i < o.tasks; ++i) {
    const auto idx = static_cast<std::uint64_t>(i);
    const tasks::TaskSpec task = meta::heldout_task(cfg, i);
    const Reference ref = family_reference(task, o.burgers_nx);
    const std::uint64_t mse_seed = meta::derive_seed(c.heldout_seed, kMsePoints, idx);
    for (int steps : o.steps) {
      const auto t0 = Clock::now();
      const meta::AdaptReport rep =
          meta::adapt(c.state, task, steps, meta::heldout_batch_seed(cfg, i), points);
      const double seconds = std::chrono::duration<double>(Clock::now() - t0).count();
      const double mse =
          oracles::mse_eval(network_field(c.state.net, rep.final_params), ref.field, ref.domain, o.mse_points, mse_seed);
      rows.push_back(BenchRow{i, steps, seconds, mse, rep.final_loss});
    }
    if (oracle_rows != nullptr) {
      if (const auto* b = dynamic_cast<const tasks::BurgersTask*>(task.get())) {
        for (int nx : o.oracle_resolutions) {
          const auto t0 = Clock::now();
          const auto coarse = std::make_shared<const oracles::BurgersReference>(
              oracles::solve_burgers_reference(b->params(), nx, b->params().T));
          const double seconds = std::chrono::duration<double>(Clock::now() - t0).count();
          const oracles::Field f = [coarse](const Eigen::MatrixXd& x) {
            Eigen::MatrixXd u(1, x.cols());
            for (Eigen::Index k = 0; k < x.cols(); ++k) u(0, k) = (*coarse)(x(0, k), x(1, k));
            return u;
          };
          oracle_rows->push_back(
              OracleRow{i, "fv", nx, seconds, oracles::mse_eval(f, ref.field, ref.domain, o.mse_points, mse_seed)});
        }
      }
    }
  }
  return rows;
}

void write_bench_csv(std::ostream& os, std::span<const BenchRow> rows) {
  os << "task,steps,seconds,mse,final_loss\n";
  for (const auto& r : rows) {
    os << r.task << ',' << r.steps << ',' << csv_double(r.seconds) << ',' << csv_double(r.mse) << ','
       << csv_double(r.final_loss) << '\n';
  }
}

void write_oracle_csv(std::ostream& os, std::span<const OracleRow> rows) {
  os << "task,solver,resolution,seconds,mse\n";
  for (const auto& r : rows) {
    os << r.task << ',' << r.solver << ',' << r.resolution << ',' << csv_double(r.seconds) << ','
       << csv_double(r.mse) << '\n';
  }
}

}  // namespace metapde::bench
