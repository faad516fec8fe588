#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include <json.hpp>

#include "metapde/bench/bench.hpp"

using namespace metapde;
using namespace metapde::bench;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("metapde_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

double num(const std::string& s) { return std::strtod(s.c_str(), nullptr); }

// key -> value of a manifest, keyed "section.key".
std::map<std::string, std::string> manifest_map(const std::string& text) {
  std::map<std::string, std::string> m;
  for (const auto& e : parse_config(text, "manifest")) m[e.section + "." + e.key] = e.value;
  return m;
}

RunConfig small_config(tasks::Family family, tasks::Variant variant) {
  RunConfig c = default_config(family, meta::Method::Maml);
  c.meta.distribution.variant = variant;
  c.meta.net.hidden_layers = 2;
  c.meta.net.layer_width = 16;
  c.meta.points = 128;
  return c;
}

Checkpoint fresh_checkpoint(const RunConfig& c, std::uint64_t seed = 7) {
  const auto& m = c.meta;
  return make_checkpoint(c, meta::initial_state(m.method, m.net, m.inner_steps, m.inner_lr, m.clip_norm, seed));
}

}  // namespace

TEST_CASE("config defaults for every family and method") {
  struct Row {
    const char* family;
    const char* method;
    int layers, width, K;
    double inner, outer;
    int points, iterations;
  };
  const Row rows[] = {
      {"poisson", "maml", 3, 64, 5, 1e-4, 1e-5, 2048, 120000},
      {"burgers", "maml", 8, 64, 5, 1e-4, 1e-5, 1024, 60000},
      {"elasticity", "maml", 5, 64, 5, 1e-5, 5e-6, 1024, 180000},
      {"poisson", "leap", 5, 64, 60, 2.5e-5, 5e-5, 4096, 55000},
      {"burgers", "leap", 10, 128, 80, 1e-6, 5e-5, 2048, 7000},
      {"elasticity", "leap", 10, 128, 20, 5e-6, 5e-6, 1024, 140000},
  };
  for (const Row& r : rows) {
    CAPTURE(r.family);
    CAPTURE(r.method);
    const std::vector<ConfigEntry> e{{"run", "family", r.family, "t"}, {"run", "method", r.method, "t"}};
    const RunConfig c = resolve_config(e);
    const auto m = manifest_map(manifest(c));
    CHECK(std::stoi(m.at("net.hidden_layers")) == r.layers);
    CHECK(std::stoi(m.at("net.layer_width")) == r.width);
    CHECK(num(m.at("net.omega0")) == 3.0);
    CHECK(std::stoi(m.at("meta.inner_steps")) == r.K);
    CHECK(num(m.at("meta.inner_lr")) == r.inner);
    CHECK(num(m.at("meta.outer_lr")) == r.outer);
    CHECK(num(m.at("meta.clip_norm")) == 100.0);
    CHECK(std::stoi(m.at("meta.batch_size")) == 8);
    CHECK(std::stoi(m.at("meta.points")) == r.points);
    CHECK(std::stoi(m.at("meta.iterations")) == r.iterations);
    CHECK(m.at("meta.inner_optimizer") == (std::string(r.method) == "maml" ? "sgd" : "adam"));
    CHECK(m.at("meta.outer_optimizer") == "adam");
  }
}

TEST_CASE("config parsing and overrides") {
  const std::string text =
      "# comment\n"
      "family = burgers\n"
      "\n"
      "[meta]\n"
      "; another comment\n"
      "  iterations =  12 \n"
      "inner_lr = 3e-4\n"
      "[sampler]\n"
      "variant = narrow\n";
  auto entries = parse_config(text, "f.ini");
  REQUIRE(entries.size() == 4);
  CHECK(entries[1].section == "meta");
  CHECK(entries[1].value == "12");
  CHECK(entries[1].origin == "f.ini:6");

  entries.push_back(parse_override("meta.iterations=20"));
  entries.push_back(parse_override("seed=9"));
  const RunConfig c = resolve_config(entries);
  CHECK(c.family() == tasks::Family::Burgers);
  CHECK(c.meta.iterations == 20);
  CHECK(c.meta.inner_lr == 3e-4);
  CHECK(c.meta.seed == 9);
  CHECK(c.meta.distribution.variant == tasks::Variant::Narrow);
  CHECK(c.meta.net.hidden_layers == 8);  // untouched default

  SUBCASE("manifest round-trips") {
    RunConfig d = default_config(tasks::Family::Elasticity, meta::Method::Leap);
    d.meta.outer_lr = 0.1 + 0.2;  // needs all 17 digits
    d.meta.distribution.elastic.boundary_weight = 12.5;
    d.meta.heldout_seed = 123456789012345ULL;
    d.out_dir = "runs/x";
    const std::string text2 = manifest(d);
    const RunConfig back = resolve_config(parse_config(text2, "manifest"));
    CHECK(manifest(back) == text2);
    CHECK(back.meta.outer_lr == d.meta.outer_lr);
    CHECK(back.meta.distribution.elastic.boundary_weight == 12.5);
  }

  SUBCASE("rejections") {
    auto rejects = [](std::vector<ConfigEntry> e) { CHECK_THROWS_AS(resolve_config(e), InputError); };
    rejects({{"meta", "bogus", "1", "t"}});
    rejects({{"nope", "iterations", "1", "t"}});
    rejects({{"run", "family", "heat", "t"}});
    rejects({{"run", "method", "reptile", "t"}});
    rejects({{"meta", "iterations", "ten", "t"}});
    rejects({{"meta", "iterations", "10x", "t"}});
    rejects({{"meta", "inner_lr", "nan", "t"}});
    rejects({{"meta", "outer_lr", "0", "t"}});
    rejects({{"meta", "batch_size", "0", "t"}});
    rejects({{"net", "layer_width", "0", "t"}});
    rejects({{"meta", "inner_optimizer", "adam", "t"}});  // MAML needs SGD inside
    rejects({{"sampler", "variant", "affine", "t"}});     // elasticity only
    CHECK_THROWS_AS(parse_config("[meta\n", "t"), InputError);
    CHECK_THROWS_AS(parse_config("just words\n", "t"), InputError);
    CHECK_THROWS_AS(parse_config(" = 3\n", "t"), InputError);
    CHECK_THROWS_AS(parse_override("meta.iterations"), InputError);
  }
}

TEST_CASE("checkpoint encoding") {
  RunConfig c = small_config(tasks::Family::Poisson, tasks::Variant::Narrow);
  c.meta.heldout_seed = 0xfeedfacecafebeefULL;
  Checkpoint ck = fresh_checkpoint(c);
  ck.state.alpha(2, 5) = 0.1 + 0.2;
  const std::string bytes = encode_checkpoint(ck);
  CHECK(bytes.compare(0, 4, "MPDE") == 0);
  CHECK(bytes[4] == 1);  // little-endian version
  CHECK(bytes[5] == 0);

  const Checkpoint back = decode_checkpoint(bytes);
  CHECK(encode_checkpoint(back) == bytes);
  CHECK(back.state.net == ck.state.net);
  CHECK(back.state.method == ck.state.method);
  CHECK(back.state.inner_steps == ck.state.inner_steps);
  CHECK(back.state.clip_norm == ck.state.clip_norm);
  CHECK(back.state.theta0 == ck.state.theta0);
  CHECK(back.state.alpha == ck.state.alpha);
  CHECK(back.distribution.family == tasks::Family::Poisson);
  CHECK(back.distribution.variant == tasks::Variant::Narrow);
  CHECK(back.points == 128);
  CHECK(back.heldout_seed == 0xfeedfacecafebeefULL);

  SUBCASE("every single-byte corruption is caught") {
    for (std::size_t i = 0; i < bytes.size(); ++i) {
      for (unsigned char flip : {0x01, 0x80, 0xff}) {
        std::string bad = bytes;
        bad[i] = static_cast<char>(static_cast<unsigned char>(bad[i]) ^ flip);
        CHECK_THROWS_AS(decode_checkpoint(bad), InputError);
      }
    }
  }
  SUBCASE("truncation, extension and foreign files") {
    for (std::size_t n = 0; n < bytes.size(); n += 7) CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, n)), InputError);
    CHECK_THROWS_AS(decode_checkpoint(bytes + "x"), InputError);
    CHECK_THROWS_AS(decode_checkpoint("not a checkpoint at all"), InputError);
  }
  SUBCASE("files") {
    const fs::path dir = scratch("ckpt");
    save_checkpoint(dir / "a.mpde", ck);
    CHECK(slurp(dir / "a.mpde") == bytes);
    CHECK(encode_checkpoint(load_checkpoint(dir / "a.mpde")) == bytes);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.mpde"), InputError);
  }
  SUBCASE("LEAP state") {
    RunConfig l = default_config(tasks::Family::Elasticity, meta::Method::Leap);
    l.meta.net.hidden_layers = 1;
    l.meta.net.layer_width = 4;
    l.meta.distribution.elastic.boundary_weight = 7.0;
    const Checkpoint lk = fresh_checkpoint(l);
    const Checkpoint lb = decode_checkpoint(encode_checkpoint(lk));
    CHECK(lb.state.alpha.size() == 1);
    CHECK(lb.distribution.elastic.boundary_weight == 7.0);
    CHECK(lb.state.net.output_dim == 2);
  }
}

TEST_CASE("CSV number formatting") {
  CHECK(csv_double(0.1) == "0.10000000000000001");
  CHECK(csv_double(1.0) == "1");
  CHECK(csv_double(1.0 / 3.0) == "0.33333333333333331");
  for (double v : {0.1, 1.0 / 3.0, 6.02214076e23, -1e-310, 0.1 + 0.2}) CHECK(num(csv_double(v)) == v);
  CHECK(format_double(1e-4) == "1e-04");
  CHECK(format_double(0.1 + 0.2) == "0.30000000000000004");

  std::ostringstream os;
  Eigen::MatrixXd pts(2, 2), u(2, 2);
  pts << 0, 1, 0.5, 0.25;
  u << 1, 2, 3, 4;
  write_point_field(os, pts, u);
  CHECK(os.str() == "X1,X2,u1,u2\n0,0.5,1,3\n1,0.25,2,4\n");
}

TEST_CASE("oracle command dumps") {
  const fs::path dir = scratch("oracle");
  std::ostringstream log;

  SUBCASE("burgers shape") {
    OracleOptions o;
    o.family = tasks::Family::Burgers;
    o.nx = 256;
    o.snapshots = 5;
    o.out = dir / "b.csv";
    REQUIRE(cmd_oracle(o, log) == kExitOk);
    const auto rows = read_csv(o.out);
    REQUIRE(rows.size() == 6);
    CHECK(rows[0][0] == "t");
    for (const auto& r : rows) CHECK(r.size() == 257);
    CHECK(num(rows[1][0]) == 0.0);
    CHECK(num(rows[5][0]) == 1.0);
    CHECK(num(rows[0][1]) == 0.5 / 256);
    // first cell average of u(x, 0) = sin(pi x)
    CHECK(num(rows[1][1]) == doctest::Approx(256 / M_PI * (1 - std::cos(M_PI / 256))).epsilon(1e-10));
  }
  SUBCASE("poisson dump equals the manufactured solution at every node") {
    OracleOptions o;
    o.family = tasks::Family::Poisson;
    o.seed = 11;
    o.grid = 24;
    o.out = dir / "p.csv";
    REQUIRE(cmd_oracle(o, log) == kExitOk);
    const auto rows = read_csv(o.out);
    const auto m = oracles::ManufacturedPoisson::sample(11);
    REQUIRE(rows.size() > 100);
    CHECK(rows[0] == std::vector<std::string>{"x1", "x2", "u"});
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const Eigen::Vector2d x(num(rows[i][0]), num(rows[i][1]));
      CHECK(m.task()->in_interior(x) + m.task()->on_boundary(x, 1e-12) >= 1);
      CHECK(num(rows[i][2]) == m.u(x));
    }
  }
  SUBCASE("identity stretch gives zero displacement") {
    OracleOptions o;
    o.family = tasks::Family::Elasticity;
    o.stretch1 = 1.0;
    o.stretch2 = 1.0;
    o.grid = 9;
    o.out = dir / "e.csv";
    REQUIRE(cmd_oracle(o, log) == kExitOk);
    const auto rows = read_csv(o.out);
    REQUIRE(rows.size() == 82);
    CHECK(rows[0] == std::vector<std::string>{"X1", "X2", "u1", "u2"});
    for (std::size_t i = 1; i < rows.size(); ++i) {
      CHECK(num(rows[i][2]) == 0.0);
      CHECK(num(rows[i][3]) == 0.0);
    }
    CHECK(log.str().find("total energy 0\n") != std::string::npos);
  }
  SUBCASE("bad resolution") {
    OracleOptions o;
    o.nx = 4;
    o.out = dir / "x.csv";
    CHECK_THROWS_AS(cmd_oracle(o, log), InputError);
  }
}

TEST_CASE("train command") {
  const fs::path dir = scratch("train");
  std::ostringstream log;
  auto opts = [&](const std::string& out) {
    TrainOptions t;
    t.entries = {{"run", "family", "poisson", "t"},
                 {"run", "method", "maml", "t"},
                 {"meta", "iterations", "0", "t"},
                 {"run", "out_dir", (dir / out).string(), "t"}};
    return t;
  };

  REQUIRE(cmd_train(opts("a"), log) == kExitOk);
  const Checkpoint c = load_checkpoint(dir / "a" / "checkpoint.mpde");
  const RunConfig def = default_config(tasks::Family::Poisson, meta::Method::Maml);
  CHECK(c.state.theta0 == siren::init_siren(def.meta.net, def.meta.seed));
  CHECK(c.state.alpha.rows() == 5);
  CHECK((c.state.alpha.array() == 1e-4).all());
  CHECK(c.points == 2048);

  const auto m = manifest_map(slurp(dir / "a" / "manifest.ini"));
  CHECK(num(m.at("meta.inner_lr")) == 1e-4);
  CHECK(num(m.at("meta.outer_lr")) == 1e-5);
  CHECK(std::stoi(m.at("meta.inner_steps")) == 5);
  CHECK(std::stoi(m.at("meta.batch_size")) == 8);
  CHECK(std::stoi(m.at("meta.points")) == 2048);

  const auto csv = read_csv(dir / "a" / "train_log.csv");
  REQUIRE(csv.size() == 2);
  CHECK(csv[0] == std::vector<std::string>{"iteration", "meta_loss", "heldout_loss", "heldout_path", "elapsed"});
  CHECK(csv[1][0] == "0");
  CHECK(std::isfinite(num(csv[1][2])));

  REQUIRE(cmd_train(opts("b"), log) == kExitOk);
  CHECK(slurp(dir / "a" / "checkpoint.mpde") == slurp(dir / "b" / "checkpoint.mpde"));

  // The log is append-only across runs into the same directory.
  REQUIRE(cmd_train(opts("a"), log) == kExitOk);
  CHECK(read_csv(dir / "a" / "train_log.csv").size() == 3);

  TrainOptions bad = opts("c");
  bad.entries.push_back({"meta", "points", "3", "t"});
  CHECK_THROWS_AS(cmd_train(bad, log), InputError);
}

TEST_CASE("short training runs are reproducible and resumable") {
  const fs::path dir = scratch("train_short");
  std::ostringstream log;
  auto opts = [&](const std::string& out, int iterations) {
    TrainOptions t;
    t.entries = {{"net", "hidden_layers", "1", "t"},   {"net", "layer_width", "8", "t"},
                 {"meta", "points", "64", "t"},        {"meta", "heldout_tasks", "2", "t"},
                 {"meta", "batch_size", "2", "t"},     {"meta", "outer_lr", "1e-3", "t"},
                 {"sampler", "variant", "narrow", "t"}, {"meta", "iterations", std::to_string(iterations), "t"},
                 {"run", "out_dir", (dir / out).string(), "t"}};
    return t;
  };
  REQUIRE(cmd_train(opts("a", 3), log) == kExitOk);
  REQUIRE(cmd_train(opts("b", 3), log) == kExitOk);
  const std::string a = slurp(dir / "a" / "checkpoint.mpde");
  CHECK(a == slurp(dir / "b" / "checkpoint.mpde"));
  CHECK(load_checkpoint(dir / "a" / "checkpoint.mpde").state.theta0 !=
        siren::init_siren(siren::NetConfig{2, 1, 1, 8, 3.0}, 0));

  TrainOptions resumed = opts("c", 2);
  resumed.resume = dir / "a" / "checkpoint.mpde";
  REQUIRE(cmd_train(resumed, log) == kExitOk);
  CHECK(slurp(dir / "c" / "checkpoint.mpde") != a);

  TrainOptions mismatch = opts("d", 1);
  mismatch.entries.push_back({"net", "layer_width", "9", "t"});
  mismatch.resume = dir / "a" / "checkpoint.mpde";
  CHECK_THROWS_AS(cmd_train(mismatch, log), InputError);
}

TEST_CASE("solve command") {
  const fs::path dir = scratch("solve");
  std::ostringstream log;
  const Checkpoint ck = fresh_checkpoint(small_config(tasks::Family::Poisson, tasks::Variant::Full));
  save_checkpoint(dir / "c.mpde", ck);

  auto run = [&](int steps, const std::string& out) {
    SolveOptions o;
    o.checkpoint = dir / "c.mpde";
    o.task_seed = 42;
    o.steps = steps;
    o.grid = 16;
    o.out = dir / out;
    REQUIRE(cmd_solve(o, log) == kExitOk);
    return nlohmann::json::parse(slurp(dir / (out + ".report.json")));
  };

  SUBCASE("zero steps dumps the initialization's field") {
    run(0, "s0.csv");
    std::ostringstream expect;
    const tasks::TaskSpec task = ck.distribution.sample(42);
    dump_network_field(expect, *task, ck.state.net, ck.state.theta0, 16, 11);
    CHECK(slurp(dir / "s0.csv") == expect.str());
  }
  SUBCASE("identical runs give identical files, and traces are prefix-stable") {
    const auto j5 = run(5, "s5.csv");
    const auto j5b = run(5, "s5b.csv");
    const auto j10 = run(10, "s10.csv");
    CHECK(slurp(dir / "s5.csv") == slurp(dir / "s5b.csv"));
    CHECK(j5["status"] == "ok");
    CHECK(j5["task_seed"] == 42);
    CHECK(j5["family"] == "poisson");
    const auto l5 = j5["report"]["losses"].get<std::vector<double>>();
    const auto l10 = j10["report"]["losses"].get<std::vector<double>>();
    REQUIRE(l5.size() == 5);
    REQUIRE(l10.size() == 10);
    for (std::size_t k = 0; k < 5; ++k) CHECK(l10[k] == l5[k]);
    CHECK(j5["report"]["grad_norms"] == j5b["report"]["grad_norms"]);
    CHECK(j5["report"]["final_loss"] == j5b["report"]["final_loss"]);
  }
  SUBCASE("failures") {
    SolveOptions o;
    o.checkpoint = dir / "c.mpde";
    o.out = dir / "bad.csv";
    o.steps = -1;
    CHECK_THROWS_AS(cmd_solve(o, log), InputError);

    std::string bytes = slurp(dir / "c.mpde");
    bytes[40] ^= 1;
    std::ofstream(dir / "corrupt.mpde", std::ios::binary) << bytes;
    o.steps = 1;
    o.checkpoint = dir / "corrupt.mpde";
    CHECK_THROWS_AS(cmd_solve(o, log), InputError);

    // Huge rates blow the network up; the partial report survives.
    Checkpoint hot = ck;
    hot.state.alpha.setConstant(1e200);
    hot.state.clip_norm = 1e300;
    save_checkpoint(dir / "hot.mpde", hot);
    o.checkpoint = dir / "hot.mpde";
    o.steps = 5;
    CHECK(cmd_solve(o, log) == kExitNumerical);
    const auto j = nlohmann::json::parse(slurp(dir / "bad.csv.report.json"));
    CHECK(j["status"] == "failed");
    CHECK(j["report"]["losses"].size() >= 1);
    CHECK(!fs::exists(dir / "bad.csv"));
  }
}

TEST_CASE("bench") {
  const fs::path dir = scratch("bench");
  std::ostringstream log;

  SUBCASE("row count, ordering and reproducibility") {
    RunConfig c = small_config(tasks::Family::Poisson, tasks::Variant::Narrow);
    c.meta.net.hidden_layers = 3;
    c.meta.net.layer_width = 64;
    c.meta.points = 512;
    const Checkpoint ck = fresh_checkpoint(c);

    BenchOptions o;
    o.steps = {5};
    o.mse_points = 256;
    CHECK(run_bench(ck, o).size() == 8);

    o.tasks = 3;
    o.steps = {0, 5, 20};
    std::vector<OracleRow> oracle_rows;
    const auto rows = run_bench(ck, o, &oracle_rows);
    CHECK(oracle_rows.empty());
    REQUIRE(rows.size() == 9);
    for (int t = 0; t < 3; ++t) {
      for (int s = 0; s < 3; ++s) {
        const BenchRow& r = rows[static_cast<std::size_t>(3 * t + s)];
        CHECK(r.task == t);
        CHECK(r.steps == o.steps[static_cast<std::size_t>(s)]);
        CHECK(std::isfinite(r.mse));
        if (s > 0) CHECK(r.seconds > rows[static_cast<std::size_t>(3 * t + s - 1)].seconds);
      }
    }
    const auto again = run_bench(ck, o);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      CHECK(again[i].mse == rows[i].mse);
      CHECK(again[i].final_loss == rows[i].final_loss);
    }

    // Steps 0 scores the initialization itself.
    const meta::MetaConfig mc = ck.meta_config(3);
    const Reference ref = family_reference(meta::heldout_task(mc, 1));
    const double mse0 = oracles::mse_eval(network_field(ck.state.net, ck.state.theta0), ref.field, ref.domain, 256,
                                          meta::derive_seed(ck.heldout_seed, 6, 1));
    CHECK(rows[3].mse == mse0);

    std::ostringstream os;
    write_bench_csv(os, std::span<const BenchRow>(rows.data(), 1));
    CHECK(os.str().rfind("task,steps,seconds,mse,final_loss\n0,0,", 0) == 0);
  }
  SUBCASE("burgers emits finite-volume rows") {
    const Checkpoint ck = fresh_checkpoint(small_config(tasks::Family::Burgers, tasks::Variant::Narrow));
    save_checkpoint(dir / "b.mpde", ck);
    BenchCommandOptions o;
    o.checkpoint = dir / "b.mpde";
    o.bench.tasks = 2;
    o.bench.steps = {0, 2};
    o.bench.mse_points = 128;
    o.bench.burgers_nx = 512;
    o.bench.oracle_resolutions = {64, 128};
    o.out = dir / "b.csv";
    REQUIRE(cmd_bench(o, log) == kExitOk);
    CHECK(read_csv(dir / "b.csv").size() == 5);
    const auto orc = read_csv(dir / "b.csv.oracle.csv");
    REQUIRE(orc.size() == 5);
    CHECK(orc[0] == std::vector<std::string>{"task", "solver", "resolution", "seconds", "mse"});
    CHECK(orc[1][1] == "fv");
    CHECK(orc[2][2] == "128");
    CHECK(num(orc[2][4]) < num(orc[1][4]));  // finer grid is closer to the reference
  }
  SUBCASE("input errors") {
    const Checkpoint narrow = fresh_checkpoint(small_config(tasks::Family::Poisson, tasks::Variant::Narrow));
    BenchOptions o;
    o.steps = {5, 5};
    CHECK_THROWS_AS(run_bench(narrow, o), InputError);
    o.steps = {};
    CHECK_THROWS_AS(run_bench(narrow, o), InputError);
    o.steps = {-1, 2};
    CHECK_THROWS_AS(run_bench(narrow, o), InputError);
    o.steps = {1};
    o.tasks = 0;
    CHECK_THROWS_AS(run_bench(narrow, o), InputError);
    // The full Poisson family has no reference solution.
    o.tasks = 1;
    CHECK_THROWS_AS(run_bench(fresh_checkpoint(small_config(tasks::Family::Poisson, tasks::Variant::Full)), o),
                    InputError);
  }
}
