#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "errors.hpp"
#include "harness.hpp"

using namespace resopt;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("resopt_test_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

const char* kSmallRun =
    "problem=logistic\n"
    "data=blobs:2:20:6:1.0:3\n"
    "opt=sgd lr=0.1\n"
    "T=40 batch=2 seed=5 eval_every=10\n";

}  // namespace

TEST_CASE("config parsing basics") {
  const RunConfig cfg = RunConfig::parse_text(kSmallRun, "small");
  CHECK(cfg.problem == "logistic");
  CHECK(cfg.opt == "sgd");
  CHECK(cfg.variant == OptVariant::base);
  CHECK(cfg.T == 40);
  CHECK(cfg.batch == 2);
  CHECK(cfg.seed == 5);
  CHECK(cfg.name == "small");
}

TEST_CASE("config errors carry line numbers") {
  try {
    (void)RunConfig::parse_text("problem=logistic\nbogus_key=1\nT=5\n");
    FAIL("expected config error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  try {
    (void)RunConfig::parse_text("problem=logistic\nT=abc\n");
    FAIL("expected config error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS((void)RunConfig::parse_text("opt=sgd lr=0.1\n"), Error);      // no T/epochs
  CHECK_THROWS_AS((void)RunConfig::parse_text("T=5 epochs=2\n"), Error);        // both
  CHECK_THROWS_AS((void)RunConfig::parse_text("T=5 opt=rsgd\n"), Error);        // no scheme
  CHECK_THROWS_AS((void)RunConfig::parse_text("T=5 scheme=sign\n"), Error);     // not wrapped
  CHECK_THROWS_AS((void)RunConfig::parse_text("T=5 opt=signsgd scheme=sign\n"), Error);
  CHECK_THROWS_AS((void)RunConfig::parse_text("T=5 opt=warp\n"), Error);
  CHECK_THROWS_AS((void)RunConfig::parse_text("T=5 problem=svm\n"), Error);
}

TEST_CASE("comments and repeated keys (last wins)") {
  const RunConfig cfg = RunConfig::parse_text(
      "# a comment line\n"
      "T=10 seed=1 # trailing comment\n"
      "seed=9\n");
  CHECK(cfg.seed == 9);
  CHECK(cfg.T == 10);
}

TEST_CASE("epochs resolve to steps and scale decay milestones") {
  RunConfig cfg = RunConfig::parse_text("epochs=3 batch=4 lr=0.1 decay=0.1@1,2\n");
  // N=10 -> ceil(10/4)=3 steps per epoch
  CHECK(cfg.resolved_steps_per_epoch(10) == 3);
  CHECK(cfg.resolved_steps(10) == 9);
  const LrSchedule s = cfg.schedule(3);
  CHECK(s.milestones == std::vector<long>{3, 6});
}

TEST_CASE("run produces a deterministic log, byte for byte") {
  TempDir tmp("determinism");
  const RunConfig cfg = RunConfig::parse_text(kSmallRun, "det");
  const RunResult a = run(cfg, (tmp.path / "a").string());
  const RunResult b = run(cfg, (tmp.path / "b").string());
  CHECK(slurp(a.log_path) == slurp(b.log_path));
  CHECK(slurp(a.checkpoint_path) == slurp(b.checkpoint_path));
}

TEST_CASE("run records sane metrics and a checkpoint that reloads") {
  TempDir tmp("metrics");
  const RunConfig cfg = RunConfig::parse_text(kSmallRun, "metrics");
  const RunResult res = run(cfg, tmp.path.string());
  REQUIRE(!res.records.empty());
  CHECK(res.records.front().step == 0);
  CHECK(res.records.back().step == 40);
  for (std::size_t i = 1; i < res.records.size(); ++i) {
    CHECK(res.records[i].step > res.records[i - 1].step);  // strictly increasing
  }
  CHECK(res.records.back().train_loss < res.records.front().train_loss);
  const Checkpoint cp = load_checkpoint(res.checkpoint_path);
  REQUIRE(cp.x.size() == res.final_params.size());
  CHECK(cp.x == res.final_params);

  const LoadedRunLog log = load_run_log(res.log_path);
  CHECK(log.name == "metrics");
  REQUIRE(log.columns.size() == 8);
  CHECK(log.rows.size() == res.records.size());
}

TEST_CASE("alpha=1 scale run equals the plain sgd run") {
  const RunConfig a = RunConfig::parse_text(
      "problem=logistic data=blobs:2:20:6:1.0:3 opt=sgd lr=0.1 T=60 seed=5\n");
  const RunConfig b = RunConfig::parse_text(
      "problem=logistic data=blobs:2:20:6:1.0:3 opt=rsgd scheme=scale:1.0 lr=0.1 T=60 seed=5\n");
  const RunResult ra = run_in_memory(a);
  const RunResult rb = run_in_memory(b);
  REQUIRE(ra.final_params == rb.final_params);
  for (std::size_t i = 0; i < ra.records.size(); ++i) {
    CHECK(rb.records[i].residual_norm == 0.0);
    CHECK(rb.records[i].proximity == 0.0);
    CHECK(ra.records[i].train_loss == rb.records[i].train_loss);
  }
}

TEST_CASE("full-batch gd on the quadratic matches the closed form") {
  // single sample at the origin: x_{t+1} = (1-lr) x_t, so
  // ||x_t||^2 = (1-lr)^{2t} ||x_0||^2 and the loss halves geometrically
  TempDir tmp("gd");
  const auto csv = (tmp.path / "origin.csv").string();
  std::ofstream(csv) << "0,0,0,0,0\n";  // 4 features + label
  const RunConfig cfg = RunConfig::parse_text(
      "problem=quadratic data=csv:" + csv + " heldout=none\n" +
      "opt=sgd lr=0.1 T=30 batch=full seed=2 eval_every=1\n");
  const RunResult res = run_in_memory(cfg);
  const double l0 = res.records[0].train_loss;
  for (std::size_t j = 0; j < res.records.size(); ++j) {
    const double t = static_cast<double>(res.records[j].step);
    CHECK(res.records[j].train_loss ==
          doctest::Approx(l0 * std::pow(0.9, 2.0 * t)).epsilon(1e-10));
  }
}

TEST_CASE("non-finite parameters abort with the step index") {
  const RunConfig cfg = RunConfig::parse_text(
      "problem=quadratic data=blobs:2:10:4:1.0:3 opt=sgd lr=1e12 T=200 seed=1\n");
  try {
    (void)run_in_memory(cfg);
    FAIL("expected numeric error");
  } catch (const Error& e) {
    CHECK(e.kind() == Error::Kind::numeric);
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("window best extraction finds planted extrema") {
  std::vector<RunRecord> recs(9);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    recs[i].step = static_cast<long>(i);
    recs[i].heldout_acc = 0.1;
    recs[i].train_loss = 1.0;
  }
  recs[1].heldout_acc = 0.7;  // window 1 max
  recs[4].heldout_acc = 0.9;  // window 2 max
  recs[8].heldout_acc = 0.8;  // window 3 max
  const auto best_acc = window_best(recs, 3, /*use_accuracy=*/true);
  CHECK(best_acc == std::vector<double>{0.7, 0.9, 0.8});

  recs[2].train_loss = 0.3;  // window 1 min
  recs[5].train_loss = 0.2;  // window 2 min
  recs[6].train_loss = 0.25;
  const auto best_loss = window_best(recs, 3, /*use_accuracy=*/false);
  CHECK(best_loss == std::vector<double>{0.3, 0.2, 0.25});
}

TEST_CASE("sweep: identical configs produce identical rows; replicas=1 has std 0") {
  TempDir tmp("sweep");
  const fs::path cfg_dir = tmp.path / "cfgs";
  fs::create_directories(cfg_dir);
  std::ofstream((cfg_dir / "one.cfg").string()) << kSmallRun;
  std::ofstream((cfg_dir / "two.cfg").string()) << kSmallRun;

  const std::string summary = sweep(cfg_dir.string(), 1, (tmp.path / "out").string());
  std::ifstream in(summary);
  std::string header, row1, row2;
  REQUIRE(std::getline(in, header));
  REQUIRE(std::getline(in, row1));
  REQUIRE(std::getline(in, row2));
  // same config under two names: identical statistics after the name cell
  CHECK(row1.substr(row1.find(',')) == row2.substr(row2.find(',')));
  // replicas=1: every std cell is 0
  std::stringstream ss(row1.substr(row1.find(",ok,") + 4));
  std::string cell;
  int idx = 0;
  while (std::getline(ss, cell, ',')) {
    if (idx % 2 == 1) CHECK(cell == "0");
    ++idx;
  }
}

TEST_CASE("sweep: a failing config is reported without aborting the rest") {
  TempDir tmp("sweepfail");
  const fs::path cfg_dir = tmp.path / "cfgs";
  fs::create_directories(cfg_dir);
  std::ofstream((cfg_dir / "bad.cfg").string())
      << "problem=quadratic data=blobs:2:10:4:1.0:3 opt=sgd lr=1e12 T=100 seed=1\n";
  std::ofstream((cfg_dir / "good.cfg").string()) << kSmallRun;
  const std::string summary = sweep(cfg_dir.string(), 2, (tmp.path / "out").string());
  const std::string text = slurp(summary);
  CHECK(text.find("bad,2,2 failed") != std::string::npos);
  CHECK(text.find("good,2,ok") != std::string::npos);
}

TEST_CASE("sweep replica seeds differ") {
  TempDir tmp("sweepseeds");
  const fs::path cfg_dir = tmp.path / "cfgs";
  fs::create_directories(cfg_dir);
  std::ofstream((cfg_dir / "one.cfg").string()) << kSmallRun;
  (void)sweep(cfg_dir.string(), 2, (tmp.path / "out").string());
  const std::string log0 = slurp((tmp.path / "out" / "one" / "r0" / "run.log").string());
  const std::string log1 = slurp((tmp.path / "out" / "one" / "r1" / "run.log").string());
  CHECK(log0 != log1);
  CHECK(log0.find("# seed=5") != std::string::npos);
  CHECK(log1.find("# seed=6") != std::string::npos);
}

TEST_CASE("compare reshapes logs into long format") {
  TempDir tmp("compare");
  const RunConfig cfg = RunConfig::parse_text(kSmallRun, "cmp");
  const RunResult a = run(cfg, (tmp.path / "a").string());

  SUBCASE("single log: identity reshaping") {
    const std::string out = compare({a.log_path}, (tmp.path / "one.csv").string());
    std::ifstream in(out);
    std::string line;
    std::size_t rows = 0;
    std::getline(in, line);
    CHECK(line == "step,run_id,metric,value");
    while (std::getline(in, line)) ++rows;
    CHECK(rows == a.records.size() * 7);  // 7 metric columns
  }

  SUBCASE("two logs: row count is the sum; values round-trip exactly") {
    RunConfig cfg2 = RunConfig::parse_text(kSmallRun, "cmp2");
    cfg2.seed = 77;
    const RunResult b = run(cfg2, (tmp.path / "b").string());
    const std::string out = compare({a.log_path, b.log_path}, (tmp.path / "two.csv").string());
    std::ifstream in(out);
    std::string line;
    std::getline(in, line);
    std::size_t rows = 0;
    bool found_final_loss = false;
    const std::string want_value = [&] {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.17g", a.records.back().train_loss);
      return std::string(buf);
    }();
    while (std::getline(in, line)) {
      ++rows;
      if (line.find("cmp,train_loss," + want_value) != std::string::npos) {
        found_final_loss = true;
      }
    }
    CHECK(rows == (a.records.size() + b.records.size()) * 7);
    CHECK(found_final_loss);  // emitted text parses back to the exact double
  }

  SUBCASE("cadence mismatch is an error") {
    RunConfig cfg3 = RunConfig::parse_text(kSmallRun, "cmp3");
    cfg3.eval_every = 7;
    const RunResult c = run(cfg3, (tmp.path / "c").string());
    CHECK_THROWS_AS((void)compare({a.log_path, c.log_path}, (tmp.path / "x.csv").string()),
                    Error);
  }
}

TEST_CASE("stability verb writes traces with the documented schema") {
  TempDir tmp("stability");
  const RunConfig cfg = RunConfig::parse_text(
      "problem=logistic data=blobs:2:15:5:1.0:3 wd=0.01 opt=rsgd scheme=scale:0.5\n"
      "lr=0.05 T=30 seed=5 eval_every=10 pairs=2 bound=convex\n",
      "stab");
  const std::string dir = stability_run(cfg, tmp.path.string());
  for (const char* name : {"trace_params.csv", "trace_ref.csv", "pairs.csv", "bound.csv"}) {
    CHECK(fs::exists(fs::path(dir) / name));
  }
  std::ifstream in((fs::path(dir) / "trace_params.csv").string());
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "t,divergence,stderr");
  REQUIRE(std::getline(in, line));
  CHECK(line.rfind("0,0,", 0) == 0);  // divergence starts at zero

  std::ifstream bin((fs::path(dir) / "bound.csv").string());
  REQUIRE(std::getline(bin, line));
  CHECK(line == "t,empirical,bound,slack");
  while (std::getline(bin, line)) {
    // slack = bound - empirical >= 0 in this tame setting
    const auto last = line.rfind(',');
    CHECK(std::stod(line.substr(last + 1)) >= 0.0);
  }
}

TEST_CASE("bounds verb writes a trace and keeps the bound above the empirical value") {
  TempDir tmp("bounds");
  const RunConfig cfg = RunConfig::parse_text(
      "problem=quadratic data=blobs:2:25:5:1.0:3 clip_norm=5 opt=rsgd scheme=scale:0.5\n"
      "lr=0.01 T=400 seed=5 eval_every=50 bound=theorem4 c1=1\n",
      "bnd");
  const std::string csv = bounds_run(cfg, tmp.path.string());
  std::ifstream in(csv);
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "t,empirical,bound,slack");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    const auto last = line.rfind(',');
    CHECK(std::stod(line.substr(last + 1)) >= 0.0);
  }
  CHECK(rows > 0);
}

TEST_CASE("bounds verb rejects decaying schedules") {
  const RunConfig cfg = RunConfig::parse_text(
      "problem=quadratic data=blobs:2:10:4:1.0:3 opt=rsgd scheme=scale:0.5\n"
      "lr=0.01 decay=0.1@10 T=100 seed=1 bound=theorem4\n");
  CHECK_THROWS_AS((void)bounds_run(cfg, "/tmp"), Error);
}
