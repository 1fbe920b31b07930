#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "analysis.hpp"
#include "optim.hpp"
#include "problems.hpp"
#include "schemes.hpp"
#include "vec.hpp"

namespace resopt {

inline constexpr const char* kVersion = "0.1.0";

enum class OptVariant { base, wrapped, compressed };

// Flat key=value configuration; '#' starts a comment, keys may repeat (last
// one wins). Fully determines a run together with the seed.
struct RunConfig {
  std::string name = "run";
  std::string echo;  // verbatim config text

  // problem
  std::string problem = "quadratic";
  std::vector<int> hidden;
  Activation activation = Activation::tanh;
  double weight_decay = 0.0;
  bool bias = true;

  // data
  std::string data = "blobs:2:50:10:1.0:1";
  std::string heldout = "auto";  // auto | none | blobs:... | csv:...
  double clip_norm = 0.0;        // 0 disables

  // optimizer
  std::string opt = "sgd";
  OptVariant variant = OptVariant::base;
  BaseKind base_kind = BaseKind::sgd;
  bool has_scheme = false;
  SchemeSpec scheme;
  double lr = 0.1;
  std::string decay;  // "<factor>@<m1,m2,...>"
  double momentum = 0.9;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  int asgd_window = 5;
  long asgd_start = -1;

  // run
  long T = -1;
  long epochs = -1;
  long batch = 1;
  bool full_batch = false;
  std::string sampling = "replacement";  // or "shuffle"
  std::uint64_t seed = 1;
  long eval_every = 10;
  bool reset_residual_on_decay = false;
  std::string out;  // output subdirectory; defaults to the config name

  // stability / bounds verbs
  int pairs = 10;
  long replace_index = -1;
  std::string bound;  // theorem4 | corollary | convex | nonconvex
  double c1 = 1.0, c2 = 1.0;
  double beta_override = 0.0;  // 0 = derive from the problem

  // set by sweep, not a config key
  int replica = -1;

  static RunConfig parse_text(const std::string& text, const std::string& name = "run");
  static RunConfig parse_file(const std::string& path);

  BaseConfig base_config(long steps_per_epoch) const;
  LrSchedule schedule(long steps_per_epoch) const;
  // steps implied by T or epochs for dataset size N
  long resolved_steps(std::size_t dataset_size) const;
  long resolved_steps_per_epoch(std::size_t dataset_size) const;
};

struct RunRecord {
  long step = 0;
  double train_loss = 0, heldout_loss = 0, heldout_acc = 0;
  double grad_norm = 0, residual_norm = 0, proximity = 0, lr = 0;
};

// Running values tracked at each record, for bound traces.
struct BoundTrack {
  double min_grad_sq = 0;
  double resid_sq_mean = 0;  // mean over steps completed so far
  double sigma2_hat = 0;     // max per-sample second moment seen so far
  double r0_gap = 0;         // risk(x0) minus best risk seen so far (exact for quadratic)
};

struct RunResult {
  std::vector<RunRecord> records;
  std::vector<BoundTrack> tracks;  // aligned with records
  long steps = 0;
  double min_grad_sq = 0;
  double resid_sq_mean = 0;
  double sigma2_hat = 0;
  double r0_gap = 0;
  Vec final_params;
  bool has_heldout = false;
  std::string log_path;         // set when written to disk
  std::string checkpoint_path;  // set when written to disk
};

// Builds the problem and datasets a config describes.
struct Workload {
  std::unique_ptr<Problem> problem;
  Dataset train;
  Dataset heldout;  // may be empty
  std::uint64_t data_seed = 0;
};
Workload build_workload(const RunConfig& cfg);

// Executes a run without touching the filesystem.
RunResult run_in_memory(const RunConfig& cfg);

// Executes a run and persists run.log + checkpoint.txt under
// <out_root>/<cfg.out or cfg.name>/.
RunResult run(const RunConfig& cfg, const std::string& out_root);

// Multi-seed sweep over every *.cfg in a directory. Returns the summary path.
std::string sweep(const std::string& config_dir, int replicas, const std::string& out_root,
                  int windows = 3);

// Merges run logs into one long-format CSV (step,run_id,metric,value).
std::string compare(const std::vector<std::string>& log_paths, const std::string& out_csv);

// Twin-training experiment; writes trace and pair CSVs (and bound.csv when
// cfg.bound is convex/nonconvex). Returns the output directory.
std::string stability_run(const RunConfig& cfg, const std::string& out_root);

// Convergence-bound trace (bound=theorem4|corollary). Returns the CSV path.
std::string bounds_run(const RunConfig& cfg, const std::string& out_root);

// Parsed-back run log for compare and tests.
struct LoadedRunLog {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};
LoadedRunLog load_run_log(const std::string& path);

// Best metric per window: heldout accuracy (max) when available, otherwise
// train loss (min). Windows split the records evenly; the remainder goes to
// the last window.
std::vector<double> window_best(const std::vector<RunRecord>& records, int windows,
                                bool use_accuracy);

// Smoothness constant for the bound evaluators: closed form for quadratic and
// logistic problems, beta_override otherwise.
double resolve_beta(const RunConfig& cfg, const Problem& p, const Dataset& train);

}  // namespace resopt
