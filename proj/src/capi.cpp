#include "resopt.h"

#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "errors.hpp"
#include "harness.hpp"

using resopt::Error;
using resopt::RunConfig;
using resopt::RunResult;

struct resopt_ctx {
  std::string last_error;
};

struct resopt_run {
  RunResult result;
  bool has_heldout = false;
};

namespace {

resopt_status status_of(const Error& e) {
  switch (e.kind()) {
    case Error::Kind::config:
    case Error::Kind::dimension:
      return RESOPT_ERR_CONFIG;
    case Error::Kind::numeric:
      return RESOPT_ERR_NUMERIC;
    case Error::Kind::io:
      return RESOPT_ERR_IO;
    case Error::Kind::internal:
      return RESOPT_ERR_INTERNAL;
  }
  return RESOPT_ERR_INTERNAL;
}

void copy_out(char* buf, size_t cap, const std::string& s) {
  if (!buf || cap == 0) return;
  const size_t n = std::min(cap - 1, s.size());
  std::memcpy(buf, s.data(), n);
  buf[n] = '\0';
}

template <typename Fn>
resopt_status guarded(resopt_ctx* ctx, Fn&& fn) {
  if (!ctx) return RESOPT_ERR_CONFIG;
  try {
    fn();
    ctx->last_error.clear();
    return RESOPT_OK;
  } catch (const Error& e) {
    ctx->last_error = e.what();
    return status_of(e);
  } catch (const std::exception& e) {
    ctx->last_error = e.what();
    return RESOPT_ERR_INTERNAL;
  }
}

std::string default_root(const char* out_root) {
  return out_root && *out_root ? out_root : ".";
}

}  // namespace

extern "C" {

const char* resopt_version(void) { return resopt::kVersion; }

resopt_ctx* resopt_ctx_new(void) { return new (std::nothrow) resopt_ctx; }

void resopt_ctx_free(resopt_ctx* ctx) { delete ctx; }

const char* resopt_ctx_last_error(const resopt_ctx* ctx) {
  return ctx ? ctx->last_error.c_str() : "null context";
}

resopt_status resopt_run_file(resopt_ctx* ctx, const char* config_path, const char* out_root,
                              char* log_path, size_t cap) {
  return guarded(ctx, [&] {
    if (!config_path) throw Error::config("null config path");
    const RunConfig cfg = RunConfig::parse_file(config_path);
    const RunResult res = resopt::run(cfg, default_root(out_root));
    copy_out(log_path, cap, res.log_path);
  });
}

resopt_status resopt_run_text(resopt_ctx* ctx, const char* config_text, const char* out_root,
                              char* log_path, size_t cap) {
  return guarded(ctx, [&] {
    if (!config_text) throw Error::config("null config text");
    const RunConfig cfg = RunConfig::parse_text(config_text);
    const RunResult res = resopt::run(cfg, default_root(out_root));
    copy_out(log_path, cap, res.log_path);
  });
}

resopt_status resopt_run_open(resopt_ctx* ctx, const char* config_text, resopt_run** out) {
  return guarded(ctx, [&] {
    if (!config_text || !out) throw Error::config("null argument");
    const RunConfig cfg = RunConfig::parse_text(config_text);
    auto run = std::make_unique<resopt_run>();
    run->result = resopt::run_in_memory(cfg);
    run->has_heldout = run->result.has_heldout;
    *out = run.release();
  });
}

void resopt_run_free(resopt_run* run) { delete run; }

long resopt_run_steps(const resopt_run* run) { return run ? run->result.steps : -1; }

size_t resopt_run_dim(const resopt_run* run) {
  return run ? run->result.final_params.size() : 0;
}

double resopt_run_final_train_loss(const resopt_run* run) {
  return run ? run->result.records.back().train_loss : 0.0;
}

double resopt_run_final_heldout_loss(const resopt_run* run) {
  return run ? run->result.records.back().heldout_loss : 0.0;
}

double resopt_run_final_heldout_accuracy(const resopt_run* run) {
  return run ? run->result.records.back().heldout_acc : 0.0;
}

double resopt_run_min_grad_sq(const resopt_run* run) {
  return run ? run->result.min_grad_sq : 0.0;
}

double resopt_run_residual_sq_mean(const resopt_run* run) {
  return run ? run->result.resid_sq_mean : 0.0;
}

resopt_status resopt_run_params(const resopt_run* run, double* buf, size_t cap, size_t* len) {
  if (!run) return RESOPT_ERR_CONFIG;
  const auto& x = run->result.final_params;
  if (len) *len = x.size();
  if (buf) {
    const size_t n = std::min(cap, x.size());
    std::memcpy(buf, x.data(), n * sizeof(double));
  }
  return RESOPT_OK;
}

resopt_status resopt_sweep(resopt_ctx* ctx, const char* config_dir, int replicas,
                           const char* out_root, char* summary_path, size_t cap) {
  return guarded(ctx, [&] {
    if (!config_dir) throw Error::config("null config directory");
    const std::string path = resopt::sweep(config_dir, replicas, default_root(out_root));
    copy_out(summary_path, cap, path);
  });
}

resopt_status resopt_compare(resopt_ctx* ctx, const char* const* log_paths, int n,
                             const char* out_csv) {
  return guarded(ctx, [&] {
    if (!log_paths || n < 1 || !out_csv) throw Error::config("compare needs logs and an output");
    std::vector<std::string> paths;
    for (int i = 0; i < n; ++i) {
      if (!log_paths[i]) throw Error::config("null log path");
      paths.emplace_back(log_paths[i]);
    }
    resopt::compare(paths, out_csv);
  });
}

resopt_status resopt_stability(resopt_ctx* ctx, const char* config_path, const char* out_root,
                               char* out_dir, size_t cap) {
  return guarded(ctx, [&] {
    if (!config_path) throw Error::config("null config path");
    const RunConfig cfg = RunConfig::parse_file(config_path);
    const std::string dir = resopt::stability_run(cfg, default_root(out_root));
    copy_out(out_dir, cap, dir);
  });
}

resopt_status resopt_bounds(resopt_ctx* ctx, const char* config_path, const char* out_root,
                            char* csv_path, size_t cap) {
  return guarded(ctx, [&] {
    if (!config_path) throw Error::config("null config path");
    const RunConfig cfg = RunConfig::parse_file(config_path);
    const std::string path = resopt::bounds_run(cfg, default_root(out_root));
    copy_out(csv_path, cap, path);
  });
}

}  // extern "C"
