#include "analysis.hpp"

#include <cmath>
#include <future>
#include <memory>

#include "errors.hpp"
#include "rng.hpp"

namespace resopt {

namespace {

void require_positive(double v, const char* name) {
  if (!(v > 0.0)) throw Error::config(std::string(name) + " must be positive");
}

}  // namespace

double bound_theorem4(const BoundInputs& b, double residual_sq_mean) {
  require_positive(b.gamma, "gamma");
  require_positive(static_cast<double>(b.T), "T");
  require_positive(b.c1, "c1");
  if (residual_sq_mean < 0.0) throw Error::config("residual mean must be >= 0");
  const double head = (1.0 + b.c1) * b.r0_gap / (b.gamma * static_cast<double>(b.T));
  const double noise = (1.0 + b.c1) * b.beta * b.gamma * b.sigma2 / 2.0;
  const double tail = (1.0 + 1.0 / b.c1) * b.beta * b.beta * residual_sq_mean;
  return head + noise + tail;
}

double bound_corollary_scale(const BoundInputs& b) {
  require_positive(b.gamma, "gamma");
  require_positive(static_cast<double>(b.T), "T");
  require_positive(b.c1, "c1");
  require_positive(b.c2, "c2");
  if (!(b.alpha > 0.0 && b.alpha <= 1.0)) throw Error::config("alpha must be in (0,1]");
  const double q = (1.0 - b.alpha) * (1.0 - b.alpha);
  if (!(q * (1.0 + b.c2) < 1.0)) {
    throw Error::config("constraint (1-alpha)^2 (1+c2) < 1 violated");
  }
  const double head = (1.0 + b.c1) * b.r0_gap / (b.gamma * static_cast<double>(b.T));
  const double noise = (1.0 + b.c1) * b.beta * b.gamma * b.sigma2 / 2.0;
  const double tail = q * (1.0 + 1.0 / b.c2) * (1.0 + 1.0 / b.c1) / (1.0 - q * (1.0 + b.c2)) *
                      b.beta * b.beta * b.gamma * b.gamma * b.sigma2;
  return head + noise + tail;
}

double sgd_convergence_bound(const BoundInputs& b) {
  require_positive(b.gamma, "gamma");
  require_positive(static_cast<double>(b.T), "T");
  return b.r0_gap / (b.gamma * static_cast<double>(b.T)) + b.beta * b.gamma * b.sigma2 / 2.0;
}

namespace {

const std::vector<double>& stability_gammas(const BoundInputs& b) {
  if (b.gammas.size() != static_cast<std::size_t>(b.T)) {
    throw Error::config("stability bounds need a gamma entry per step (got " +
                        std::to_string(b.gammas.size()) + ", T=" + std::to_string(b.T) + ")");
  }
  return b.gammas;
}

void check_stability_inputs(const BoundInputs& b) {
  require_positive(b.L, "L");
  require_positive(b.beta, "beta");
  require_positive(static_cast<double>(b.N), "N");
  if (!(b.alpha > 0.0 && b.alpha <= 1.0)) throw Error::config("alpha must be in (0,1]");
}

}  // namespace

double bound_stability_convex(const BoundInputs& b) {
  check_stability_inputs(b);
  const auto& g = stability_gammas(b);
  const double cap = 2.0 / b.beta;
  for (long t = 0; t < b.T; ++t) {
    if (g[static_cast<std::size_t>(t)] > cap) {
      throw Error::config("learning rate exceeds 2/beta at step " + std::to_string(t));
    }
  }
  double sum = 0.0;
  for (long t = 0; t < b.T; ++t) {
    const double factor = 1.0 - std::pow(1.0 - b.alpha, static_cast<double>(b.T - t));
    sum += factor * g[static_cast<std::size_t>(t)];
  }
  return 2.0 * b.L * b.L / static_cast<double>(b.N) * sum;
}

double sgd_stability_convex(const BoundInputs& b) {
  check_stability_inputs(b);
  const auto& g = stability_gammas(b);
  double sum = 0.0;
  for (long t = 0; t < b.T; ++t) sum += g[static_cast<std::size_t>(t)];
  return 2.0 * b.L * b.L / static_cast<double>(b.N) * sum;
}

double bound_stability_nonconvex(const BoundInputs& b,
                                 const std::vector<double>& ref_divergence) {
  check_stability_inputs(b);
  const auto& g = stability_gammas(b);
  if (ref_divergence.size() != static_cast<std::size_t>(b.T)) {
    throw Error::dimension("ref divergence needs T entries (got " +
                           std::to_string(ref_divergence.size()) + ", T=" +
                           std::to_string(b.T) + ")");
  }
  const double n_inv = 1.0 / static_cast<double>(b.N);
  double sum = 0.0;
  for (long t = 0; t < b.T; ++t) {
    const auto u = static_cast<std::size_t>(t);
    const double factor = 1.0 - std::pow(1.0 - b.alpha, static_cast<double>(b.T - t - 1));
    sum += factor * (2.0 * g[u] * b.L * b.L * n_inv +
                     (1.0 - n_inv) * g[u] * b.beta * b.L * ref_divergence[u]);
  }
  return sum;
}

double sgd_stability_nonconvex(const BoundInputs& b,
                               const std::vector<double>& ref_divergence) {
  check_stability_inputs(b);
  const auto& g = stability_gammas(b);
  if (ref_divergence.size() != static_cast<std::size_t>(b.T)) {
    throw Error::dimension("ref divergence needs T entries");
  }
  const double n_inv = 1.0 / static_cast<double>(b.N);
  double sum = 0.0;
  for (long t = 0; t < b.T; ++t) {
    const auto u = static_cast<std::size_t>(t);
    sum += 2.0 * g[u] * b.L * b.L * n_inv +
           (1.0 - n_inv) * g[u] * b.beta * b.L * ref_divergence[u];
  }
  return sum;
}

double generalization_gap(const Problem& p, const Vec& x, const Dataset& train,
                          const Dataset& heldout) {
  return p.empirical_risk(x, train) - p.empirical_risk(x, heldout);
}

double proximity(const Vec& x_wrapped, const Vec& x_ref) {
  const double denom = norm1(x_ref);
  if (!(denom > 0.0)) throw Error::numeric("proximity undefined: reference has zero L1 norm");
  return norm1(sub(x_wrapped, x_ref)) / denom;
}

// ---------------------------------------------------------------------------
// Twin training
// ---------------------------------------------------------------------------

namespace {

struct PairResult {
  std::vector<double> div;       // at recorded steps
  std::vector<double> ref_div;   // at recorded steps
  std::vector<double> loss_div;  // at recorded steps (when loss_trace)
  std::vector<double> ref_div_full;  // at every t in [0,T)
  double final_loss_div = 0.0;
  double max_grad_norm = 0.0;
};

double max_heldout_loss_gap(const Problem& p, const Vec& a, const Vec& b,
                            const Dataset& heldout) {
  double mx = 0.0;
  for (const auto& z : heldout.samples) {
    mx = std::max(mx, std::fabs(p.loss(a, z) - p.loss(b, z)));
  }
  return mx;
}

class TwinRun {
 public:
  TwinRun(const TwinConfig& cfg, Vec x0)
      : wrapped_(cfg.wrapped),
        wrapper_(cfg.base, cfg.scheme, x0),
        base_(cfg.base, x0.size()),
        x_(std::move(x0)) {}

  const Vec& params() const { return wrapped_ ? wrapper_.params() : x_; }
  const Vec& reference() const { return wrapped_ ? wrapper_.reference() : x_; }

  double step(const Problem& p, const Sample& z) {
    const Vec g = p.grad(reference(), z);
    const double gn = norm2(g);
    if (wrapped_) {
      wrapper_.apply_gradient(g);
    } else {
      x_ = base_.step(x_, g);
    }
    return gn;
  }

 private:
  bool wrapped_;
  ResidualWrapper wrapper_;
  BaseOptimizer base_;
  Vec x_;
};

PairResult run_pair(const Problem& p, const Dataset& S, const Dataset& pool,
                    const Dataset& heldout, const TwinConfig& cfg, int pair) {
  const std::size_t N = S.size();
  std::size_t i;
  if (cfg.replace_index >= 0) {
    i = static_cast<std::size_t>(cfg.replace_index);
  } else {
    RngStream pick(derive_seed(cfg.seed, 1000003ULL + static_cast<std::uint64_t>(pair)));
    i = pick.index_below(N);
  }
  if (i >= N) throw Error::config("replace index out of range");
  if (pool.size() <= i) throw Error::config("replacement pool smaller than replace index");

  Dataset S2 = S;
  S2[i] = pool[i];

  RngStream init_rng(derive_seed(cfg.seed, 2ULL * static_cast<std::uint64_t>(pair) + 1));
  const Vec x0 = p.init_params(init_rng);
  TwinRun a(cfg, x0);
  TwinRun b(cfg, x0);

  RngStream sample_rng(derive_seed(cfg.seed, 2ULL * static_cast<std::uint64_t>(pair)));

  PairResult out;
  out.ref_div_full.reserve(static_cast<std::size_t>(cfg.T));
  for (long t = 0; t < cfg.T; ++t) {
    const double ref_gap = norm2(sub(a.reference(), b.reference()));
    out.ref_div_full.push_back(ref_gap);
    if (t % cfg.record_every == 0) {
      out.div.push_back(norm2(sub(a.params(), b.params())));
      out.ref_div.push_back(ref_gap);
      if (cfg.loss_trace) {
        out.loss_div.push_back(max_heldout_loss_gap(p, a.params(), b.params(), heldout));
      }
    }
    const std::size_t idx = sample_rng.index_below(N);
    out.max_grad_norm = std::max(out.max_grad_norm, a.step(p, S[idx]));
    out.max_grad_norm = std::max(out.max_grad_norm, b.step(p, S2[idx]));
  }
  out.div.push_back(norm2(sub(a.params(), b.params())));
  out.ref_div.push_back(norm2(sub(a.reference(), b.reference())));
  out.final_loss_div = max_heldout_loss_gap(p, a.params(), b.params(), heldout);
  if (cfg.loss_trace) out.loss_div.push_back(out.final_loss_div);
  return out;
}

void mean_stderr(const std::vector<std::vector<double>>& per_pair, std::size_t len,
                 std::vector<double>& mean, std::vector<double>& stderr_out) {
  const std::size_t n = per_pair.size();
  mean.assign(len, 0.0);
  stderr_out.assign(len, 0.0);
  for (const auto& v : per_pair) {
    for (std::size_t j = 0; j < len; ++j) mean[j] += v[j];
  }
  for (auto& m : mean) m /= static_cast<double>(n);
  if (n > 1) {
    for (const auto& v : per_pair) {
      for (std::size_t j = 0; j < len; ++j) {
        const double d = v[j] - mean[j];
        stderr_out[j] += d * d;
      }
    }
    for (auto& s : stderr_out) {
      s = std::sqrt(s / static_cast<double>(n - 1) / static_cast<double>(n));
    }
  }
}

}  // namespace

StabilityTrace twin_training(const Problem& p, const Dataset& S,
                             const Dataset& replacement_pool, const Dataset& heldout,
                             const TwinConfig& cfg) {
  if (S.empty()) throw Error::config("twin training needs a dataset");
  if (heldout.empty()) throw Error::config("twin training needs a held-out set");
  if (cfg.pairs < 1) throw Error::config("twin training needs at least one pair");
  if (cfg.T < 0) throw Error::config("negative step count");
  if (cfg.record_every < 1) throw Error::config("record cadence must be >= 1");
  if (cfg.replace_index >= static_cast<long>(S.size())) {
    throw Error::config("replace index out of range");
  }

  std::vector<std::future<PairResult>> futures;
  futures.reserve(static_cast<std::size_t>(cfg.pairs));
  for (int pair = 0; pair < cfg.pairs; ++pair) {
    futures.push_back(std::async(std::launch::async, [&, pair] {
      return run_pair(p, S, replacement_pool, heldout, cfg, pair);
    }));
  }
  std::vector<PairResult> results;
  results.reserve(futures.size());
  for (auto& f : futures) results.push_back(f.get());

  StabilityTrace trace;
  for (long t = 0; t < cfg.T; t += cfg.record_every) trace.steps.push_back(t);
  trace.steps.push_back(cfg.T);
  const std::size_t len = trace.steps.size();

  std::vector<std::vector<double>> div, ref_div, loss_div;
  for (auto& r : results) {
    div.push_back(std::move(r.div));
    ref_div.push_back(std::move(r.ref_div));
    if (cfg.loss_trace) loss_div.push_back(std::move(r.loss_div));
    trace.pair_final_loss_div.push_back(r.final_loss_div);
    trace.max_grad_norm = std::max(trace.max_grad_norm, r.max_grad_norm);
  }
  mean_stderr(div, len, trace.div_mean, trace.div_stderr);
  mean_stderr(ref_div, len, trace.ref_div_mean, trace.ref_div_stderr);
  if (cfg.loss_trace) mean_stderr(loss_div, len, trace.loss_div_mean, trace.loss_div_stderr);

  trace.ref_divergence_full.assign(static_cast<std::size_t>(cfg.T), 0.0);
  for (const auto& r : results) {
    for (std::size_t j = 0; j < trace.ref_divergence_full.size(); ++j) {
      trace.ref_divergence_full[j] += r.ref_div_full[j];
    }
  }
  for (auto& v : trace.ref_divergence_full) v /= static_cast<double>(results.size());
  return trace;
}

}  // namespace resopt
