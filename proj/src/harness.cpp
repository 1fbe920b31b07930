#include "harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <future>
#include <limits>
#include <map>
#include <sstream>

#include "errors.hpp"
#include "rng.hpp"

namespace fs = std::filesystem;

namespace resopt {

namespace {

constexpr std::uint64_t kInitTag = 11;
constexpr std::uint64_t kSampleTag = 12;
constexpr std::uint64_t kHeldoutTag = 17;
constexpr std::uint64_t kPoolTag = 99;

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

struct KvEntry {
  std::string value;
  int line = 0;
};

class KvMap {
 public:
  explicit KvMap(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      std::istringstream toks(line);
      std::string tok;
      while (toks >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos || eq == 0) {
          throw Error::config("line " + std::to_string(lineno) + ": expected key=value, got '" +
                              tok + "'");
        }
        entries_[tok.substr(0, eq)] = KvEntry{tok.substr(eq + 1), lineno};
      }
    }
  }

  std::optional<std::string> take(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    last_line_ = it->second.line;
    std::string v = it->second.value;
    entries_.erase(it);
    return v;
  }

  int last_line() const { return last_line_; }

  void finish() const {
    if (!entries_.empty()) {
      const auto& it = *entries_.begin();
      throw Error::config("line " + std::to_string(it.second.line) + ": unknown key '" +
                          it.first + "'");
    }
  }

 private:
  std::map<std::string, KvEntry> entries_;
  int last_line_ = 0;
};

double parse_double(const KvMap& kv, const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw Error::config("line " + std::to_string(kv.last_line()) + ": bad number for " + key +
                        ": '" + text + "'");
  }
}

long parse_long(const KvMap& kv, const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const long v = std::stol(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw Error::config("line " + std::to_string(kv.last_line()) + ": bad integer for " + key +
                        ": '" + text + "'");
  }
}

bool parse_bool(const KvMap& kv, const std::string& key, const std::string& text) {
  if (text == "on" || text == "true" || text == "1") return true;
  if (text == "off" || text == "false" || text == "0") return false;
  throw Error::config("line " + std::to_string(kv.last_line()) + ": bad flag for " + key +
                      ": '" + text + "' (use on/off)");
}

}  // namespace

RunConfig RunConfig::parse_text(const std::string& text, const std::string& name) {
  RunConfig cfg;
  cfg.name = name;
  cfg.echo = text;
  KvMap kv(text);

  if (auto v = kv.take("problem")) {
    if (*v != "quadratic" && *v != "logistic" && *v != "mlp") {
      throw Error::config("line " + std::to_string(kv.last_line()) + ": unknown problem '" +
                          *v + "'");
    }
    cfg.problem = *v;
  }
  if (auto v = kv.take("hidden")) {
    cfg.hidden.clear();
    std::size_t pos = 0;
    while (pos < v->size()) {
      std::size_t comma = v->find(',', pos);
      if (comma == std::string::npos) comma = v->size();
      cfg.hidden.push_back(static_cast<int>(parse_long(kv, "hidden", v->substr(pos, comma - pos))));
      pos = comma + 1;
    }
    if (cfg.hidden.empty()) {
      throw Error::config("line " + std::to_string(kv.last_line()) + ": hidden needs widths");
    }
  }
  if (auto v = kv.take("act")) {
    if (*v == "tanh") {
      cfg.activation = Activation::tanh;
    } else if (*v == "relu") {
      cfg.activation = Activation::relu;
    } else {
      throw Error::config("line " + std::to_string(kv.last_line()) + ": unknown act '" + *v + "'");
    }
  }
  if (auto v = kv.take("wd")) cfg.weight_decay = parse_double(kv, "wd", *v);
  if (auto v = kv.take("bias")) cfg.bias = parse_bool(kv, "bias", *v);

  if (auto v = kv.take("data")) cfg.data = *v;
  if (auto v = kv.take("heldout")) cfg.heldout = *v;
  if (auto v = kv.take("clip_norm")) cfg.clip_norm = parse_double(kv, "clip_norm", *v);

  if (auto v = kv.take("opt")) cfg.opt = *v;
  {
    const std::string& o = cfg.opt;
    auto base_of = [](const std::string& s) -> std::optional<BaseKind> {
      if (s == "sgd") return BaseKind::sgd;
      if (s == "sgdm") return BaseKind::sgdm;
      if (s == "asgd") return BaseKind::asgd;
      if (s == "adam") return BaseKind::adam;
      if (s == "adagrad") return BaseKind::adagrad;
      return std::nullopt;
    };
    if (auto k = base_of(o)) {
      cfg.variant = OptVariant::base;
      cfg.base_kind = *k;
    } else if (o.size() > 1 && o[0] == 'r' && base_of(o.substr(1))) {
      cfg.variant = OptVariant::wrapped;
      cfg.base_kind = *base_of(o.substr(1));
    } else if (o == "signsgd" || o == "signsgdm" || o == "efsignsgd" || o == "efsignsgdm") {
      cfg.variant = OptVariant::compressed;
    } else {
      throw Error::config("unknown optimizer '" + o + "'");
    }
  }
  if (auto v = kv.take("scheme")) {
    cfg.has_scheme = true;
    cfg.scheme = SchemeSpec::parse(*v);
  }
  if (cfg.variant == OptVariant::wrapped && !cfg.has_scheme) {
    throw Error::config("optimizer '" + cfg.opt + "' needs scheme=");
  }
  if (cfg.has_scheme && cfg.variant == OptVariant::base) {
    throw Error::config("scheme= requires a residual-wrapped optimizer");
  }
  if (cfg.has_scheme && cfg.variant == OptVariant::compressed &&
      cfg.opt.substr(0, 2) != "ef") {
    throw Error::config("scheme= on signsgd is fixed to sign; only ef variants take one");
  }

  if (auto v = kv.take("lr")) cfg.lr = parse_double(kv, "lr", *v);
  if (auto v = kv.take("decay")) cfg.decay = *v;
  if (auto v = kv.take("momentum")) cfg.momentum = parse_double(kv, "momentum", *v);
  if (auto v = kv.take("beta1")) cfg.beta1 = parse_double(kv, "beta1", *v);
  if (auto v = kv.take("beta2")) cfg.beta2 = parse_double(kv, "beta2", *v);
  if (auto v = kv.take("eps")) cfg.adam_eps = parse_double(kv, "eps", *v);
  if (auto v = kv.take("asgd_window")) {
    cfg.asgd_window = static_cast<int>(parse_long(kv, "asgd_window", *v));
  }
  if (auto v = kv.take("asgd_start")) cfg.asgd_start = parse_long(kv, "asgd_start", *v);

  if (auto v = kv.take("T")) cfg.T = parse_long(kv, "T", *v);
  if (auto v = kv.take("epochs")) cfg.epochs = parse_long(kv, "epochs", *v);
  if (auto v = kv.take("batch")) {
    if (*v == "full") {
      cfg.full_batch = true;
    } else {
      cfg.batch = parse_long(kv, "batch", *v);
      if (cfg.batch < 1) {
        throw Error::config("line " + std::to_string(kv.last_line()) + ": batch must be >= 1");
      }
    }
  }
  if (auto v = kv.take("sampling")) {
    if (*v != "replacement" && *v != "shuffle") {
      throw Error::config("line " + std::to_string(kv.last_line()) +
                          ": sampling must be replacement or shuffle");
    }
    cfg.sampling = *v;
  }
  if (auto v = kv.take("seed")) {
    try {
      cfg.seed = std::stoull(*v);
    } catch (const std::exception&) {
      throw Error::config("line " + std::to_string(kv.last_line()) + ": bad seed '" + *v + "'");
    }
  }
  if (auto v = kv.take("eval_every")) {
    cfg.eval_every = parse_long(kv, "eval_every", *v);
    if (cfg.eval_every < 1) {
      throw Error::config("line " + std::to_string(kv.last_line()) + ": eval_every must be >= 1");
    }
  }
  if (auto v = kv.take("reset_residual_on_decay")) {
    cfg.reset_residual_on_decay = parse_bool(kv, "reset_residual_on_decay", *v);
  }
  if (auto v = kv.take("out")) cfg.out = *v;

  if (auto v = kv.take("pairs")) cfg.pairs = static_cast<int>(parse_long(kv, "pairs", *v));
  if (auto v = kv.take("replace_index")) cfg.replace_index = parse_long(kv, "replace_index", *v);
  if (auto v = kv.take("bound")) {
    if (*v != "theorem4" && *v != "corollary" && *v != "convex" && *v != "nonconvex") {
      throw Error::config("line " + std::to_string(kv.last_line()) + ": unknown bound '" + *v +
                          "'");
    }
    cfg.bound = *v;
  }
  if (auto v = kv.take("c1")) cfg.c1 = parse_double(kv, "c1", *v);
  if (auto v = kv.take("c2")) cfg.c2 = parse_double(kv, "c2", *v);
  if (auto v = kv.take("beta")) cfg.beta_override = parse_double(kv, "beta", *v);

  kv.finish();

  if (cfg.T >= 0 && cfg.epochs >= 0) throw Error::config("give T= or epochs=, not both");
  if (cfg.T < 0 && cfg.epochs < 0) throw Error::config("give T= (steps) or epochs=");
  if (!(cfg.lr > 0.0)) throw Error::config("lr must be positive");
  return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error::io("cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str(), fs::path(path).stem().string());
}

long RunConfig::resolved_steps_per_epoch(std::size_t dataset_size) const {
  if (full_batch) return 1;
  const long n = static_cast<long>(dataset_size);
  return (n + batch - 1) / batch;
}

long RunConfig::resolved_steps(std::size_t dataset_size) const {
  if (T >= 0) return T;
  return epochs * resolved_steps_per_epoch(dataset_size);
}

LrSchedule RunConfig::schedule(long steps_per_epoch) const {
  LrSchedule s = LrSchedule::parse(lr, decay);
  if (epochs >= 0) {
    for (auto& m : s.milestones) m *= steps_per_epoch;
  }
  return s;
}

BaseConfig RunConfig::base_config(long steps_per_epoch) const {
  BaseConfig b;
  b.kind = base_kind;
  b.lr = schedule(steps_per_epoch);
  b.momentum = momentum;
  b.beta1 = beta1;
  b.beta2 = beta2;
  b.adam_eps = adam_eps;
  return b;
}

// ---------------------------------------------------------------------------
// Workload
// ---------------------------------------------------------------------------

namespace {

struct BlobsSpec {
  int k = 0, n = 0, d = 0;
  double spread = 0;
  std::uint64_t seed = 0;
};

BlobsSpec parse_blobs(const std::string& text) {
  // blobs:<classes>:<n_per_class>:<dim>:<spread>:<seed>
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t colon = text.find(':', pos);
    if (colon == std::string::npos) colon = text.size();
    parts.push_back(text.substr(pos, colon - pos));
    pos = colon + 1;
    if (colon == text.size()) break;
  }
  if (parts.size() != 6 || parts[0] != "blobs") {
    throw Error::config("data spec must be blobs:<k>:<n>:<d>:<spread>:<seed> or csv:<path>, got '" +
                        text + "'");
  }
  BlobsSpec s;
  try {
    s.k = std::stoi(parts[1]);
    s.n = std::stoi(parts[2]);
    s.d = std::stoi(parts[3]);
    s.spread = std::stod(parts[4]);
    s.seed = std::stoull(parts[5]);
  } catch (const std::exception&) {
    throw Error::config("bad blobs spec: '" + text + "'");
  }
  return s;
}

Dataset dataset_from_spec(const std::string& spec, std::uint64_t* seed_out) {
  if (spec.rfind("csv:", 0) == 0) {
    if (seed_out) *seed_out = 0;
    return load_csv(spec.substr(4));
  }
  const BlobsSpec b = parse_blobs(spec);
  if (seed_out) *seed_out = b.seed;
  return generate_blobs(b.k, b.n, b.d, b.spread, b.seed);
}

int class_count(const Dataset& S) {
  int mx = 0;
  for (const auto& z : S.samples) mx = std::max(mx, z.label);
  return mx + 1;
}

}  // namespace

Workload build_workload(const RunConfig& cfg) {
  Workload w;
  w.train = dataset_from_spec(cfg.data, &w.data_seed);
  if (cfg.heldout == "auto") {
    if (cfg.data.rfind("blobs", 0) == 0) {
      BlobsSpec b = parse_blobs(cfg.data);
      w.heldout = generate_blobs(b.k, b.n, b.d, b.spread, derive_seed(b.seed, kHeldoutTag));
    }
  } else if (cfg.heldout != "none") {
    w.heldout = dataset_from_spec(cfg.heldout, nullptr);
  }
  if (cfg.clip_norm > 0.0) {
    clip_feature_norm(w.train, cfg.clip_norm);
    if (!w.heldout.empty()) clip_feature_norm(w.heldout, cfg.clip_norm);
  }
  if (!w.heldout.empty() && w.heldout.feature_dim() != w.train.feature_dim()) {
    throw Error::config("held-out feature dimension differs from training data");
  }

  const std::size_t f = w.train.feature_dim();
  if (cfg.problem == "quadratic") {
    w.problem = std::make_unique<QuadraticProblem>(f, cfg.weight_decay);
  } else if (cfg.problem == "logistic") {
    w.problem = std::make_unique<LogisticProblem>(f, class_count(w.train), cfg.weight_decay,
                                                  cfg.bias);
  } else {
    std::vector<int> hidden = cfg.hidden.empty() ? std::vector<int>{16} : cfg.hidden;
    w.problem = std::make_unique<MlpProblem>(f, hidden, class_count(w.train), cfg.activation,
                                             cfg.weight_decay, cfg.bias);
  }
  return w;
}

// ---------------------------------------------------------------------------
// Run loop
// ---------------------------------------------------------------------------

namespace {

// Batch index source; one instance per run, single-owner.
class Sampler {
 public:
  Sampler(const RunConfig& cfg, std::size_t n, RngStream rng)
      : shuffle_(cfg.sampling == "shuffle"),
        full_(cfg.full_batch),
        batch_(static_cast<std::size_t>(cfg.batch)),
        n_(n),
        rng_(rng) {
    if (full_) {
      current_.resize(n_);
      for (std::size_t i = 0; i < n_; ++i) current_[i] = i;
    }
    if (shuffle_) perm_.reserve(n_);
  }

  const std::vector<std::size_t>& next() {
    if (full_) return current_;
    current_.clear();
    for (std::size_t b = 0; b < batch_; ++b) {
      if (shuffle_) {
        if (pos_ >= perm_.size()) refill();
        current_.push_back(perm_[pos_++]);
      } else {
        current_.push_back(rng_.index_below(n_));
      }
    }
    return current_;
  }

 private:
  void refill() {
    perm_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) perm_[i] = i;
    for (std::size_t i = n_ - 1; i > 0; --i) {
      const std::size_t j = rng_.index_below(i + 1);
      std::swap(perm_[i], perm_[j]);
    }
    pos_ = 0;
  }

  bool shuffle_;
  bool full_;
  std::size_t batch_;
  std::size_t n_;
  RngStream rng_;
  std::vector<std::size_t> perm_;
  std::size_t pos_ = 0;
  std::vector<std::size_t> current_;
};

double quadratic_min_risk(const QuadraticProblem& q, const Dataset& S) {
  // closed form: the regularized mean of the samples minimizes the risk
  const std::size_t d = q.dim();
  Vec mean(d, 0.0);
  for (const auto& z : S.samples) {
    for (std::size_t i = 0; i < d; ++i) mean[i] += z.features[i];
  }
  for (auto& v : mean) v /= static_cast<double>(S.size());
  Vec xstar = scale(mean, 1.0 / (1.0 + q.weight_decay()));
  return q.empirical_risk(xstar, S);
}

}  // namespace

RunResult run_in_memory(const RunConfig& cfg) {
  Workload w = build_workload(cfg);
  const Problem& p = *w.problem;
  const long spe = cfg.resolved_steps_per_epoch(w.train.size());
  const long T = cfg.resolved_steps(w.train.size());
  if (T < 0) throw Error::config("negative step count");
  const LrSchedule sched = cfg.schedule(spe);

  RngStream init_rng(derive_seed(cfg.seed, kInitTag));
  const Vec x0 = p.init_params(init_rng);

  std::optional<ResidualWrapper> wrapper;
  std::optional<BaseOptimizer> base;
  std::optional<CompressedOptimizer> comp;
  Vec x = x0;
  switch (cfg.variant) {
    case OptVariant::wrapped:
      wrapper.emplace(cfg.base_config(spe), cfg.scheme, x0);
      break;
    case OptVariant::base:
      base.emplace(cfg.base_config(spe), x0.size());
      break;
    case OptVariant::compressed: {
      CompressedConfig cc;
      cc.lr = sched;
      cc.momentum = cfg.opt.back() == 'm' ? cfg.momentum : 0.0;
      cc.error_feedback = cfg.opt.rfind("ef", 0) == 0;
      if (cfg.has_scheme) cc.compressor = cfg.scheme;
      comp.emplace(cc, x0.size());
      break;
    }
  }

  Sampler sampler(cfg, w.train.size(), RngStream(derive_seed(cfg.seed, kSampleTag)));

  RunResult res;
  res.steps = T;
  res.has_heldout = !w.heldout.empty();
  res.min_grad_sq = std::numeric_limits<double>::infinity();

  const double risk_x0 = p.empirical_risk(x0, w.train);
  double best_risk = risk_x0;
  const auto* quad = dynamic_cast<const QuadraticProblem*>(&p);
  const double quad_rstar = quad ? quadratic_min_risk(*quad, w.train) : 0.0;

  double resid_sq_sum = 0.0;
  std::vector<double> heldout_history;
  const bool is_asgd = cfg.base_kind == BaseKind::asgd && cfg.variant != OptVariant::compressed;

  auto current_params = [&]() -> const Vec& {
    return wrapper ? wrapper->params() : x;
  };
  auto eval_params = [&]() -> const Vec& {
    if (is_asgd) {
      const BaseOptimizer& b = wrapper ? wrapper->base() : *base;
      if (b.averaging()) return b.average();
    }
    return current_params();
  };
  auto maybe_trigger_asgd = [&](double metric) {
    if (!is_asgd) return;
    BaseOptimizer& b = wrapper ? wrapper->base() : *base;
    if (b.averaging() || cfg.asgd_start >= 0) return;
    heldout_history.push_back(metric);
    if (asgd_switch(cfg.asgd_window, heldout_history)) b.start_averaging();
  };

  auto record = [&](long s) {
    const Vec& xe = eval_params();
    const Vec& xi = current_params();
    RunRecord r;
    r.step = s;
    r.train_loss = p.empirical_risk(xe, w.train);
    if (!std::isfinite(r.train_loss)) {
      throw Error::numeric("non-finite loss at step " + std::to_string(s));
    }
    if (res.has_heldout) {
      r.heldout_loss = p.empirical_risk(xe, w.heldout);
      r.heldout_acc = p.predict(xe, w.heldout[0]) < 0 ? std::nan("")
                                                      : p.accuracy(xe, w.heldout);
    } else {
      r.heldout_loss = std::nan("");
      r.heldout_acc = std::nan("");
    }
    // one full pass for the exact risk gradient and the second-moment estimate
    {
      Vec gsum(p.dim(), 0.0);
      double sq = 0.0;
      for (const auto& z : w.train.samples) {
        const Vec gi = p.grad(xi, z);
        for (std::size_t j = 0; j < gsum.size(); ++j) gsum[j] += gi[j];
        sq += norm2_sq(gi);
      }
      const double inv = 1.0 / static_cast<double>(w.train.size());
      for (auto& v : gsum) v *= inv;
      r.grad_norm = norm2(gsum);
      res.sigma2_hat = std::max(res.sigma2_hat, sq * inv);
    }
    if (wrapper) {
      r.residual_norm = norm2(wrapper->residual());
      const double denom = norm1(wrapper->reference());
      r.proximity = denom > 0.0 ? norm1(sub(wrapper->params(), wrapper->reference())) / denom
                                : 0.0;
    }
    r.lr = sched.at(std::min(s, std::max<long>(T - 1, 0)));
    res.min_grad_sq = std::min(res.min_grad_sq, r.grad_norm * r.grad_norm);
    best_risk = std::min(best_risk, r.train_loss);
    res.r0_gap = quad ? risk_x0 - quad_rstar : std::max(0.0, risk_x0 - best_risk);

    BoundTrack tr;
    tr.min_grad_sq = res.min_grad_sq;
    tr.resid_sq_mean = s > 0 ? resid_sq_sum / static_cast<double>(s) : 0.0;
    tr.sigma2_hat = res.sigma2_hat;
    tr.r0_gap = res.r0_gap;
    res.records.push_back(r);
    res.tracks.push_back(tr);
    maybe_trigger_asgd(res.has_heldout ? r.heldout_loss : r.train_loss);
  };

  for (long t = 0; t < T; ++t) {
    if (t % cfg.eval_every == 0) record(t);
    if (is_asgd && cfg.asgd_start >= 0 && t == cfg.asgd_start) {
      (wrapper ? wrapper->base() : *base).start_averaging();
    }
    if (wrapper) resid_sq_sum += norm2_sq(wrapper->residual());
    const auto& batch = sampler.next();
    if (wrapper) {
      wrapper->step(p, w.train, batch);
    } else if (base) {
      x = base->step(x, p.batch_gradient(x, w.train, batch));
    } else {
      x = comp->step(x, p.batch_gradient(x, w.train, batch));
    }
    if (!all_finite(current_params())) {
      throw Error::numeric("non-finite parameters at step " + std::to_string(t));
    }
    if (wrapper && cfg.reset_residual_on_decay &&
        std::find(sched.milestones.begin(), sched.milestones.end(), t + 1) !=
            sched.milestones.end()) {
      wrapper->reset_residual();
    }
  }
  record(T);

  res.resid_sq_mean = T > 0 ? resid_sq_sum / static_cast<double>(T) : 0.0;
  res.final_params = current_params();
  return res;
}

// ---------------------------------------------------------------------------
// Log files
// ---------------------------------------------------------------------------

namespace {

const char* kColumns = "step,train_loss,heldout_loss,heldout_acc,grad_norm,residual_norm,proximity,lr";

void write_run_log(const std::string& path, const RunConfig& cfg, const RunResult& res,
                   int replica) {
  std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.c_str(), "w"), &std::fclose);
  if (!f) throw Error::io("cannot open log for writing: " + path);
  std::fprintf(f.get(), "# resopt-run-log v1\n");
  std::fprintf(f.get(), "# version=%s\n", kVersion);
  std::fprintf(f.get(), "# rng=%s\n", RngStream::kAlgorithm);
  std::fprintf(f.get(), "# name=%s\n", cfg.name.c_str());
  if (replica >= 0) std::fprintf(f.get(), "# replica=%d\n", replica);
  std::fprintf(f.get(), "# seed=%llu\n", static_cast<unsigned long long>(cfg.seed));
  std::fprintf(f.get(), "# steps=%ld\n", res.steps);
  std::fprintf(f.get(), "# checkpoint=checkpoint.txt\n");
  std::fprintf(f.get(), "# config-begin\n");
  std::istringstream echo(cfg.echo);
  std::string line;
  while (std::getline(echo, line)) std::fprintf(f.get(), "# %s\n", line.c_str());
  std::fprintf(f.get(), "# config-end\n");
  std::fprintf(f.get(), "%s\n", kColumns);
  for (const auto& r : res.records) {
    std::fprintf(f.get(), "%ld,%s,%s,%s,%s,%s,%s,%s\n", r.step, fmt(r.train_loss).c_str(),
                 fmt(r.heldout_loss).c_str(), fmt(r.heldout_acc).c_str(),
                 fmt(r.grad_norm).c_str(), fmt(r.residual_norm).c_str(),
                 fmt(r.proximity).c_str(), fmt(r.lr).c_str());
  }
  if (std::ferror(f.get())) throw Error::io("write failure: " + path);
}

}  // namespace

RunResult run(const RunConfig& cfg, const std::string& out_root) {
  return [&] {
    RunResult res = run_in_memory(cfg);
    const fs::path dir = fs::path(out_root) / (cfg.out.empty() ? cfg.name : cfg.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error::io("cannot create output directory: " + dir.string());
    res.log_path = (dir / "run.log").string();
    res.checkpoint_path = (dir / "checkpoint.txt").string();
    write_run_log(res.log_path, cfg, res, cfg.replica);
    save_checkpoint(res.checkpoint_path, res.final_params, cfg.seed);
    return res;
  }();
}

LoadedRunLog load_run_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error::io("cannot open log: " + path);
  LoadedRunLog log;
  std::string line;
  bool have_columns = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      log.header.push_back(line);
      if (line.rfind("# name=", 0) == 0) log.name = line.substr(7);
      continue;
    }
    if (!have_columns) {
      std::size_t pos = 0;
      while (pos <= line.size()) {
        std::size_t comma = line.find(',', pos);
        if (comma == std::string::npos) comma = line.size();
        log.columns.push_back(line.substr(pos, comma - pos));
        pos = comma + 1;
        if (comma == line.size()) break;
      }
      have_columns = true;
      continue;
    }
    std::vector<double> row;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      std::size_t comma = line.find(',', pos);
      if (comma == std::string::npos) comma = line.size();
      const std::string tok = line.substr(pos, comma - pos);
      char* end = nullptr;
      row.push_back(std::strtod(tok.c_str(), &end));
      if (end == tok.c_str()) throw Error::io("bad value in log " + path + ": '" + tok + "'");
      pos = comma + 1;
      if (comma == line.size()) break;
    }
    if (row.size() != log.columns.size()) {
      throw Error::io("ragged row in log " + path);
    }
    log.rows.push_back(std::move(row));
  }
  if (!have_columns) throw Error::io("log has no column header: " + path);
  if (log.name.empty()) log.name = fs::path(path).parent_path().filename().string();
  return log;
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

std::vector<double> window_best(const std::vector<RunRecord>& records, int windows,
                                bool use_accuracy) {
  if (windows < 1) throw Error::config("windows must be >= 1");
  std::vector<double> best(static_cast<std::size_t>(windows),
                           std::numeric_limits<double>::quiet_NaN());
  if (records.empty()) return best;
  const std::size_t n = records.size();
  const std::size_t per = std::max<std::size_t>(1, n / static_cast<std::size_t>(windows));
  for (int wi = 0; wi < windows; ++wi) {
    const std::size_t lo = std::min(n, static_cast<std::size_t>(wi) * per);
    const std::size_t hi = wi + 1 == windows ? n : std::min(n, lo + per);
    for (std::size_t j = lo; j < hi; ++j) {
      const double v = use_accuracy ? records[j].heldout_acc : records[j].train_loss;
      if (std::isnan(v)) continue;
      auto& b = best[static_cast<std::size_t>(wi)];
      if (std::isnan(b) || (use_accuracy ? v > b : v < b)) b = v;
    }
  }
  return best;
}

namespace {

struct Stats {
  double mean = 0, stddev = 0;
};

Stats mean_std(const std::vector<double>& v) {
  Stats s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double acc = 0;
    for (double x : v) acc += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(acc / static_cast<double>(v.size() - 1));
  }
  return s;
}

std::string sanitize_cell(std::string s) {
  for (auto& c : s) {
    if (c == ',' || c == '\n') c = ';';
  }
  return s;
}

}  // namespace

std::string sweep(const std::string& config_dir, int replicas, const std::string& out_root,
                  int windows) {
  if (replicas < 1) throw Error::config("replicas must be >= 1");
  if (windows < 1) throw Error::config("windows must be >= 1");
  std::vector<fs::path> files;
  {
    std::error_code ec;
    fs::directory_iterator it(config_dir, ec);
    if (ec) throw Error::io("cannot read config directory: " + config_dir);
    for (const auto& e : it) {
      if (e.path().extension() == ".cfg") files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error::config("no *.cfg files in " + config_dir);

  struct ReplicaOutcome {
    bool ok = false;
    std::string error;
    RunResult result;
  };
  std::vector<std::vector<std::future<ReplicaOutcome>>> futures(files.size());
  for (std::size_t ci = 0; ci < files.size(); ++ci) {
    const RunConfig base_cfg = RunConfig::parse_file(files[ci].string());
    for (int k = 0; k < replicas; ++k) {
      RunConfig cfg = base_cfg;
      cfg.seed = base_cfg.seed + static_cast<std::uint64_t>(k);
      cfg.replica = k;
      cfg.out = cfg.name + "/r" + std::to_string(k);
      futures[ci].push_back(std::async(std::launch::async, [cfg, out_root] {
        ReplicaOutcome o;
        try {
          o.result = run(cfg, out_root);
          o.ok = true;
        } catch (const std::exception& e) {
          o.error = e.what();
        }
        return o;
      }));
    }
  }

  std::error_code ec;
  fs::create_directories(out_root, ec);
  const std::string summary_path = (fs::path(out_root) / "summary.csv").string();
  std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(summary_path.c_str(), "w"), &std::fclose);
  if (!f) throw Error::io("cannot open summary for writing: " + summary_path);
  std::fprintf(f.get(), "config,replicas,status,final_train_loss_mean,final_train_loss_std,"
                        "final_heldout_loss_mean,final_heldout_loss_std,"
                        "final_heldout_acc_mean,final_heldout_acc_std");
  for (int wi = 1; wi <= windows; ++wi) {
    std::fprintf(f.get(), ",w%d_best_mean,w%d_best_std", wi, wi);
  }
  std::fprintf(f.get(), "\n");

  for (std::size_t ci = 0; ci < files.size(); ++ci) {
    std::vector<RunResult> ok_runs;
    std::vector<std::string> errors;
    for (auto& fut : futures[ci]) {
      ReplicaOutcome o = fut.get();
      if (o.ok) {
        ok_runs.push_back(std::move(o.result));
      } else {
        errors.push_back(o.error);
      }
    }
    const std::string stem = files[ci].stem().string();
    std::string status = errors.empty() ? "ok"
                                        : std::to_string(errors.size()) + " failed: " + errors[0];
    std::fprintf(f.get(), "%s,%d,%s", stem.c_str(), replicas, sanitize_cell(status).c_str());
    if (ok_runs.empty()) {
      for (int c = 0; c < 6 + 2 * windows; ++c) std::fprintf(f.get(), ",nan");
      std::fprintf(f.get(), "\n");
      continue;
    }
    std::vector<double> fl, hl, ha;
    std::vector<std::vector<double>> wb(static_cast<std::size_t>(windows));
    for (const auto& r : ok_runs) {
      const RunRecord& last = r.records.back();
      fl.push_back(last.train_loss);
      hl.push_back(last.heldout_loss);
      ha.push_back(last.heldout_acc);
      const bool use_acc = r.has_heldout && !std::isnan(last.heldout_acc);
      const auto best = window_best(r.records, windows, use_acc);
      for (int wi = 0; wi < windows; ++wi) {
        wb[static_cast<std::size_t>(wi)].push_back(best[static_cast<std::size_t>(wi)]);
      }
    }
    const Stats sfl = mean_std(fl), shl = mean_std(hl), sha = mean_std(ha);
    std::fprintf(f.get(), ",%s,%s,%s,%s,%s,%s", fmt(sfl.mean).c_str(), fmt(sfl.stddev).c_str(),
                 fmt(shl.mean).c_str(), fmt(shl.stddev).c_str(), fmt(sha.mean).c_str(),
                 fmt(sha.stddev).c_str());
    for (int wi = 0; wi < windows; ++wi) {
      const Stats s = mean_std(wb[static_cast<std::size_t>(wi)]);
      std::fprintf(f.get(), ",%s,%s", fmt(s.mean).c_str(), fmt(s.stddev).c_str());
    }
    std::fprintf(f.get(), "\n");
  }
  if (std::ferror(f.get())) throw Error::io("write failure: " + summary_path);
  return summary_path;
}

// ---------------------------------------------------------------------------
// Compare
// ---------------------------------------------------------------------------

std::string compare(const std::vector<std::string>& log_paths, const std::string& out_csv) {
  if (log_paths.empty()) throw Error::config("compare needs at least one log");
  std::vector<LoadedRunLog> logs;
  for (const auto& p : log_paths) logs.push_back(load_run_log(p));
  for (std::size_t i = 1; i < logs.size(); ++i) {
    if (logs[i].rows.size() != logs[0].rows.size()) {
      throw Error::config("eval cadence mismatch between logs (row counts differ)");
    }
    for (std::size_t r = 0; r < logs[i].rows.size(); ++r) {
      if (logs[i].rows[r][0] != logs[0].rows[r][0]) {
        throw Error::config("eval cadence mismatch between logs at row " + std::to_string(r));
      }
    }
  }
  std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(out_csv.c_str(), "w"), &std::fclose);
  if (!f) throw Error::io("cannot open output csv: " + out_csv);
  std::fprintf(f.get(), "step,run_id,metric,value\n");
  for (const auto& log : logs) {
    for (const auto& row : log.rows) {
      for (std::size_t c = 1; c < log.columns.size(); ++c) {
        std::fprintf(f.get(), "%ld,%s,%s,%s\n", static_cast<long>(row[0]), log.name.c_str(),
                     log.columns[c].c_str(), fmt(row[c]).c_str());
      }
    }
  }
  if (std::ferror(f.get())) throw Error::io("write failure: " + out_csv);
  return out_csv;
}

// ---------------------------------------------------------------------------
// Stability and bounds verbs
// ---------------------------------------------------------------------------

double resolve_beta(const RunConfig& cfg, const Problem& p, const Dataset& train) {
  if (cfg.beta_override > 0.0) return cfg.beta_override;
  if (const auto* lg = dynamic_cast<const LogisticProblem*>(&p)) {
    return lg->smoothness_bound(train);
  }
  if (const auto* q = dynamic_cast<const QuadraticProblem*>(&p)) {
    return 1.0 + q->weight_decay();
  }
  throw Error::config("no closed-form smoothness for this problem; set beta=");
}

namespace {

void write_trace_csv(const std::string& path, const std::vector<long>& steps,
                     const std::vector<double>& mean, const std::vector<double>& se) {
  std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.c_str(), "w"), &std::fclose);
  if (!f) throw Error::io("cannot open trace for writing: " + path);
  std::fprintf(f.get(), "t,divergence,stderr\n");
  for (std::size_t j = 0; j < steps.size(); ++j) {
    std::fprintf(f.get(), "%ld,%s,%s\n", steps[j], fmt(mean[j]).c_str(), fmt(se[j]).c_str());
  }
  if (std::ferror(f.get())) throw Error::io("write failure: " + path);
}

}  // namespace

std::string stability_run(const RunConfig& cfg, const std::string& out_root) {
  if (cfg.variant == OptVariant::compressed) {
    throw Error::config("stability runs support base and residual-wrapped optimizers only");
  }
  if (cfg.data.rfind("blobs", 0) != 0) {
    throw Error::config("stability runs need generator data for the replacement sample");
  }
  Workload w = build_workload(cfg);
  if (w.heldout.empty()) throw Error::config("stability runs need a held-out set");
  const BlobsSpec b = parse_blobs(cfg.data);
  const Dataset pool = generate_blobs(b.k, b.n, b.d, b.spread, derive_seed(b.seed, kPoolTag));

  const long spe = cfg.resolved_steps_per_epoch(w.train.size());
  TwinConfig tc;
  tc.wrapped = cfg.variant == OptVariant::wrapped;
  tc.base = cfg.base_config(spe);
  tc.scheme = cfg.scheme;
  tc.T = cfg.resolved_steps(w.train.size());
  tc.pairs = cfg.pairs;
  tc.seed = cfg.seed;
  tc.replace_index = cfg.replace_index;
  tc.record_every = cfg.eval_every;
  tc.loss_trace = cfg.bound == "convex" || cfg.bound == "nonconvex";
  const StabilityTrace trace = twin_training(*w.problem, w.train, pool, w.heldout, tc);

  const fs::path dir = fs::path(out_root) / (cfg.out.empty() ? cfg.name : cfg.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error::io("cannot create output directory: " + dir.string());

  write_trace_csv((dir / "trace_params.csv").string(), trace.steps, trace.div_mean,
                  trace.div_stderr);
  write_trace_csv((dir / "trace_ref.csv").string(), trace.steps, trace.ref_div_mean,
                  trace.ref_div_stderr);
  {
    const std::string path = (dir / "pairs.csv").string();
    std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.c_str(), "w"), &std::fclose);
    if (!f) throw Error::io("cannot open pairs csv: " + path);
    std::fprintf(f.get(), "pair,final_loss_divergence\n");
    for (std::size_t j = 0; j < trace.pair_final_loss_div.size(); ++j) {
      std::fprintf(f.get(), "%zu,%s\n", j, fmt(trace.pair_final_loss_div[j]).c_str());
    }
  }

  if (tc.loss_trace) {
    BoundInputs bi;
    bi.beta = resolve_beta(cfg, *w.problem, w.train);
    bi.L = trace.max_grad_norm;
    bi.N = static_cast<long>(w.train.size());
    bi.alpha = tc.wrapped && cfg.scheme.kind == SchemeKind::scale ? cfg.scheme.alpha : 1.0;
    const LrSchedule sched = cfg.schedule(spe);
    const std::string path = (dir / "bound.csv").string();
    std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.c_str(), "w"), &std::fclose);
    if (!f) throw Error::io("cannot open bound csv: " + path);
    std::fprintf(f.get(), "t,empirical,bound,slack\n");
    for (std::size_t j = 0; j < trace.steps.size(); ++j) {
      const long t = trace.steps[j];
      if (t == 0) continue;
      bi.T = t;
      bi.gammas.resize(static_cast<std::size_t>(t));
      for (long s = 0; s < t; ++s) bi.gammas[static_cast<std::size_t>(s)] = sched.at(s);
      double bound;
      if (cfg.bound == "convex") {
        bound = bound_stability_convex(bi);
      } else {
        const std::vector<double> ref(trace.ref_divergence_full.begin(),
                                      trace.ref_divergence_full.begin() + t);
        bound = bound_stability_nonconvex(bi, ref);
      }
      const double emp = trace.loss_div_mean[j];
      std::fprintf(f.get(), "%ld,%s,%s,%s\n", t, fmt(emp).c_str(), fmt(bound).c_str(),
                   fmt(bound - emp).c_str());
    }
  }
  return dir.string();
}

std::string bounds_run(const RunConfig& cfg, const std::string& out_root) {
  const std::string mode = cfg.bound.empty() ? "theorem4" : cfg.bound;
  if (mode != "theorem4" && mode != "corollary") {
    throw Error::config("bounds runs take bound=theorem4 or bound=corollary");
  }
  Workload w = build_workload(cfg);
  const long spe = cfg.resolved_steps_per_epoch(w.train.size());
  const LrSchedule sched = cfg.schedule(spe);
  const long T = cfg.resolved_steps(w.train.size());
  for (long m : sched.milestones) {
    if (m < T) throw Error::config("convergence bounds assume a constant learning rate");
  }
  if (mode == "corollary" &&
      !(cfg.variant == OptVariant::wrapped && cfg.scheme.kind == SchemeKind::scale)) {
    throw Error::config("bound=corollary needs a scale-scheme residual optimizer");
  }

  const RunResult res = run_in_memory(cfg);

  BoundInputs bi;
  bi.beta = resolve_beta(cfg, *w.problem, w.train);
  bi.sigma2 = 0.0;
  bi.gamma = cfg.lr;
  bi.N = static_cast<long>(w.train.size());
  bi.c1 = cfg.c1;
  bi.c2 = cfg.c2;
  bi.alpha = cfg.variant == OptVariant::wrapped && cfg.scheme.kind == SchemeKind::scale
                 ? cfg.scheme.alpha
                 : 1.0;

  const fs::path dir = fs::path(out_root) / (cfg.out.empty() ? cfg.name : cfg.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error::io("cannot create output directory: " + dir.string());
  const std::string path = (dir / "bounds.csv").string();
  std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.c_str(), "w"), &std::fclose);
  if (!f) throw Error::io("cannot open bounds csv: " + path);
  std::fprintf(f.get(), "t,empirical,bound,slack\n");
  for (std::size_t j = 0; j < res.records.size(); ++j) {
    const long t = res.records[j].step;
    if (t == 0) continue;
    bi.T = t;
    bi.sigma2 = res.tracks[j].sigma2_hat;
    bi.r0_gap = res.tracks[j].r0_gap;
    const double bound = mode == "theorem4"
                             ? bound_theorem4(bi, res.tracks[j].resid_sq_mean)
                             : bound_corollary_scale(bi);
    const double emp = res.tracks[j].min_grad_sq;
    std::fprintf(f.get(), "%ld,%s,%s,%s\n", t, fmt(emp).c_str(), fmt(bound).c_str(),
                 fmt(bound - emp).c_str());
  }
  if (std::ferror(f.get())) throw Error::io("write failure: " + path);
  return path;
}

}  // namespace resopt
