#include "problems.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <sstream>

#include "errors.hpp"

namespace resopt {

void Problem::check_dim(const Vec& x) const {
  if (x.size() != dim()) {
    throw Error::dimension("parameter vector has length " + std::to_string(x.size()) +
                           ", problem expects " + std::to_string(dim()));
  }
}

Vec Problem::init_params(RngStream& rng) const {
  Vec x(dim());
  for (auto& v : x) v = 0.1 * rng.normal();
  return x;
}

double Problem::empirical_risk(const Vec& x, const Dataset& S) const {
  if (S.empty()) throw Error::config("empirical risk over an empty dataset");
  double sum = 0.0;
  for (const auto& z : S.samples) sum += loss(x, z);
  return sum / static_cast<double>(S.size());
}

Vec Problem::risk_gradient(const Vec& x, const Dataset& S) const {
  if (S.empty()) throw Error::config("risk gradient over an empty dataset");
  Vec g(dim(), 0.0);
  for (const auto& z : S.samples) {
    const Vec gi = grad(x, z);
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += gi[j];
  }
  const double inv = 1.0 / static_cast<double>(S.size());
  for (auto& v : g) v *= inv;
  return g;
}

Vec Problem::batch_gradient(const Vec& x, const Dataset& S,
                            const std::vector<std::size_t>& idx) const {
  if (idx.empty()) throw Error::config("batch gradient over an empty batch");
  Vec g(dim(), 0.0);
  for (std::size_t i : idx) {
    const Vec gi = grad(x, S[i]);
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += gi[j];
  }
  const double inv = 1.0 / static_cast<double>(idx.size());
  for (auto& v : g) v *= inv;
  return g;
}

double Problem::accuracy(const Vec& x, const Dataset& S) const {
  if (S.empty()) throw Error::config("accuracy over an empty dataset");
  std::size_t hits = 0;
  for (const auto& z : S.samples) {
    if (predict(x, z) == z.label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(S.size());
}

// ---------------------------------------------------------------------------
// Quadratic
// ---------------------------------------------------------------------------

double QuadraticProblem::loss(const Vec& x, const Sample& z) const {
  check_dim(x);
  if (z.features.size() != d_) throw Error::dimension("sample dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < d_; ++i) {
    const double dif = x[i] - z.features[i];
    s += dif * dif;
  }
  double l = 0.5 * s;
  if (wd_ > 0.0) l += 0.5 * wd_ * norm2_sq(x);
  return l;
}

Vec QuadraticProblem::grad(const Vec& x, const Sample& z) const {
  check_dim(x);
  if (z.features.size() != d_) throw Error::dimension("sample dimension mismatch");
  Vec g(d_);
  for (std::size_t i = 0; i < d_; ++i) g[i] = (x[i] - z.features[i]) + wd_ * x[i];
  return g;
}

std::string QuadraticProblem::describe() const {
  return "quadratic d=" + std::to_string(d_) + " wd=" + std::to_string(wd_);
}

// ---------------------------------------------------------------------------
// Logistic regression
// ---------------------------------------------------------------------------

LogisticProblem::LogisticProblem(std::size_t n_features, int n_classes, double weight_decay,
                                 bool bias)
    : f_(n_features), k_(n_classes), wd_(weight_decay), bias_(bias) {
  if (n_classes < 2) throw Error::config("logistic regression needs at least 2 classes");
}

Vec LogisticProblem::logits(const Vec& x, const Sample& z) const {
  const std::size_t row = f_ + (bias_ ? 1 : 0);
  Vec l(static_cast<std::size_t>(k_));
  for (int c = 0; c < k_; ++c) {
    const double* w = x.data() + static_cast<std::size_t>(c) * row;
    double s = 0.0;
    for (std::size_t i = 0; i < f_; ++i) s += w[i] * z.features[i];
    if (bias_) s += w[f_];
    l[static_cast<std::size_t>(c)] = s;
  }
  return l;
}

namespace {

// softmax probabilities with the usual max shift
Vec softmax(const Vec& logits) {
  Vec p(logits.size());
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

double cross_entropy(const Vec& probs, int label) {
  return -std::log(std::max(probs[static_cast<std::size_t>(label)], 1e-300));
}

void check_label(int label, int k) {
  if (label < 0 || label >= k) {
    throw Error::config("label " + std::to_string(label) + " outside [0," +
                        std::to_string(k) + ")");
  }
}

}  // namespace

double LogisticProblem::loss(const Vec& x, const Sample& z) const {
  check_dim(x);
  if (z.features.size() != f_) throw Error::dimension("sample dimension mismatch");
  check_label(z.label, k_);
  double l = cross_entropy(softmax(logits(x, z)), z.label);
  if (wd_ > 0.0) l += 0.5 * wd_ * norm2_sq(x);
  return l;
}

Vec LogisticProblem::grad(const Vec& x, const Sample& z) const {
  check_dim(x);
  if (z.features.size() != f_) throw Error::dimension("sample dimension mismatch");
  check_label(z.label, k_);
  const Vec p = softmax(logits(x, z));
  const std::size_t row = f_ + (bias_ ? 1 : 0);
  Vec g(dim());
  for (int c = 0; c < k_; ++c) {
    const double delta = p[static_cast<std::size_t>(c)] - (c == z.label ? 1.0 : 0.0);
    double* gr = g.data() + static_cast<std::size_t>(c) * row;
    for (std::size_t i = 0; i < f_; ++i) gr[i] = delta * z.features[i];
    if (bias_) gr[f_] = delta;
  }
  if (wd_ > 0.0) {
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += wd_ * x[i];
  }
  return g;
}

int LogisticProblem::predict(const Vec& x, const Sample& z) const {
  const Vec l = logits(x, z);
  return static_cast<int>(std::max_element(l.begin(), l.end()) - l.begin());
}

std::string LogisticProblem::describe() const {
  return "logistic f=" + std::to_string(f_) + " k=" + std::to_string(k_) +
         " wd=" + std::to_string(wd_) + (bias_ ? "" : " nobias");
}

double LogisticProblem::smoothness_bound(const Dataset& S) const {
  double mx = 0.0;
  for (const auto& z : S.samples) {
    double n = norm2_sq(z.features);
    if (bias_) n += 1.0;
    mx = std::max(mx, n);
  }
  return 0.25 * mx + wd_;
}

// ---------------------------------------------------------------------------
// MLP
// ---------------------------------------------------------------------------

MlpProblem::MlpProblem(std::size_t n_features, std::vector<int> hidden, int n_classes,
                       Activation act, double weight_decay, bool bias)
    : act_(act), wd_(weight_decay), bias_(bias) {
  if (n_classes < 2) throw Error::config("mlp needs at least 2 classes");
  widths_.push_back(static_cast<int>(n_features));
  for (int h : hidden) {
    if (h < 1) throw Error::config("hidden width must be >= 1");
    widths_.push_back(h);
  }
  widths_.push_back(n_classes);
  dim_ = 0;
  for (std::size_t l = 1; l < widths_.size(); ++l) {
    dim_ += static_cast<std::size_t>(widths_[l]) * widths_[l - 1];
    if (bias_) dim_ += static_cast<std::size_t>(widths_[l]);
  }
}

MlpProblem::Forward MlpProblem::forward(const Vec& x, const Sample& z) const {
  Forward fw;
  fw.activations.reserve(widths_.size());
  fw.activations.push_back(Vec(z.features.begin(), z.features.end()));
  const double* w = x.data();
  for (std::size_t l = 1; l < widths_.size(); ++l) {
    const std::size_t in = static_cast<std::size_t>(widths_[l - 1]);
    const std::size_t out = static_cast<std::size_t>(widths_[l]);
    const Vec& a = fw.activations.back();
    Vec next(out);
    for (std::size_t j = 0; j < out; ++j) {
      double s = 0.0;
      const double* row = w + j * in;
      for (std::size_t i = 0; i < in; ++i) s += row[i] * a[i];
      next[j] = s;
    }
    w += out * in;
    if (bias_) {
      for (std::size_t j = 0; j < out; ++j) next[j] += w[j];
      w += out;
    }
    const bool last = l + 1 == widths_.size();
    if (!last) {
      for (auto& v : next) v = act_ == Activation::tanh ? std::tanh(v) : std::max(0.0, v);
    }
    fw.activations.push_back(std::move(next));
  }
  fw.probs = softmax(fw.activations.back());
  fw.data_loss = cross_entropy(fw.probs, z.label);
  return fw;
}

double MlpProblem::loss(const Vec& x, const Sample& z) const {
  check_dim(x);
  if (z.features.size() != static_cast<std::size_t>(widths_[0])) {
    throw Error::dimension("sample dimension mismatch");
  }
  check_label(z.label, widths_.back());
  double l = forward(x, z).data_loss;
  if (wd_ > 0.0) l += 0.5 * wd_ * norm2_sq(x);
  return l;
}

Vec MlpProblem::grad(const Vec& x, const Sample& z) const {
  check_dim(x);
  if (z.features.size() != static_cast<std::size_t>(widths_[0])) {
    throw Error::dimension("sample dimension mismatch");
  }
  check_label(z.label, widths_.back());
  const Forward fw = forward(x, z);

  Vec g(dim_, 0.0);
  const std::size_t layers = widths_.size() - 1;

  // per-layer parameter offsets
  std::vector<std::size_t> offset(layers);
  std::size_t off = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    offset[l] = off;
    off += static_cast<std::size_t>(widths_[l + 1]) * widths_[l];
    if (bias_) off += static_cast<std::size_t>(widths_[l + 1]);
  }

  // output delta: softmax cross-entropy
  Vec delta = fw.probs;
  delta[static_cast<std::size_t>(z.label)] -= 1.0;

  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t in = static_cast<std::size_t>(widths_[l]);
    const std::size_t out = static_cast<std::size_t>(widths_[l + 1]);
    const Vec& a = fw.activations[l];
    double* gw = g.data() + offset[l];
    for (std::size_t j = 0; j < out; ++j) {
      for (std::size_t i = 0; i < in; ++i) gw[j * in + i] = delta[j] * a[i];
    }
    if (bias_) {
      double* gb = gw + out * in;
      for (std::size_t j = 0; j < out; ++j) gb[j] = delta[j];
    }
    if (l == 0) break;
    // propagate through the linear map and the previous activation
    const double* wl = x.data() + offset[l];
    Vec prev(in, 0.0);
    for (std::size_t j = 0; j < out; ++j) {
      for (std::size_t i = 0; i < in; ++i) prev[i] += wl[j * in + i] * delta[j];
    }
    const Vec& act = fw.activations[l];
    for (std::size_t i = 0; i < in; ++i) {
      if (act_ == Activation::tanh) {
        prev[i] *= 1.0 - act[i] * act[i];
      } else {
        prev[i] *= act[i] > 0.0 ? 1.0 : 0.0;
      }
    }
    delta = std::move(prev);
  }

  if (wd_ > 0.0) {
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += wd_ * x[i];
  }
  return g;
}

int MlpProblem::predict(const Vec& x, const Sample& z) const {
  const Vec& l = forward(x, z).activations.back();
  return static_cast<int>(std::max_element(l.begin(), l.end()) - l.begin());
}

std::string MlpProblem::describe() const {
  std::string s = "mlp widths=";
  for (std::size_t i = 0; i < widths_.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(widths_[i]);
  }
  s += act_ == Activation::tanh ? " tanh" : " relu";
  s += " wd=" + std::to_string(wd_);
  if (!bias_) s += " nobias";
  return s;
}

Vec MlpProblem::init_params(RngStream& rng) const {
  Vec x(dim_, 0.0);
  double* w = x.data();
  for (std::size_t l = 1; l < widths_.size(); ++l) {
    const std::size_t in = static_cast<std::size_t>(widths_[l - 1]);
    const std::size_t out = static_cast<std::size_t>(widths_[l]);
    const double s = 1.0 / std::sqrt(static_cast<double>(in));
    for (std::size_t i = 0; i < out * in; ++i) w[i] = s * (2.0 * rng.uniform01() - 1.0);
    w += out * in;
    if (bias_) w += out;  // biases start at zero
  }
  return x;
}

// ---------------------------------------------------------------------------
// Oracle, generators, CSV
// ---------------------------------------------------------------------------

Vec fd_gradient(const Problem& p, const Vec& x, const Sample& z, double h) {
  if (!(h > 0.0)) throw Error::config("finite-difference step must be positive");
  Vec g(x.size());
  Vec xt = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    xt[i] = xi + h;
    const double fp = p.loss(xt, z);
    xt[i] = xi - h;
    const double fm = p.loss(xt, z);
    xt[i] = xi;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

Dataset generate_blobs(int classes, int n_per_class, int d, double spread,
                       std::uint64_t seed) {
  if (classes < 2) throw Error::config("blobs need at least 2 classes");
  if (n_per_class < 1) throw Error::config("blobs need at least 1 sample per class");
  if (d < classes) {
    throw Error::config("blobs need feature dimension >= class count for distinct centers");
  }
  RngStream rng(seed);
  Dataset out;
  out.samples.reserve(static_cast<std::size_t>(classes) * n_per_class);
  for (int c = 0; c < classes; ++c) {
    for (int j = 0; j < n_per_class; ++j) {
      Sample z;
      z.label = c;
      z.features.resize(static_cast<std::size_t>(d));
      for (int i = 0; i < d; ++i) {
        const double center = i == c ? kBlobCenterScale : 0.0;
        z.features[static_cast<std::size_t>(i)] = center + spread * rng.normal();
      }
      out.samples.push_back(std::move(z));
    }
  }
  return out;
}

void clip_feature_norm(Dataset& S, double max_norm) {
  if (!(max_norm > 0.0)) throw Error::config("clip norm must be positive");
  for (auto& z : S.samples) {
    const double n = norm2(Vec(z.features.begin(), z.features.end()));
    if (n > max_norm) {
      const double f = max_norm / n;
      for (auto& v : z.features) v *= f;
    }
  }
}

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error::io("cannot open csv: " + path);
  Dataset out;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    Sample z;
    std::size_t col = 0;
    std::size_t pos = 0;
    std::vector<double> values;
    while (pos <= line.size()) {
      ++col;
      std::size_t comma = line.find(',', pos);
      if (comma == std::string::npos) comma = line.size();
      const std::string tok = line.substr(pos, comma - pos);
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0') {
        throw Error::config("csv parse error at row " + std::to_string(row) + ", col " +
                            std::to_string(col) + ": '" + tok + "'");
      }
      values.push_back(v);
      pos = comma + 1;
      if (comma == line.size()) break;
    }
    if (values.size() < 2) {
      throw Error::config("csv row " + std::to_string(row) +
                          " needs at least one feature and a label");
    }
    const double lab = values.back();
    if (lab != std::floor(lab)) {
      throw Error::config("csv row " + std::to_string(row) + ": label '" +
                          std::to_string(lab) + "' is not an integer");
    }
    z.label = static_cast<int>(lab);
    values.pop_back();
    z.features = std::move(values);
    if (!out.samples.empty() && z.features.size() != out.feature_dim()) {
      throw Error::config("csv row " + std::to_string(row) + ": inconsistent width (" +
                          std::to_string(z.features.size() + 1) + " columns)");
    }
    out.samples.push_back(std::move(z));
  }
  if (out.empty()) throw Error::config("csv has no data rows: " + path);
  return out;
}

void save_csv(const std::string& path, const Dataset& S) {
  std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.c_str(), "w"), &std::fclose);
  if (!f) throw Error::io("cannot open csv for writing: " + path);
  for (const auto& z : S.samples) {
    for (double v : z.features) std::fprintf(f.get(), "%.17g,", v);
    std::fprintf(f.get(), "%d\n", z.label);
  }
  if (std::ferror(f.get())) throw Error::io("write failure: " + path);
}

}  // namespace resopt
