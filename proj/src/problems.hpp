#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rng.hpp"
#include "vec.hpp"

namespace resopt {

struct Sample {
  std::vector<double> features;
  int label = 0;
};

struct Dataset {
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  std::size_t feature_dim() const { return samples.empty() ? 0 : samples[0].features.size(); }
  const Sample& operator[](std::size_t i) const { return samples[i]; }
  Sample& operator[](std::size_t i) { return samples[i]; }
};

enum class Activation { tanh, relu };

// A differentiable ERM task: per-sample loss and analytic gradient over a
// flat parameter vector. Read-only after construction.
class Problem {
 public:
  virtual ~Problem() = default;

  virtual std::size_t dim() const = 0;
  virtual double loss(const Vec& x, const Sample& z) const = 0;
  virtual Vec grad(const Vec& x, const Sample& z) const = 0;
  virtual std::string describe() const = 0;
  virtual Vec init_params(RngStream& rng) const;

  double empirical_risk(const Vec& x, const Dataset& S) const;
  // Exact full-pass gradient of the empirical risk.
  Vec risk_gradient(const Vec& x, const Dataset& S) const;
  // Mean gradient over the given sample indices.
  Vec batch_gradient(const Vec& x, const Dataset& S, const std::vector<std::size_t>& idx) const;

  // argmax class for classifiers; -1 when the problem has no notion of class
  virtual int predict(const Vec& x, const Sample& z) const { (void)x; (void)z; return -1; }
  double accuracy(const Vec& x, const Dataset& S) const;

 protected:
  void check_dim(const Vec& x) const;
};

// f(x,z) = 1/2 ||x - z||^2 + wd/2 ||x||^2
class QuadraticProblem : public Problem {
 public:
  explicit QuadraticProblem(std::size_t d, double weight_decay = 0.0)
      : d_(d), wd_(weight_decay) {}
  std::size_t dim() const override { return d_; }
  double loss(const Vec& x, const Sample& z) const override;
  Vec grad(const Vec& x, const Sample& z) const override;
  std::string describe() const override;
  double weight_decay() const { return wd_; }

 private:
  std::size_t d_;
  double wd_;
};

// Softmax cross-entropy over linear logits, plus wd/2 ||x||^2.
// Parameters: per class a weight row of length n_features, then the bias
// (when enabled), class-major.
class LogisticProblem : public Problem {
 public:
  LogisticProblem(std::size_t n_features, int n_classes, double weight_decay = 0.0,
                  bool bias = true);
  std::size_t dim() const override { return static_cast<std::size_t>(k_) * (f_ + (bias_ ? 1 : 0)); }
  double loss(const Vec& x, const Sample& z) const override;
  Vec grad(const Vec& x, const Sample& z) const override;
  int predict(const Vec& x, const Sample& z) const override;
  std::string describe() const override;

  // Closed-form smoothness estimate for the bound evaluators:
  // 0.25 * max_i ||augmented features_i||^2 + weight_decay.
  double smoothness_bound(const Dataset& S) const;

 private:
  Vec logits(const Vec& x, const Sample& z) const;
  std::size_t f_;
  int k_;
  double wd_;
  bool bias_;
};

// Fully connected net with softmax cross-entropy output. Hidden activations
// are tanh by default; relu is available but not smooth.
class MlpProblem : public Problem {
 public:
  MlpProblem(std::size_t n_features, std::vector<int> hidden, int n_classes,
             Activation act = Activation::tanh, double weight_decay = 0.0, bool bias = true);
  std::size_t dim() const override { return dim_; }
  double loss(const Vec& x, const Sample& z) const override;
  Vec grad(const Vec& x, const Sample& z) const override;
  int predict(const Vec& x, const Sample& z) const override;
  std::string describe() const override;
  Vec init_params(RngStream& rng) const override;

 private:
  struct Forward {
    std::vector<Vec> activations;  // per layer, post-activation (input first)
    Vec probs;
    double data_loss = 0;
  };
  Forward forward(const Vec& x, const Sample& z) const;

  std::vector<int> widths_;  // input, hidden..., classes
  Activation act_;
  double wd_;
  bool bias_;
  std::size_t dim_;
};

// Central finite differences (f(x+h e_i) - f(x-h e_i)) / 2h. Verification
// oracle; uses only the loss.
Vec fd_gradient(const Problem& p, const Vec& x, const Sample& z, double h);

// Gaussian clusters around k centers at kBlobCenterScale * e_c. Sample order
// is class-major and fully determined by the seed.
constexpr double kBlobCenterScale = 5.0;
Dataset generate_blobs(int classes, int n_per_class, int d, double spread, std::uint64_t seed);

// Rescales any sample with feature norm above max_norm onto that radius.
void clip_feature_norm(Dataset& S, double max_norm);

// CSV: comma-separated decimal floats, final column integer label, no header.
Dataset load_csv(const std::string& path);
void save_csv(const std::string& path, const Dataset& S);

}  // namespace resopt
