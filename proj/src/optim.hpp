#pragma once

#include <functional>
#include <string>
#include <vector>

#include "problems.hpp"
#include "schemes.hpp"
#include "vec.hpp"

namespace resopt {

// Piecewise-constant schedule: base rate multiplied by `factor` at each
// milestone step.
struct LrSchedule {
  double base = 0.1;
  double factor = 1.0;
  std::vector<long> milestones;  // steps, ascending

  double at(long t) const;
  // decay text "0.1@100,200"; empty text means constant
  static LrSchedule parse(double base, const std::string& decay);
};

enum class BaseKind { sgd, sgdm, asgd, adam, adagrad };

std::string to_string(BaseKind k);

struct BaseConfig {
  BaseKind kind = BaseKind::sgd;
  LrSchedule lr;
  double momentum = 0.9;    // sgdm
  double beta1 = 0.9;       // adam
  double beta2 = 0.999;     // adam
  double adam_eps = 1e-8;   // adam
  double adagrad_eps = 1e-10;
};

// A base optimizer is a map (state, point, gradient) -> next point. The
// residual wrapper feeds it reference-trajectory points; used directly it is
// the plain optimizer.
class BaseOptimizer {
 public:
  BaseOptimizer(BaseConfig cfg, std::size_t dim);

  // Returns the next point and advances internal state (momentum, moments,
  // accumulator, running average, step counter).
  Vec step(const Vec& x, const Vec& g);

  BaseKind kind() const { return cfg_.kind; }
  long steps_taken() const { return t_; }
  double last_lr() const { return last_lr_; }
  // v_{t+1} after the last step; for plain sgd this is the last gradient
  const Vec& momentum_buffer() const { return v_; }

  // ASGD averaging. Until triggered the average tracks the iterate.
  void start_averaging();
  bool averaging() const { return averaging_; }
  const Vec& average() const { return avg_; }

 private:
  BaseConfig cfg_;
  long t_ = 0;
  double last_lr_ = 0.0;
  Vec v_;    // momentum buffer / last gradient
  Vec m1_;   // adam first moment
  Vec m2_;   // adam second moment
  Vec acc_;  // adagrad accumulator
  Vec avg_;  // asgd average
  long avg_n_ = 0;
  bool averaging_ = false;
};

// Per-step view of the residual wrapper internals, for invariant checks and
// metric logging.
struct WrapperObservation {
  long t = 0;
  double lr = 0.0;
  const Vec& r_prev;
  const Vec& delta;  // x_t - x_{t+1/2}
  const Vec& r_hat;
  const Vec& x_next;
  const Vec& x_ref_next;
  const Vec& r_next;
  const Vec& momentum;  // v_{t+1}
};

// Residual wrapper around any base optimizer. Gradients are evaluated on the
// stored reference point, which is updated with the base step's output
// directly rather than recomputed from x - r, so the reference trajectory
// matches the unwrapped optimizer bit for bit.
class ResidualWrapper {
 public:
  ResidualWrapper(BaseConfig base, SchemeSpec scheme, Vec x0);

  // One full step: gradient at the reference point, base step, residual
  // scheme, re-descent, residual update.
  void step(const Problem& p, const Dataset& S, const std::vector<std::size_t>& batch);

  // The same update when the caller already evaluated g at reference().
  void apply_gradient(const Vec& g);

  const Vec& params() const { return x_; }
  const Vec& reference() const { return x_ref_; }
  const Vec& residual() const { return r_; }
  const SchemeSpec& scheme() const { return scheme_; }
  BaseOptimizer& base() { return base_; }
  const BaseOptimizer& base() const { return base_; }

  // Re-anchors the reference at the wrapped point and clears residuals.
  // Ablation hook; never called by default.
  void reset_residual();

  std::function<void(const WrapperObservation&)> observer;

 private:
  SchemeSpec scheme_;
  BaseOptimizer base_;
  Vec x_;
  Vec x_ref_;
  Vec r_;
  long t_ = 0;
};

struct CompressedConfig {
  LrSchedule lr;
  double momentum = 0.0;  // 0 gives the plain (non-momentum) variant
  SchemeSpec compressor = SchemeSpec{SchemeKind::scaled_sign, 1.0, 1.0};
  bool error_feedback = false;
};

// SignSGD(m) and EF-SignSGD(m): the update is compressed, optionally with
// accumulated-error feedback. Unlike the residual wrapper these do not track
// a reference trajectory.
class CompressedOptimizer {
 public:
  CompressedOptimizer(CompressedConfig cfg, std::size_t dim);

  Vec step(const Vec& x, const Vec& g);

  double last_lr() const { return last_lr_; }
  const Vec& error() const { return e_; }
  const Vec& momentum_buffer() const { return v_; }
  const Vec& last_proposed() const { return last_p_; }
  const Vec& last_compressed() const { return last_c_; }

 private:
  CompressedConfig cfg_;
  long t_ = 0;
  double last_lr_ = 0.0;
  Vec v_;
  Vec e_;
  Vec last_p_;
  Vec last_c_;
};

// Non-monotonic trigger: true when the latest metric is not better (lower)
// than the best of the `window` entries preceding it. The caller latches the
// first true.
bool asgd_switch(int window, const std::vector<double>& metric_history);

}  // namespace resopt
