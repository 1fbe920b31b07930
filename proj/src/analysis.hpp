#pragma once

#include <cstdint>
#include <vector>

#include "optim.hpp"
#include "problems.hpp"
#include "vec.hpp"

namespace resopt {

// Inputs to the closed-form bound evaluators. `gamma` is the constant rate
// used by the convergence bounds; `gammas` the per-step schedule used by the
// stability bounds.
struct BoundInputs {
  double beta = 1.0;    // smoothness
  double sigma2 = 0.0;  // second-moment bound
  double L = 1.0;       // gradient-norm (Lipschitz) bound
  double gamma = 0.0;
  std::vector<double> gammas;
  long T = 0;
  long N = 0;
  double alpha = 1.0;  // scaling factor of the residual scheme
  double c1 = 1.0;
  double c2 = 1.0;
  double r0_gap = 0.0;  // initial empirical risk minus its minimum
};

// Convergence bound on the minimum squared empirical-gradient norm for the
// residual-wrapped method, given the mean squared residual norm along the
// trajectory.
double bound_theorem4(const BoundInputs& b, double residual_sq_mean);

// Same bound specialized to the scaling scheme, with the residual term in
// closed form.
double bound_corollary_scale(const BoundInputs& b);

// Uniform-stability bound in convex settings for the scaling scheme.
double bound_stability_convex(const BoundInputs& b);

// Uniform-stability bound in non-convex settings; takes the measured
// per-step expected reference-trajectory divergence.
double bound_stability_nonconvex(const BoundInputs& b,
                                 const std::vector<double>& ref_divergence);

// Cited plain-SGD counterparts, used for degeneration checks and reports.
double sgd_convergence_bound(const BoundInputs& b);
double sgd_stability_convex(const BoundInputs& b);
double sgd_stability_nonconvex(const BoundInputs& b,
                               const std::vector<double>& ref_divergence);

// Empirical risk on the training set minus the held-out estimate of the
// population risk.
double generalization_gap(const Problem& p, const Vec& x, const Dataset& train,
                          const Dataset& heldout);

// Normalized L1 distance between the wrapped iterate and its reference point.
double proximity(const Vec& x_wrapped, const Vec& x_ref);

// ---------------------------------------------------------------------------
// Twin training: seed-matched runs on datasets differing in one sample.
// ---------------------------------------------------------------------------

struct TwinConfig {
  bool wrapped = false;  // residual-wrapped vs plain base optimizer
  BaseConfig base;
  SchemeSpec scheme;
  long T = 1000;
  int pairs = 10;
  std::uint64_t seed = 1;
  // sample index to replace; -1 draws one index per pair
  long replace_index = -1;
  // record divergence every this many steps (index 0 and the final state are
  // always recorded)
  long record_every = 1;
  // also evaluate held-out loss divergence at recorded steps (costs a full
  // held-out pass per record per pair)
  bool loss_trace = false;
};

struct StabilityTrace {
  // recorded step indices; divergence at index j is measured before step
  // steps[j], and the last entry (== T) is the final state
  std::vector<long> steps;
  std::vector<double> div_mean, div_stderr;          // ||x_t - x'_t||_2
  std::vector<double> ref_div_mean, ref_div_stderr;  // reference-point divergence
  // mean over pairs of max-over-heldout |f(x,z) - f(x',z)| at recorded steps
  // (only when loss_trace is set; final entry always present)
  std::vector<double> loss_div_mean, loss_div_stderr;
  // per pair: max over heldout |f(x_T,z) - f(x'_T,z)|
  std::vector<double> pair_final_loss_div;
  // per-step reference divergence at every t in [0,T), pairs-averaged;
  // feeds the non-convex stability bound
  std::vector<double> ref_divergence_full;
  double max_grad_norm = 0.0;  // empirical L over all runs
};

// Trains seed-matched pairs on S and a copy with sample i replaced by
// replacement_pool[i]. Runs use single-sample with-replacement steps and a
// shared index sequence per pair. Pairs execute in parallel; reductions are
// in fixed pair order.
StabilityTrace twin_training(const Problem& p, const Dataset& S,
                             const Dataset& replacement_pool, const Dataset& heldout,
                             const TwinConfig& cfg);

}  // namespace resopt
