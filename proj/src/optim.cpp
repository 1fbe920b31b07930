#include "optim.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

#include "errors.hpp"

namespace resopt {

double LrSchedule::at(long t) const {
  double lr = base;
  for (long m : milestones) {
    if (t >= m) lr *= factor;
  }
  return lr;
}

LrSchedule LrSchedule::parse(double base, const std::string& decay) {
  LrSchedule s;
  s.base = base;
  if (!(base > 0.0)) throw Error::config("learning rate must be positive");
  if (decay.empty()) return s;
  const auto at = decay.find('@');
  if (at == std::string::npos) {
    throw Error::config("decay must look like <factor>@<step,step,...>: " + decay);
  }
  try {
    s.factor = std::stod(decay.substr(0, at));
  } catch (const std::exception&) {
    throw Error::config("bad decay factor in: " + decay);
  }
  if (!(s.factor > 0.0)) throw Error::config("decay factor must be positive");
  std::string rest = decay.substr(at + 1);
  std::size_t pos = 0;
  while (pos < rest.size()) {
    std::size_t comma = rest.find(',', pos);
    if (comma == std::string::npos) comma = rest.size();
    const std::string tok = rest.substr(pos, comma - pos);
    try {
      s.milestones.push_back(std::stol(tok));
    } catch (const std::exception&) {
      throw Error::config("bad decay milestone: " + tok);
    }
    pos = comma + 1;
  }
  if (s.milestones.empty()) throw Error::config("decay needs at least one milestone");
  if (!std::is_sorted(s.milestones.begin(), s.milestones.end())) {
    throw Error::config("decay milestones must be ascending");
  }
  return s;
}

std::string to_string(BaseKind k) {
  switch (k) {
    case BaseKind::sgd: return "sgd";
    case BaseKind::sgdm: return "sgdm";
    case BaseKind::asgd: return "asgd";
    case BaseKind::adam: return "adam";
    case BaseKind::adagrad: return "adagrad";
  }
  return "?";
}

BaseOptimizer::BaseOptimizer(BaseConfig cfg, std::size_t dim) : cfg_(std::move(cfg)) {
  v_.assign(dim, 0.0);
  if (cfg_.kind == BaseKind::adam) {
    m1_.assign(dim, 0.0);
    m2_.assign(dim, 0.0);
  }
  if (cfg_.kind == BaseKind::adagrad) acc_.assign(dim, 0.0);
  if (cfg_.kind == BaseKind::asgd) avg_.assign(dim, 0.0);
}

Vec BaseOptimizer::step(const Vec& x, const Vec& g) {
  if (x.size() != v_.size() || g.size() != v_.size()) {
    throw Error::dimension("optimizer state, point and gradient lengths differ");
  }
  ensure_finite(g, "gradient");
  const double lr = cfg_.lr.at(t_);
  last_lr_ = lr;
  Vec next(x.size());
  switch (cfg_.kind) {
    case BaseKind::sgd:
    case BaseKind::asgd:
      v_ = g;
      for (std::size_t i = 0; i < x.size(); ++i) next[i] = x[i] - lr * g[i];
      break;
    case BaseKind::sgdm:
      for (std::size_t i = 0; i < x.size(); ++i) {
        v_[i] = cfg_.momentum * v_[i] + g[i];
        next[i] = x[i] - lr * v_[i];
      }
      break;
    case BaseKind::adam: {
      const double b1 = cfg_.beta1, b2 = cfg_.beta2;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_ + 1));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_ + 1));
      for (std::size_t i = 0; i < x.size(); ++i) {
        m1_[i] = b1 * m1_[i] + (1.0 - b1) * g[i];
        m2_[i] = b2 * m2_[i] + (1.0 - b2) * g[i] * g[i];
        const double mh = m1_[i] / c1;
        const double vh = m2_[i] / c2;
        next[i] = x[i] - lr * mh / (std::sqrt(vh) + cfg_.adam_eps);
      }
      v_ = g;
      break;
    }
    case BaseKind::adagrad:
      for (std::size_t i = 0; i < x.size(); ++i) {
        acc_[i] += g[i] * g[i];
        next[i] = x[i] - lr * g[i] / (std::sqrt(acc_[i]) + cfg_.adagrad_eps);
      }
      v_ = g;
      break;
  }
  ++t_;
  if (cfg_.kind == BaseKind::asgd) {
    if (averaging_) {
      ++avg_n_;
      for (std::size_t i = 0; i < next.size(); ++i) {
        avg_[i] += (next[i] - avg_[i]) / static_cast<double>(avg_n_);
      }
    } else {
      avg_ = next;
    }
  }
  return next;
}

void BaseOptimizer::start_averaging() {
  if (cfg_.kind != BaseKind::asgd) {
    throw Error::config("averaging is only available for asgd");
  }
  if (!averaging_) {
    averaging_ = true;
    avg_n_ = 1;  // current average seeds the window
  }
}

ResidualWrapper::ResidualWrapper(BaseConfig base, SchemeSpec scheme, Vec x0)
    : scheme_(scheme), base_(std::move(base), x0.size()), x_(x0), x_ref_(x0),
      r_(x0.size(), 0.0) {}

void ResidualWrapper::step(const Problem& p, const Dataset& S,
                           const std::vector<std::size_t>& batch) {
  apply_gradient(p.batch_gradient(x_ref_, S, batch));
}

void ResidualWrapper::apply_gradient(const Vec& g) {
  const Vec x_ref_next = base_.step(x_ref_, g);
  const Vec delta = sub(x_, x_ref_next);
  const Vec r_hat = scheme_apply(scheme_, delta);
  Vec x_next;
  Vec r_next;
  if (scheme_.is_identity()) {
    // whole delta applied, zero residual; land exactly on the reference
    x_next = x_ref_next;
    r_next.assign(x_.size(), 0.0);
  } else {
    x_next = sub(x_, r_hat);
    r_next = residual_complement(delta, r_hat);
  }
  if (observer) {
    observer(WrapperObservation{t_, base_.last_lr(), r_, delta, r_hat, x_next, x_ref_next,
                                r_next, base_.momentum_buffer()});
  }
  x_ = std::move(x_next);
  r_ = std::move(r_next);
  x_ref_ = x_ref_next;
  ++t_;
  assert([&] {
    const double tol = 1e-12 * (1.0 + norm_inf(x_ref_));
    for (std::size_t i = 0; i < x_.size(); ++i) {
      if (std::fabs((x_[i] - r_[i]) - x_ref_[i]) > tol) return false;
    }
    return true;
  }());
}

void ResidualWrapper::reset_residual() {
  r_.assign(x_.size(), 0.0);
  x_ref_ = x_;
}

CompressedOptimizer::CompressedOptimizer(CompressedConfig cfg, std::size_t dim)
    : cfg_(std::move(cfg)) {
  v_.assign(dim, 0.0);
  e_.assign(dim, 0.0);
}

Vec CompressedOptimizer::step(const Vec& x, const Vec& g) {
  if (x.size() != v_.size() || g.size() != v_.size()) {
    throw Error::dimension("optimizer state, point and gradient lengths differ");
  }
  ensure_finite(g, "gradient");
  const double lr = cfg_.lr.at(t_);
  last_lr_ = lr;
  ++t_;
  Vec p(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    v_[i] = cfg_.momentum * v_[i] + g[i];
    p[i] = lr * v_[i];
    if (cfg_.error_feedback) p[i] += e_[i];
  }
  Vec c = scheme_apply(cfg_.compressor, p);
  if (cfg_.error_feedback) e_ = residual_complement(p, c);
  Vec next = sub(x, c);
  last_p_ = std::move(p);
  last_c_ = std::move(c);
  return next;
}

bool asgd_switch(int window, const std::vector<double>& metric_history) {
  if (window < 1) throw Error::config("trigger window must be >= 1");
  const std::size_t n = metric_history.size();
  if (n < static_cast<std::size_t>(window) + 1) return false;
  const double latest = metric_history.back();
  double best = metric_history[n - 2];
  for (std::size_t j = 2; j <= static_cast<std::size_t>(window); ++j) {
    best = std::min(best, metric_history[n - 1 - j]);
  }
  return !(latest < best);
}

}  // namespace resopt
