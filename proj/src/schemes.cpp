#include "schemes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "errors.hpp"

namespace resopt {

SchemeSpec SchemeSpec::parse(const std::string& text) {
  SchemeSpec s;
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
  if (head == "scale") {
    s.kind = SchemeKind::scale;
    if (arg.empty()) throw Error::config("scheme scale needs a factor, e.g. scale:0.0625");
    try {
      s.alpha = std::stod(arg);
    } catch (const std::exception&) {
      throw Error::config("bad scale factor: " + arg);
    }
    if (!(s.alpha > 0.0 && s.alpha <= 1.0)) {
      throw Error::config("scale factor must be in (0,1], got " + arg);
    }
  } else if (head == "sign") {
    s.kind = SchemeKind::scaled_sign;
    if (!arg.empty()) throw Error::config("scheme sign takes no argument");
  } else if (head == "topk") {
    s.kind = SchemeKind::topk;
    if (arg.empty()) throw Error::config("scheme topk needs a fraction, e.g. topk:0.01");
    try {
      s.k_fraction = std::stod(arg);
    } catch (const std::exception&) {
      throw Error::config("bad topk fraction: " + arg);
    }
    if (!(s.k_fraction > 0.0 && s.k_fraction <= 1.0)) {
      throw Error::config("topk fraction must be in (0,1], got " + arg);
    }
  } else {
    throw Error::config("unknown scheme: " + text);
  }
  return s;
}

std::string SchemeSpec::to_string() const {
  switch (kind) {
    case SchemeKind::scale:
      return "scale:" + std::to_string(alpha);
    case SchemeKind::scaled_sign:
      return "sign";
    case SchemeKind::topk:
      return "topk:" + std::to_string(k_fraction);
  }
  return "?";
}

std::size_t SchemeSpec::resolved_k(std::size_t d) const {
  const auto k = static_cast<std::size_t>(std::floor(k_fraction * static_cast<double>(d)));
  return std::max<std::size_t>(1, std::min(k, d));
}

namespace {

Vec apply_scale(double alpha, const Vec& delta) { return scale(delta, alpha); }

Vec apply_scaled_sign(const Vec& delta) {
  Vec out(delta.size(), 0.0);
  if (delta.empty()) return out;
  const double mass = norm1(delta) / static_cast<double>(delta.size());
  for (std::size_t i = 0; i < delta.size(); ++i) {
    if (delta[i] > 0.0) {
      out[i] = mass;
    } else if (delta[i] < 0.0) {
      out[i] = -mass;
    }
  }
  return out;
}

Vec apply_topk(std::size_t k, const Vec& delta) {
  Vec out(delta.size(), 0.0);
  if (delta.empty()) return out;
  std::vector<std::size_t> idx(delta.size());
  std::iota(idx.begin(), idx.end(), 0);
  // largest magnitude first, ties broken by lowest index
  const auto better = [&](std::size_t a, std::size_t b) {
    const double ma = std::fabs(delta[a]);
    const double mb = std::fabs(delta[b]);
    return ma != mb ? ma > mb : a < b;
  };
  k = std::min(k, delta.size());
  std::nth_element(idx.begin(), idx.begin() + (k - 1), idx.end(), better);
  for (std::size_t j = 0; j < k; ++j) out[idx[j]] = delta[idx[j]];
  return out;
}

}  // namespace

Vec scheme_apply(const SchemeSpec& s, const Vec& delta) {
  switch (s.kind) {
    case SchemeKind::scale:
      return apply_scale(s.alpha, delta);
    case SchemeKind::scaled_sign:
      return apply_scaled_sign(delta);
    case SchemeKind::topk:
      return apply_topk(s.resolved_k(delta.size()), delta);
  }
  throw Error::internal("unreachable scheme kind");
}

Vec residual_complement(const Vec& delta, const Vec& applied) {
  if (delta.size() != applied.size()) {
    throw Error::dimension("residual_complement: length mismatch");
  }
  Vec r(delta.size());
  for (std::size_t i = 0; i < delta.size(); ++i) {
    double ri = delta[i] - applied[i];
    // Nudge by ulps until the stored pair sums back to delta exactly. The
    // plain difference already does in almost all cases; extreme dynamic
    // range between components can leave it one ulp off.
    for (int tries = 0; tries < 4 && applied[i] + ri != delta[i]; ++tries) {
      ri = std::nextafter(ri, applied[i] + ri < delta[i]
                                  ? std::numeric_limits<double>::infinity()
                                  : -std::numeric_limits<double>::infinity());
    }
    r[i] = ri;
  }
  return r;
}

Vec scheme_residual(const SchemeSpec& s, const Vec& delta) {
  return residual_complement(delta, scheme_apply(s, delta));
}

}  // namespace resopt
