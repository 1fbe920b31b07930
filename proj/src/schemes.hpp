#pragma once

#include <cstddef>
#include <string>

#include "vec.hpp"

namespace resopt {

// Residual schemes map a proposed parameter delta to the applied part; the
// complement is carried forward as the residual.
enum class SchemeKind { scale, scaled_sign, topk };

struct SchemeSpec {
  SchemeKind kind = SchemeKind::scale;
  double alpha = 1.0;       // scale: 0 < alpha <= 1
  double k_fraction = 1.0;  // topk: 0 < k_fraction <= 1

  // "scale:0.0625" | "sign" | "topk:0.01"
  static SchemeSpec parse(const std::string& text);
  std::string to_string() const;

  // topk keeps at least one component
  std::size_t resolved_k(std::size_t d) const;

  // scale with alpha == 1 applies the whole delta and carries zero residual
  bool is_identity() const { return kind == SchemeKind::scale && alpha == 1.0; }
};

// Applied part of the delta.
//   scale:       alpha * delta
//   scaled sign: (||delta||_1 / d) * sign(delta), sign(0) = 0
//   topk:        delta restricted to the k largest-magnitude components,
//                ties broken by lowest index
Vec scheme_apply(const SchemeSpec& s, const Vec& delta);

// delta - applied, adjusted by at most a few ulps per component so that the
// stored pair satisfies applied[i] + residual[i] == delta[i] bitwise.
Vec scheme_residual(const SchemeSpec& s, const Vec& delta);

// The same complement when the applied part is already known.
Vec residual_complement(const Vec& delta, const Vec& applied);

}  // namespace resopt
