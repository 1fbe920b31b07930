#include "vec.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <memory>

#include "errors.hpp"

namespace resopt {

namespace {

void require_same_dim(const Vec& a, const Vec& b, const char* op) {
  if (a.size() != b.size()) {
    throw Error::dimension(std::string(op) + ": length mismatch (" +
                           std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  }
}

}  // namespace

Vec add(const Vec& a, const Vec& b) {
  require_same_dim(a, b, "add");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Vec sub(const Vec& a, const Vec& b) {
  require_same_dim(a, b, "sub");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

Vec scale(const Vec& a, double c) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * c;
  return out;
}

Vec axpy(const Vec& a, const Vec& b, double c) {
  require_same_dim(a, b, "axpy");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + c * b[i];
  return out;
}

double dot(const Vec& a, const Vec& b) {
  require_same_dim(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm1(const Vec& a) {
  double s = 0.0;
  for (double v : a) s += std::fabs(v);
  return s;
}

double norm2_sq(const Vec& a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return s;
}

double norm2(const Vec& a) { return std::sqrt(norm2_sq(a)); }

double norm_inf(const Vec& a) {
  double s = 0.0;
  for (double v : a) s = std::max(s, std::fabs(v));
  return s;
}

bool all_finite(const Vec& a) {
  for (double v : a) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void ensure_finite(const Vec& a, const char* what) {
  if (!all_finite(a)) {
    throw Error::numeric(std::string("non-finite value in ") + what);
  }
}

void save_checkpoint(const std::string& path, const Vec& x, std::uint64_t seed) {
  std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.c_str(), "w"), &std::fclose);
  if (!f) throw Error::io("cannot open checkpoint for writing: " + path);
  std::fprintf(f.get(), "d=%zu seed=%llu\n", x.size(),
               static_cast<unsigned long long>(seed));
  for (double v : x) std::fprintf(f.get(), "%.17g %a\n", v, v);
  if (std::ferror(f.get())) throw Error::io("write failure: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.c_str(), "r"), &std::fclose);
  if (!f) throw Error::io("cannot open checkpoint: " + path);
  std::size_t d = 0;
  unsigned long long seed = 0;
  if (std::fscanf(f.get(), "d=%zu seed=%llu", &d, &seed) != 2) {
    throw Error::io("malformed checkpoint header: " + path);
  }
  Checkpoint cp;
  cp.seed = seed;
  cp.x.resize(d);
  char dec[128], hex[128];
  for (std::size_t i = 0; i < d; ++i) {
    const int got = std::fscanf(f.get(), "%127s %127s", dec, hex);
    if (got < 1) throw Error::io("checkpoint truncated at value " + std::to_string(i));
    // hex field is authoritative; decimal alone still loads
    cp.x[i] = std::strtod(got == 2 ? hex : dec, nullptr);
  }
  return cp;
}

}  // namespace resopt
