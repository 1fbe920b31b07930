#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace resopt {

// Flat parameter vector. Immutable once shared; all producers return fresh
// values. Sums run left to right so trajectories are bitwise reproducible.
using Vec = std::vector<double>;

Vec add(const Vec& a, const Vec& b);
Vec sub(const Vec& a, const Vec& b);
Vec scale(const Vec& a, double c);
// a + c*b
Vec axpy(const Vec& a, const Vec& b, double c);

double dot(const Vec& a, const Vec& b);
double norm1(const Vec& a);
double norm2(const Vec& a);
double norm2_sq(const Vec& a);
double norm_inf(const Vec& a);

bool all_finite(const Vec& a);
// Throws a numeric error naming `what` when the vector has a NaN/Inf entry.
void ensure_finite(const Vec& a, const char* what);

// Text checkpoint: "d=<n> seed=<u64>" header, then one value per line as
// decimal and hexadecimal float. The hex field round-trips bit-exactly.
void save_checkpoint(const std::string& path, const Vec& x, std::uint64_t seed);

struct Checkpoint {
  Vec x;
  std::uint64_t seed = 0;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace resopt
