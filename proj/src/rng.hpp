#pragma once

#include <cstdint>
#include <cstddef>

namespace resopt {

// Deterministic seeded generator. splitmix64 is counter-based (the state
// advances by a fixed increment), so equal seeds give equal sequences
// regardless of platform or thread schedule. The algorithm id is persisted
// in run logs so old logs stay reproducible if the default ever changes.
class RngStream {
 public:
  static constexpr const char* kAlgorithm = "splitmix64/v1";

  explicit RngStream(std::uint64_t seed) : state_(seed), seed_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    ++pos_;
    return z ^ (z >> 31);
  }

  // Uniform in [0,1), 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0,1]; safe as a log() argument.
  double uniform01_open_left() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller (cosine branch). Consumes two draws.
  double normal();

  // Uniform index in [0,n). Multiply-shift bounding; bias is O(n/2^64).
  std::size_t index_below(std::size_t n) {
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return pos_; }

 private:
  std::uint64_t state_;
  std::uint64_t seed_;
  std::uint64_t pos_ = 0;
};

// Derives an independent stream seed from a master seed and a purpose tag.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

}  // namespace resopt
