#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace specaug {

// Seeded random source whose output is fully specified: std::mt19937_64 is
// defined bit-exactly by the standard, but the std distributions are not, so
// the draws below are computed by hand from raw engine output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t index(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal via Box-Muller; one variate per call.
  double normal();

 private:
  std::mt19937_64 engine_;
};

// FNV-1a over the bytes of a string.
std::uint64_t fnv1a64(std::string_view text);

// Seed for a named pipeline stage: master + fnv1a64(stage), modulo 2^64.
inline std::uint64_t stage_seed(std::uint64_t master, std::string_view stage) {
  return master + fnv1a64(stage);
}

}  // namespace specaug
