#pragma once

#include <cstdint>
#include <cmath>
#include <string_view>

namespace rayzer {

// Deterministic counter-free PRNG (splitmix64 core). All sampling is written
// out explicitly so sequences are identical across platforms and compilers,
// which std::<distribution> does not guarantee.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi], inclusive. Rejection sampling, no modulo bias.
  int uniform_int(int lo, int hi) {
    uint64_t range = uint64_t(int64_t(hi) - int64_t(lo)) + 1;
    uint64_t limit = UINT64_MAX - UINT64_MAX % range;
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return int(int64_t(lo) + int64_t(x % range));
  }

  // Standard normal via Box-Muller; caches the second deviate.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  // Normal truncated to +/- 2 sigma (resampling), as used for weight init.
  double trunc_normal(double sigma) {
    double z;
    do {
      z = normal();
    } while (std::fabs(z) > 2.0);
    return z * sigma;
  }

  // Named substream: an independent generator derived from (state, name).
  // Lets one root seed drive data/split/init/probe streams independently.
  Rng substream(std::string_view name) const {
    uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (char c : name) {
      h ^= uint64_t(uint8_t(c));
      h *= 0x100000001b3ULL;
    }
    Rng r(state_ ^ h);
    r.next_u64();  // decorrelate from the raw xor
    return r;
  }

 private:
  uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace rayzer
