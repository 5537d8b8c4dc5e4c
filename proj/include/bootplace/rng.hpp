#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace bootplace {

// Deterministic random source. All distribution transforms are implemented
// here rather than with std::*_distribution, whose output is
// implementation-defined; a (seed, call sequence) pair must reproduce the
// same stream on every build.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  // Independent stream for (seed, salt); used to partition work, e.g. one
  // stream per scene, without coupling draw counts across units.
  static Rng derive(uint64_t seed, uint64_t salt) {
    uint64_t h = seed ^ (salt + 0x9e3779b97f4a7c15ull + (seed << 6) + (seed >> 2));
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdull;
    h ^= h >> 33;
    h *= 0xc4ceb9fe1a85ec53ull;
    h ^= h >> 33;
    return Rng(h);
  }

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    uint64_t limit =
        std::numeric_limits<uint64_t>::max() - std::numeric_limits<uint64_t>::max() % span;
    uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return lo + static_cast<int64_t>(x % span);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller; caches the second deviate.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace bootplace
