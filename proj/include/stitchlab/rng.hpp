#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace stitchlab {

// Splittable counter-based generator built on the SplitMix64 finalizer.
// Output i of a stream is mix(key + i * golden), so draws depend only on
// (key, counter) and independent streams can be forked with split() without
// sharing state. Everything downstream derives its randomness from a single
// 64-bit seed through this class.
class Rng {
 public:
  explicit Rng(uint64_t seed) : key_(mix(seed + kGolden)) {}

  // Derives an independent stream. Does not consume entropy from this one.
  Rng split(uint64_t tag) const {
    Rng r(0);
    r.key_ = mix(key_ ^ mix(tag + kGolden));
    r.ctr_ = 0;
    return r;
  }

  uint64_t next_u64() {
    ctr_ += kGolden;
    return mix(key_ + ctr_);
  }

  // Uniform on [0,1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform on {0,...,n-1}.
  int uniform_int(int n) {
    return static_cast<int>((static_cast<unsigned __int128>(next_u64()) *
                             static_cast<unsigned __int128>(n)) >>
                            64);
  }

  // Standard normal via Box-Muller (cosine branch only, so each call costs
  // two uniforms and the stream stays position-independent).
  double normal() {
    double u1 = 1.0 - uniform();  // (0,1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // k >= 1 with P(k) = (1-gamma) * gamma^(k-1).
  int geometric(double gamma) {
    double u = 1.0 - uniform();  // (0,1]
    if (gamma <= 0.0) return 1;
    int k = 1 + static_cast<int>(std::floor(std::log(u) / std::log(gamma)));
    return k < 1 ? 1 : k;
  }

 private:
  static constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ull;

  static uint64_t mix(uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
  }

  uint64_t key_;
  uint64_t ctr_ = 0;
};

}  // namespace stitchlab
