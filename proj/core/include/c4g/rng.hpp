// Deterministic random number generation.
//
// std::mt19937_64 has a standard-specified output sequence, but the standard
// distributions do not, so the distribution transforms are hand-rolled here to
// keep generated datasets and training runs bit-identical across toolchains.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace c4g {

class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of entropy.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  uint64_t uniform_index(uint64_t n) {
    // Modulo bias is negligible for n << 2^64 and irrelevant for determinism.
    return engine_() % n;
  }

  // Standard normal via Box-Muller (pairs cached).
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform_nonzero();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

  // Independent stream derived from (seed, stream), e.g. one per scene.
  static Rng with_stream(uint64_t seed, uint64_t stream) {
    return Rng(seed ^ (0x9e3779b97f4a7c15ull * (stream + 1)));
  }

 private:
  double uniform_nonzero() {
    double u = uniform();
    return u > 0.0 ? u : 0x1.0p-53;
  }

  std::mt19937_64 engine_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace c4g
