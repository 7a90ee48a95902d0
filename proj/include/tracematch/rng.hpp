#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace tracematch {

// splitmix64 finalizer. Used to derive child seeds so that per-trial and
// per-group streams are fixed by (seed, index), never by scheduling order.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream) {
  return splitmix64(parent + 0x9E3779B97F4A7C15ULL * (stream + 1));
}

// Seeded generator with fixed transforms on top of mt19937_64. The std::
// distributions are implementation-defined, so uniform/normal/bounded-int are
// spelled out here; seeded output is identical on every toolchain.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform on the open interval (lo, hi); redraws the boundary value.
  double uniform_open(double lo, double hi) {
    for (;;) {
      double x = uniform(lo, hi);
      if (x > lo && x < hi) return x;
    }
  }

  // Unbiased integer in [0, bound) by rejection.
  std::uint64_t below(std::uint64_t bound) {
    if (bound == 0) throw std::domain_error("Rng::below: bound must be positive");
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      std::uint64_t r = engine_();
      if (r >= threshold) return r % bound;
    }
  }

  // Standard normal via the Marsaglia polar method; pairs are cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, q;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      q = u * u + v * v;
    } while (q >= 1.0 || q == 0.0);
    const double f = std::sqrt(-2.0 * std::log(q) / q);
    spare_ = v * f;
    have_spare_ = true;
    return u * f;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace tracematch
