// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace xmodal {

// Named sub-streams derived from one master seed. Each consumer draws from
// its own stream, so enabling or disabling one consumer never perturbs the
// numbers seen by another.
enum class RngStream : std::uint64_t {
  Init = 1,     // parameter initialization
  Dropout = 2,  // dropout masks
  Shuffle = 3,  // data shuffling
  Data = 4,     // synthetic data generation
};

// Deterministic 64-bit generator (SplitMix64). The full state is one u64,
// the sequence is a pure function of the seed, and the output is identical
// across platforms and standard-library implementations. Distributions are
// implemented here (not via <random>) for the same reason.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

  // Independent stream: seeded from the construction seed and the stream id,
  // not from the current state, so derivation order does not matter.
  Rng derive(RngStream stream) const {
    return Rng(mix(seed_ ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(stream))));
  }

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; draws two uniforms per pair.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * uniform();
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Uniform index in [0, n). Modulo bias is negligible for the sizes used here.
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(next() % n); }

  // Fisher-Yates.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace xmodal
