#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

// Seedable random source with a pinned algorithm: mt19937_64 for raw bits,
// a 53-bit shift for uniforms and Box-Muller for normals. The standard
// distribution adaptors are avoided on purpose; their output differs across
// standard library implementations, and simulator streams must reproduce
// bit-for-bit from (config, seed) alone.

namespace latcast {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1), 53-bit resolution. Consumes one engine draw.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller. Consumes exactly two engine draws.
  double normal() {
    double u1 = static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;  // (0,1]
    double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;       // [0,1)
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t next_u64() { return engine_(); }

  friend bool operator==(const Rng& a, const Rng& b) {
    return a.engine_ == b.engine_;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace latcast
