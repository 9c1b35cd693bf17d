#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>

namespace flowood {

// splitmix64 finalizer; used to derive decorrelated sub-stream seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Seeded random source. Normal deviates use Box-Muller on top of the raw
// 64-bit stream rather than std::normal_distribution, so sequences do not
// depend on the standard-library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix64(seed)) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  void fill_normal(std::span<double> out) {
    for (double& v : out) v = normal();
  }

  // Child stream derived from the original seed; independent of how much of
  // this stream has been consumed. Callers must use distinct tags.
  Rng fork(std::uint64_t tag) const { return Rng(mix64(seed_ ^ mix64(tag + 1))); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace flowood
