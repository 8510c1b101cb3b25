#pragma once

#include <array>
#include <cstdint>

namespace qswitch {

/// xoshiro256** seeded through splitmix64. The stream is fully specified
/// by the seed, so generated instances are identical across platforms and
/// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on [lo, hi).
  double uniform(double lo, double hi);
  /// Standard normal (Box-Muller; consumes two uniforms per call).
  double normal();

 private:
  std::array<std::uint64_t, 4> s_{};
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace qswitch
