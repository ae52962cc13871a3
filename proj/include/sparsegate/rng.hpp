#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace sparsegate {

/// Deterministic pseudo-random generator: xoshiro256** seeded through
/// splitmix64. Gaussian variates use the Marsaglia polar method, so a given
/// seed produces the same stream on every platform with an IEEE-754 double
/// and a faithful std::log/std::sqrt.
class Rng {
 public:
  static constexpr std::string_view kAlgorithm = "xoshiro256**+splitmix64/polar-normal";

  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();

  /// Uniform integer in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound);

  /// Standard normal variate.
  double normal();

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> state_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Mixes a stream index into a seed so that independent consumers of one
/// user-facing seed never share a sequence.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace sparsegate
