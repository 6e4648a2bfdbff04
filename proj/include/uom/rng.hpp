#pragma once

#include <array>
#include <cstdint>

namespace uom {

/// SplitMix64 finalizer. Used to expand seeds and to derive sub-stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Seed of the sub-stream `index` of `seed`: splitmix64 applied to seed XOR (index + 1).
/// Clustered models use this rule for per-cluster seeds.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  std::uint64_t s = seed ^ (index + 1);
  return splitmix64(s);
}

/// xoshiro256** generator seeded through SplitMix64.
///
/// All sampling primitives are implemented here rather than with <random>
/// distributions so that streams are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept;

  std::uint64_t next_u64() noexcept;

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;

  /// Uniform integer in [0, bound). `bound` must be positive.
  std::uint64_t uniform_index(std::uint64_t bound) noexcept;

  /// Standard normal via the Marsaglia polar method (second variate cached).
  double normal() noexcept;

 private:
  std::array<std::uint64_t, 4> s_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace uom
