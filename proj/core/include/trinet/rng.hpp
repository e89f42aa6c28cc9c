#pragma once

#include <cstdint>
#include <string_view>

namespace trinet {

/// Deterministic pseudo-random generator (xoshiro256**). The standard
/// library distributions are implementation-defined, so uniform and normal
/// draws are produced here directly from the raw bit stream; two builds of
/// this project always draw identical sequences for the same seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  /// Uniform double in [0, 1).
  double uniform();

  /// Standard normal via Box-Muller.
  double normal();

  /// Uniform integer in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n);

  bool bernoulli(double p);

 private:
  std::uint64_t state_[4];
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

/// Derives an independent named stream from an experiment seed, so every
/// source of randomness (masking, dropout, data order, ...) is a pure
/// function of (seed, stream, index) and never of call history.
Rng derive_rng(std::uint64_t seed, std::string_view stream);
Rng derive_rng(std::uint64_t seed, std::string_view stream, std::uint64_t index);

}  // namespace trinet
