// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace seqgen {

/// Seeded random source with platform-independent draws.
///
/// std::mt19937_64 is fully specified by the standard, but the standard
/// distributions are not, so uniform reals and indices are derived here
/// directly from the engine output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform01();

  /// Uniform integer in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n);

  /// Draw an index from an unnormalized nonnegative weight vector.
  std::size_t categorical(std::span<const double> weights);

  /// Independent child stream labelled by a string and an index.
  Rng derive(std::string_view label, std::uint64_t index = 0) const;

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

/// Deterministic seed derivation from (root, label, index).
std::uint64_t derive_seed(std::uint64_t root, std::string_view label,
                          std::uint64_t index = 0);

template <typename T>
void shuffle_in_place(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = rng.uniform_index(i);
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace seqgen
