// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>

namespace bm {

// ChaCha20 keystream generator. `secure()` keys it from the OS entropy pool;
// `seeded()` derives the key from a 64-bit seed so tests are reproducible.
// Satisfies UniformRandomBitGenerator.
class Prng {
 public:
  using result_type = std::uint64_t;

  static Prng secure();
  static Prng seeded(std::uint64_t seed);
  // Derive an independent child stream (e.g. one per key component).
  Prng fork();

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()();

  // Uniform in [0, bound) by rejection sampling.
  std::uint64_t uniform_below(std::uint64_t bound);
  // Uniform in (0, 1).
  double uniform_open01();
  double gaussian(double stddev);
  void fill(std::span<std::uint8_t> out);

 private:
  explicit Prng(const std::array<std::uint8_t, 32>& key);
  void refill();

  std::array<std::uint8_t, 32> key_{};
  std::uint64_t nonce_ = 0;
  std::array<std::uint64_t, 64> block_{};
  std::size_t pos_ = 64;
};

}  // namespace bm
