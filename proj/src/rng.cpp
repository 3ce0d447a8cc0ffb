// SPDX-License-Identifier: Apache-2.0
#include "bm/rng.hpp"

#include <sodium.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <numbers>
#include <stdexcept>

namespace bm {
namespace {

void ensure_sodium() {
  static const bool ok = sodium_init() >= 0;
  if (!ok) throw std::runtime_error("libsodium initialisation failed");
}

}  // namespace

Prng::Prng(const std::array<std::uint8_t, 32>& key) : key_(key) {}

Prng Prng::secure() {
  ensure_sodium();
  std::array<std::uint8_t, 32> key{};
  randombytes_buf(key.data(), key.size());
  return Prng(key);
}

Prng Prng::seeded(std::uint64_t seed) {
  ensure_sodium();
  std::array<std::uint8_t, 32> key{};
  std::uint8_t in[16] = {'b', 'm', '-', 's', 'e', 'e', 'd', 0};
  std::memcpy(in + 8, &seed, sizeof seed);
  crypto_hash_sha256(key.data(), in, sizeof in);
  return Prng(key);
}

Prng Prng::fork() {
  std::array<std::uint8_t, 32> key{};
  fill(key);
  return Prng(key);
}

void Prng::refill() {
  std::uint8_t nonce[crypto_stream_chacha20_NONCEBYTES];
  static_assert(sizeof nonce == sizeof nonce_);
  std::memcpy(nonce, &nonce_, sizeof nonce);
  ++nonce_;
  crypto_stream_chacha20(reinterpret_cast<unsigned char*>(block_.data()), sizeof block_, nonce, key_.data());
  pos_ = 0;
}

Prng::result_type Prng::operator()() {
  if (pos_ == block_.size()) refill();
  return block_[pos_++];
}

std::uint64_t Prng::uniform_below(std::uint64_t bound) {
  if (bound <= 1) return 0;
  const int bits = std::bit_width(bound - 1);
  const std::uint64_t mask = bits == 64 ? ~0ULL : ((1ULL << bits) - 1);
  for (;;) {
    std::uint64_t v = (*this)() & mask;
    if (v < bound) return v;
  }
}

double Prng::uniform_open01() {
  // 53 random mantissa bits, shifted off zero.
  return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
}

double Prng::gaussian(double stddev) {
  const double u1 = uniform_open01();
  const double u2 = uniform_open01();
  return stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void Prng::fill(std::span<std::uint8_t> out) {
  std::size_t i = 0;
  while (i < out.size()) {
    std::uint64_t w = (*this)();
    std::size_t n = std::min<std::size_t>(8, out.size() - i);
    std::memcpy(out.data() + i, &w, n);
    i += n;
  }
}

}  // namespace bm
