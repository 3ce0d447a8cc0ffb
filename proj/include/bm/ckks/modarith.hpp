// SPDX-License-Identifier: Apache-2.0
//
// 64-bit modular arithmetic for word-sized NTT primes (q < 2^62).
#pragma once

#include <cstdint>
#include <vector>

namespace bm::ckks {

using u128 = unsigned __int128;

inline std::uint64_t mulhi64(std::uint64_t a, std::uint64_t b) {
  return static_cast<std::uint64_t>((static_cast<u128>(a) * b) >> 64);
}

// A prime modulus with its Barrett constant floor(2^128 / q).
class Modulus {
 public:
  Modulus() = default;
  explicit Modulus(std::uint64_t q);

  std::uint64_t value() const { return q_; }
  int bits() const { return bits_; }

  // x mod q for any 128-bit x with x < q * 2^64.
  std::uint64_t reduce(u128 x) const {
    const auto in0 = static_cast<std::uint64_t>(x);
    const auto in1 = static_cast<std::uint64_t>(x >> 64);
    std::uint64_t carry = mulhi64(in0, r0_);
    u128 t2 = static_cast<u128>(in0) * r1_;
    auto t2lo = static_cast<std::uint64_t>(t2);
    auto t2hi = static_cast<std::uint64_t>(t2 >> 64);
    std::uint64_t t1 = t2lo + carry;
    std::uint64_t t3 = t2hi + (t1 < t2lo);
    t2 = static_cast<u128>(in1) * r0_;
    t2lo = static_cast<std::uint64_t>(t2);
    t2hi = static_cast<std::uint64_t>(t2 >> 64);
    const std::uint64_t sum = t1 + t2lo;
    carry = t2hi + (sum < t1);
    t1 = in1 * r1_ + t3 + carry;
    std::uint64_t r = in0 - t1 * q_;
    return r >= q_ ? r - q_ : r;
  }
  std::uint64_t reduce(std::uint64_t x) const { return x >= q_ ? x % q_ : x; }
  std::uint64_t mul(std::uint64_t a, std::uint64_t b) const { return reduce(static_cast<u128>(a) * b); }
  std::uint64_t add(std::uint64_t a, std::uint64_t b) const {
    std::uint64_t s = a + b;
    return s >= q_ ? s - q_ : s;
  }
  std::uint64_t sub(std::uint64_t a, std::uint64_t b) const { return a >= b ? a - b : a + q_ - b; }
  std::uint64_t neg(std::uint64_t a) const { return a == 0 ? 0 : q_ - a; }
  // Reduce a signed value into [0, q).
  std::uint64_t from_signed(std::int64_t v) const {
    if (v >= 0) return static_cast<std::uint64_t>(v) % q_;
    const std::uint64_t m = static_cast<std::uint64_t>(-(v + 1)) % q_;
    return q_ - 1 - m;
  }

  std::uint64_t pow(std::uint64_t base, std::uint64_t exp) const;
  std::uint64_t inv(std::uint64_t a) const;

  friend bool operator==(const Modulus& a, const Modulus& b) { return a.q_ == b.q_; }

 private:
  std::uint64_t q_ = 0;
  std::uint64_t r0_ = 0;
  std::uint64_t r1_ = 0;
  int bits_ = 0;
};

// Multiplication by a fixed operand w with precomputed floor(w * 2^64 / q).
struct ShoupConst {
  std::uint64_t w = 0;
  std::uint64_t w_shoup = 0;
  ShoupConst() = default;
  ShoupConst(std::uint64_t w_, std::uint64_t q)
      : w(w_), w_shoup(static_cast<std::uint64_t>((static_cast<u128>(w_) << 64) / q)) {}
};

inline std::uint64_t mul_shoup(std::uint64_t x, const ShoupConst& c, std::uint64_t q) {
  const std::uint64_t hi = mulhi64(x, c.w_shoup);
  const std::uint64_t r = x * c.w - hi * q;
  return r >= q ? r - q : r;
}

bool is_prime(std::uint64_t n);

// Distinct primes p < 2^bits with p = 1 (mod 2n), largest first, skipping
// any value already in `exclude`.
std::vector<std::uint64_t> find_ntt_primes(int bits, std::size_t n, std::size_t count,
                                           const std::vector<std::uint64_t>& exclude = {});

// A primitive 2n-th root of unity mod q (the smallest such, deterministic).
std::uint64_t find_primitive_2nth_root(const Modulus& q, std::size_t n);

}  // namespace bm::ckks
