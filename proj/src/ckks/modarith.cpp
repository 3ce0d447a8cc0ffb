// SPDX-License-Identifier: Apache-2.0
#include "bm/ckks/modarith.hpp"

#include <algorithm>
#include <bit>

#include "bm/error.hpp"

namespace bm::ckks {

Modulus::Modulus(std::uint64_t q) : q_(q), bits_(std::bit_width(q)) {
  if (q < 2 || bits_ > 62) fail(ErrorCode::kInvalidPrime, "modulus must be in [2, 2^62)");
  const u128 ratio = ~static_cast<u128>(0) / q;
  r0_ = static_cast<std::uint64_t>(ratio);
  r1_ = static_cast<std::uint64_t>(ratio >> 64);
}

std::uint64_t Modulus::pow(std::uint64_t base, std::uint64_t exp) const {
  std::uint64_t result = 1 % q_;
  base = reduce(base);
  while (exp != 0) {
    if (exp & 1) result = mul(result, base);
    base = mul(base, base);
    exp >>= 1;
  }
  return result;
}

std::uint64_t Modulus::inv(std::uint64_t a) const {
  // q is prime.
  a = reduce(a);
  if (a == 0) fail(ErrorCode::kInvalidArgument, "zero has no inverse");
  return pow(a, q_ - 2);
}

namespace {

std::uint64_t powmod_u128(std::uint64_t b, std::uint64_t e, std::uint64_t m) {
  u128 r = 1, x = b % m;
  while (e) {
    if (e & 1) r = (r * x) % m;
    x = (x * x) % m;
    e >>= 1;
  }
  return static_cast<std::uint64_t>(r);
}

}  // namespace

bool is_prime(std::uint64_t n) {
  if (n < 2) return false;
  for (std::uint64_t p : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL, 23ULL, 29ULL, 31ULL, 37ULL}) {
    if (n % p == 0) return n == p;
  }
  std::uint64_t d = n - 1;
  int s = 0;
  while ((d & 1) == 0) {
    d >>= 1;
    ++s;
  }
  // Deterministic witness set for all 64-bit n.
  for (std::uint64_t a : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL, 23ULL, 29ULL, 31ULL, 37ULL}) {
    std::uint64_t x = powmod_u128(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool composite = true;
    for (int r = 1; r < s; ++r) {
      x = static_cast<std::uint64_t>((static_cast<u128>(x) * x) % n);
      if (x == n - 1) {
        composite = false;
        break;
      }
    }
    if (composite) return false;
  }
  return true;
}

std::vector<std::uint64_t> find_ntt_primes(int bits, std::size_t n, std::size_t count,
                                           const std::vector<std::uint64_t>& exclude) {
  if (bits < 10 || bits > 62) fail(ErrorCode::kInvalidArgument, "prime size out of range");
  const std::uint64_t step = 2 * static_cast<std::uint64_t>(n);
  std::vector<std::uint64_t> out;
  // Largest candidate below 2^bits that is 1 mod 2n.
  std::uint64_t c = ((1ULL << bits) - 1) / step * step + 1;
  if (c >= (1ULL << bits)) c -= step;
  while (out.size() < count && c > step) {
    if (is_prime(c) && std::find(exclude.begin(), exclude.end(), c) == exclude.end()) out.push_back(c);
    c -= step;
  }
  if (out.size() < count) fail(ErrorCode::kInvalidPrime, "not enough NTT-friendly primes");
  return out;
}

std::uint64_t find_primitive_2nth_root(const Modulus& q, std::size_t n) {
  const std::uint64_t order = 2 * static_cast<std::uint64_t>(n);
  if ((q.value() - 1) % order != 0) fail(ErrorCode::kInvalidPrime, "q != 1 mod 2n");
  const std::uint64_t cofactor = (q.value() - 1) / order;
  for (std::uint64_t g = 2; g < q.value(); ++g) {
    const std::uint64_t cand = q.pow(g, cofactor);
    // Primitive iff cand^(n) == -1.
    if (q.pow(cand, n) == q.value() - 1) {
      // Pick the smallest power among the primitive roots for determinism.
      std::uint64_t best = cand, cur = cand;
      const std::uint64_t sq = q.mul(cand, cand);
      for (std::uint64_t i = 1; i < n; ++i) {
        cur = q.mul(cur, sq);
        best = std::min(best, cur);
      }
      return best;
    }
  }
  fail(ErrorCode::kInvalidPrime, "no primitive root found");
}

}  // namespace bm::ckks
