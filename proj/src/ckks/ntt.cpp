// SPDX-License-Identifier: Apache-2.0
#include "bm/ckks/ntt.hpp"

#include <bit>
#include <unordered_map>

#include "bm/error.hpp"

namespace bm::ckks {

std::size_t bit_reverse(std::size_t x, int bits) {
  std::size_t r = 0;
  for (int i = 0; i < bits; ++i) {
    r = (r << 1) | (x & 1);
    x >>= 1;
  }
  return r;
}

NttTables::NttTables(std::size_t n, const Modulus& q)
    : n_(n), log_n_(std::countr_zero(n)), q_(q), psi_rev_(n), psi_inv_rev_(n) {
  if (n < 2 || !std::has_single_bit(n)) fail(ErrorCode::kInvalidArgument, "NTT size must be a power of two");
  psi_ = find_primitive_2nth_root(q_, n);
  const std::uint64_t psi_inv = q_.inv(psi_);
  std::uint64_t p = 1, pi = 1;
  std::vector<std::uint64_t> pows(n), inv_pows(n);
  for (std::size_t i = 0; i < n; ++i) {
    pows[i] = p;
    inv_pows[i] = pi;
    p = q_.mul(p, psi_);
    pi = q_.mul(pi, psi_inv);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = bit_reverse(i, log_n_);
    psi_rev_[i] = ShoupConst(pows[r], q_.value());
    psi_inv_rev_[i] = ShoupConst(inv_pows[r], q_.value());
  }
  n_inv_ = ShoupConst(q_.inv(n), q_.value());
}

void NttTables::forward(std::span<std::uint64_t> a) const {
  const std::uint64_t q = q_.value();
  std::size_t t = n_;
  for (std::size_t m = 1; m < n_; m <<= 1) {
    t >>= 1;
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t j1 = 2 * i * t;
      const ShoupConst& w = psi_rev_[m + i];
      std::uint64_t* x = a.data() + j1;
      std::uint64_t* y = x + t;
      for (std::size_t j = 0; j < t; ++j) {
        const std::uint64_t u = x[j];
        const std::uint64_t v = mul_shoup(y[j], w, q);
        const std::uint64_t s = u + v;
        x[j] = s >= q ? s - q : s;
        y[j] = u >= v ? u - v : u + q - v;
      }
    }
  }
}

void NttTables::inverse(std::span<std::uint64_t> a) const {
  const std::uint64_t q = q_.value();
  std::size_t t = 1;
  for (std::size_t m = n_; m > 1; m >>= 1) {
    const std::size_t h = m >> 1;
    std::size_t j1 = 0;
    for (std::size_t i = 0; i < h; ++i) {
      const ShoupConst& w = psi_inv_rev_[h + i];
      std::uint64_t* x = a.data() + j1;
      std::uint64_t* y = x + t;
      for (std::size_t j = 0; j < t; ++j) {
        const std::uint64_t u = x[j];
        const std::uint64_t v = y[j];
        const std::uint64_t s = u + v;
        x[j] = s >= q ? s - q : s;
        y[j] = mul_shoup(u >= v ? u - v : u + q - v, w, q);
      }
      j1 += 2 * t;
    }
    t <<= 1;
  }
  for (auto& v : a) v = mul_shoup(v, n_inv_, q);
}

std::vector<std::size_t> ntt_exponents(std::size_t n) {
  // Probe with a small NTT-friendly prime: transform X and take discrete logs.
  const auto primes = find_ntt_primes(30, n, 1);
  const Modulus q(primes[0]);
  NttTables t(n, q);
  std::unordered_map<std::uint64_t, std::size_t> log;
  std::uint64_t p = 1;
  for (std::size_t e = 0; e < 2 * n; ++e) {
    log.emplace(p, e);
    p = q.mul(p, t.psi());
  }
  std::vector<std::uint64_t> x(n, 0);
  x[1] = 1;
  t.forward(x);
  std::vector<std::size_t> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = log.at(x[k]);
  return out;
}

std::vector<std::uint64_t> negacyclic_multiply_naive(std::span<const std::uint64_t> a,
                                                     std::span<const std::uint64_t> b, const Modulus& q) {
  const std::size_t n = a.size();
  std::vector<std::uint64_t> out(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::uint64_t prod = q.mul(a[i], b[j]);
      const std::size_t k = i + j;
      if (k < n) {
        out[k] = q.add(out[k], prod);
      } else {
        out[k - n] = q.sub(out[k - n], prod);
      }
    }
  }
  return out;
}

}  // namespace bm::ckks
