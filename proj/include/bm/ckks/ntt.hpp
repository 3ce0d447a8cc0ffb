// SPDX-License-Identifier: Apache-2.0
//
// Negacyclic number-theoretic transform over Z_q[X]/(X^n + 1).
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "bm/ckks/modarith.hpp"

namespace bm::ckks {

class NttTables {
 public:
  NttTables(std::size_t n, const Modulus& q);

  std::size_t n() const { return n_; }
  const Modulus& modulus() const { return q_; }
  std::uint64_t psi() const { return psi_; }

  // In-place; output is in bit-reversed evaluation order (see exponents()).
  void forward(std::span<std::uint64_t> a) const;
  void inverse(std::span<std::uint64_t> a) const;

 private:
  std::size_t n_;
  int log_n_;
  Modulus q_;
  std::uint64_t psi_;
  std::vector<ShoupConst> psi_rev_;
  std::vector<ShoupConst> psi_inv_rev_;
  ShoupConst n_inv_;
};

// Exponent e_k (odd, in [0, 2n)) such that forward(a)[k] = a(psi^{e_k}).
// Depends only on n, not on the prime.
std::vector<std::size_t> ntt_exponents(std::size_t n);

// Schoolbook negacyclic product, O(n^2). Test oracle.
std::vector<std::uint64_t> negacyclic_multiply_naive(std::span<const std::uint64_t> a,
                                                     std::span<const std::uint64_t> b, const Modulus& q);

std::size_t bit_reverse(std::size_t x, int bits);

}  // namespace bm::ckks
