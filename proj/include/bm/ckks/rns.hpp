// SPDX-License-Identifier: Apache-2.0
//
// Ring parameters, RNS polynomials and the precomputed ring context shared by
// every CKKS object built under one parameter set.
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "bm/ckks/modarith.hpp"
#include "bm/ckks/ntt.hpp"
#include "bm/hash.hpp"

namespace bm::ckks {

// Largest log2(PQ) allowed at 128-bit classical security for a ring degree
// (homomorphic encryption standard, ternary secret). 0 when n is not tabulated.
int max_modulus_bits_128(std::size_t ring_degree);

struct RingParams {
  std::size_t ring_degree = 0;
  // q_0 .. q_d; q_0 is the base prime kept for decryption.
  std::vector<std::uint64_t> modulus_chain;
  // Key-switching prime P.
  std::uint64_t special_modulus = 0;
  int scale_bits = 40;
  double error_stddev = 3.2;
  bool ternary_secret = true;
  // Permits rings outside the security table; test-only toy parameters.
  bool allow_insecure = false;

  // Chain for `depth` rescales: q_0 of base_bits, depth primes just below
  // 2^scale_bits and a special prime of base_bits.
  static RingParams standard(std::size_t ring_degree, int depth = 3, int scale_bits = 40, int base_bits = 49);

  int depth() const { return static_cast<int>(modulus_chain.size()) - 1; }
  std::size_t slot_count() const { return ring_degree / 2; }
  double total_modulus_bits() const;
  // Throws InvalidPrime or InsecureParameters.
  void validate() const;
  Digest digest() const;
};

// A polynomial held as residues modulo several primes, limb-major.
class RnsPoly {
 public:
  RnsPoly() = default;
  RnsPoly(std::size_t n, std::size_t limbs) : n_(n), limbs_(limbs), data_(n * limbs, 0) {}

  std::size_t n() const { return n_; }
  std::size_t limbs() const { return limbs_; }
  std::span<std::uint64_t> limb(std::size_t i) { return {data_.data() + i * n_, n_}; }
  std::span<const std::uint64_t> limb(std::size_t i) const { return {data_.data() + i * n_, n_}; }
  std::span<const std::uint64_t> words() const { return data_; }
  std::span<std::uint64_t> words() { return data_; }

  // Keep the first k limbs.
  void truncate(std::size_t k) {
    limbs_ = k;
    data_.resize(n_ * k);
  }

 private:
  std::size_t n_ = 0;
  std::size_t limbs_ = 0;
  std::vector<std::uint64_t> data_;
};

class RingContext {
 public:
  explicit RingContext(RingParams params);

  const RingParams& params() const { return params_; }
  std::size_t n() const { return params_.ring_degree; }
  std::size_t slots() const { return params_.ring_degree / 2; }
  int depth() const { return params_.depth(); }
  const Digest& digest() const { return digest_; }

  // Modulus index k in [0, depth] is q_k; index depth + 1 is P.
  std::size_t special_index() const { return static_cast<std::size_t>(depth()) + 1; }
  const Modulus& modulus(std::size_t k) const { return moduli_[k]; }
  const NttTables& ntt(std::size_t k) const { return ntt_[k]; }

  // Modulus index of limb i of a key-switching-extended polynomial at level l
  // (limbs 0..l are q_0..q_l, limb l+1 is P).
  std::size_t ext_index(int level, std::size_t limb) const {
    return limb <= static_cast<std::size_t>(level) ? limb : special_index();
  }

  // q_l^{-1} mod q_i, i < l.
  const ShoupConst& inv_q_mod(int l, std::size_t i) const { return inv_q_[l][i]; }
  // P^{-1} mod q_i and P mod q_i.
  const ShoupConst& inv_p_mod(std::size_t i) const { return inv_p_[i]; }
  std::uint64_t p_mod(std::size_t i) const { return p_mod_q_[i]; }

  // Position k in NTT order holding evaluation exponent e.
  std::size_t ntt_position(std::size_t exponent) const { return pos_of_exp_[exponent]; }
  std::size_t ntt_exponent(std::size_t k) const { return exponents_[k]; }

  // Galois element for a left slot rotation by `steps`.
  std::uint64_t galois_element(std::size_t steps) const;
  // Apply X -> X^g to an NTT-form polynomial with the given limb moduli.
  void apply_galois_ntt(std::span<const std::uint64_t> in, std::span<std::uint64_t> out, std::uint64_t g) const;

  // Garner mixed-radix lift of limbs 0..l (coefficient form) to centered reals.
  void crt_to_double(const RnsPoly& coeffs, int level, std::span<double> out) const;

 private:
  // Mixed-radix digits of the value with the given residues mod q_0..q_level.
  void garner_digits(std::span<const std::uint64_t> residues, int level, std::span<std::uint64_t> v) const;

  RingParams params_;
  Digest digest_{};
  std::vector<Modulus> moduli_;
  std::vector<NttTables> ntt_;
  std::vector<std::vector<ShoupConst>> inv_q_;
  std::vector<ShoupConst> inv_p_;
  std::vector<std::uint64_t> p_mod_q_;
  // garner_[i][j] = (q_0 ... q_{j-1})^{-1} handling, see crt_to_double.
  std::vector<std::vector<std::uint64_t>> garner_inv_;
  std::vector<std::size_t> exponents_;
  std::vector<std::size_t> pos_of_exp_;
};

}  // namespace bm::ckks
