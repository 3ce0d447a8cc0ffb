// SPDX-License-Identifier: Apache-2.0
#include "bm/ckks/rns.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "bm/bytes.hpp"
#include "bm/error.hpp"

namespace bm::ckks {

int max_modulus_bits_128(std::size_t ring_degree) {
  switch (ring_degree) {
    case 1024: return 27;
    case 2048: return 54;
    case 4096: return 109;
    case 8192: return 218;
    case 16384: return 438;
    case 32768: return 881;
    default: return 0;
  }
}

RingParams RingParams::standard(std::size_t ring_degree, int depth, int scale_bits, int base_bits) {
  RingParams p;
  p.ring_degree = ring_degree;
  p.scale_bits = scale_bits;
  const auto base = find_ntt_primes(base_bits, ring_degree, 2);
  const auto scaled = find_ntt_primes(scale_bits, ring_degree, static_cast<std::size_t>(depth), base);
  p.modulus_chain.push_back(base[1]);
  p.modulus_chain.insert(p.modulus_chain.end(), scaled.begin(), scaled.end());
  p.special_modulus = base[0];
  return p;
}

double RingParams::total_modulus_bits() const {
  double bits = std::log2(static_cast<double>(special_modulus));
  for (auto q : modulus_chain) bits += std::log2(static_cast<double>(q));
  return bits;
}

void RingParams::validate() const {
  if (ring_degree < 4 || !std::has_single_bit(ring_degree)) {
    fail(ErrorCode::kInvalidArgument, "ring degree must be a power of two");
  }
  if (modulus_chain.size() < 2) fail(ErrorCode::kInvalidArgument, "modulus chain needs at least two primes");
  std::vector<std::uint64_t> all = modulus_chain;
  all.push_back(special_modulus);
  for (auto q : all) {
    if (!is_prime(q)) fail(ErrorCode::kInvalidPrime, std::to_string(q) + " is not prime");
    if ((q - 1) % (2 * ring_degree) != 0) {
      fail(ErrorCode::kInvalidPrime, std::to_string(q) + " does not support a negacyclic NTT of size " +
                                         std::to_string(ring_degree));
    }
    if (std::bit_width(q) > 61) fail(ErrorCode::kInvalidPrime, "primes must be below 2^61");
  }
  std::sort(all.begin(), all.end());
  if (std::adjacent_find(all.begin(), all.end()) != all.end()) fail(ErrorCode::kInvalidPrime, "duplicate prime");
  // Key switching needs P at least as large as every digit modulus.
  if (special_modulus < *std::max_element(modulus_chain.begin(), modulus_chain.end())) {
    fail(ErrorCode::kInvalidPrime, "special modulus must dominate the chain");
  }
  if (scale_bits < 20 || scale_bits > 60) fail(ErrorCode::kInvalidArgument, "scale_bits out of range");
  if (!allow_insecure) {
    const int bound = max_modulus_bits_128(ring_degree);
    if (bound == 0) {
      fail(ErrorCode::kInsecureParameters, "ring degree " + std::to_string(ring_degree) + " not in security table");
    }
    if (total_modulus_bits() > bound) {
      fail(ErrorCode::kInsecureParameters, "log2(PQ) = " + std::to_string(total_modulus_bits()) + " exceeds " +
                                               std::to_string(bound) + " for n = " + std::to_string(ring_degree));
    }
  }
}

Digest RingParams::digest() const {
  ByteWriter w;
  w.put_magic("ckks");
  w.put_u64(ring_degree);
  w.put_u32(static_cast<std::uint32_t>(modulus_chain.size()));
  for (auto q : modulus_chain) w.put_u64(q);
  w.put_u64(special_modulus);
  w.put_u32(static_cast<std::uint32_t>(scale_bits));
  return sha256(w.bytes());
}

RingContext::RingContext(RingParams params) : params_(std::move(params)) {
  params_.validate();
  digest_ = params_.digest();
  const std::size_t n = params_.ring_degree;
  for (auto q : params_.modulus_chain) moduli_.emplace_back(q);
  moduli_.emplace_back(params_.special_modulus);
  for (const auto& m : moduli_) ntt_.emplace_back(n, m);

  const int d = depth();
  inv_q_.resize(d + 1);
  for (int l = 1; l <= d; ++l) {
    for (int i = 0; i < l; ++i) {
      const auto& qi = moduli_[i];
      inv_q_[l].emplace_back(qi.inv(qi.reduce(moduli_[l].value())), qi.value());
    }
  }
  const std::uint64_t p = params_.special_modulus;
  for (int i = 0; i <= d; ++i) {
    const auto& qi = moduli_[i];
    inv_p_.emplace_back(qi.inv(qi.reduce(p)), qi.value());
    p_mod_q_.push_back(qi.reduce(p));
  }
  garner_inv_.resize(d + 1);
  for (int i = 0; i <= d; ++i) {
    const auto& qi = moduli_[i];
    std::uint64_t prod = 1;
    for (int k = 0; k < i; ++k) prod = qi.mul(prod, qi.reduce(moduli_[k].value()));
    garner_inv_[i].push_back(i == 0 ? 1 : qi.inv(prod));
  }

  exponents_ = ntt_exponents(n);
  pos_of_exp_.assign(2 * n, 0);
  for (std::size_t k = 0; k < n; ++k) pos_of_exp_[exponents_[k]] = k;
}

std::uint64_t RingContext::galois_element(std::size_t steps) const {
  const std::uint64_t two_n = 2 * n();
  std::uint64_t g = 1;
  for (std::size_t i = 0; i < steps % slots(); ++i) g = (g * 5) % two_n;
  return g;
}

void RingContext::apply_galois_ntt(std::span<const std::uint64_t> in, std::span<std::uint64_t> out,
                                   std::uint64_t g) const {
  const std::size_t n = this->n();
  const std::size_t mask = 2 * n - 1;
  for (std::size_t k = 0; k < n; ++k) {
    out[k] = in[pos_of_exp_[(exponents_[k] * g) & mask]];
  }
}

void RingContext::garner_digits(std::span<const std::uint64_t> residues, int level,
                                std::span<std::uint64_t> v) const {
  for (int i = 0; i <= level; ++i) {
    const auto& qi = moduli_[i];
    // Horner evaluation of the partial mixed-radix value mod q_i.
    std::uint64_t acc = 0;
    for (int k = i - 1; k >= 0; --k) {
      acc = qi.add(qi.mul(acc, qi.reduce(moduli_[k].value())), qi.reduce(v[k]));
    }
    v[i] = qi.mul(qi.sub(residues[i], acc), garner_inv_[i][0]);
  }
}

void RingContext::crt_to_double(const RnsPoly& coeffs, int level, std::span<double> out) const {
  const std::size_t n = this->n();
  const int l = level;
  std::vector<double> radix(l + 1);
  double r = 1.0;
  for (int i = 0; i <= l; ++i) {
    radix[i] = r;
    r *= static_cast<double>(moduli_[i].value());
  }
  // Digits of floor(Q/2) = -1/2 mod every q_i.
  std::vector<std::uint64_t> res(l + 1), half(l + 1), v(l + 1);
  for (int i = 0; i <= l; ++i) res[i] = moduli_[i].mul(moduli_[i].value() - 1, moduli_[i].inv(2));
  garner_digits(res, l, half);
  for (std::size_t c = 0; c < n; ++c) {
    for (int i = 0; i <= l; ++i) res[i] = coeffs.limb(i)[c];
    garner_digits(res, l, v);
    bool negative = false;
    for (int i = l; i >= 0; --i) {
      if (v[i] != half[i]) {
        negative = v[i] > half[i];
        break;
      }
    }
    double x = 0.0;
    if (!negative) {
      for (int i = l; i >= 0; --i) x += static_cast<double>(v[i]) * radix[i];
    } else {
      // Q - x = sum (q_i - 1 - v_i) * radix_i + 1.
      for (int i = l; i >= 0; --i) x += static_cast<double>(moduli_[i].value() - 1 - v[i]) * radix[i];
      x = -(x + 1.0);
    }
    out[c] = x;
  }
}

}  // namespace bm::ckks
