// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "bm/bytes.hpp"
#include "bm/ckks/rns.hpp"
#include "bm/rng.hpp"

namespace bm::ckks {

// All key polynomials are stored in NTT form, one limb per modulus index.
struct SecretKey {
  RnsPoly s;  // q_0..q_d, P
};

struct PublicKey {
  RnsPoly b;  // q_0..q_d
  RnsPoly a;
};

// One (b_j, a_j) pair per RNS digit j in [0, d]; each over q_0..q_d, P.
// b_j = -a_j*s + e_j + P*[j-th CRT idempotent]*s'.
struct KeySwitchKey {
  std::vector<RnsPoly> b;
  std::vector<RnsPoly> a;
};

struct EvaluationKeys {
  KeySwitchKey relin;
  // Keyed by the left rotation amount in [1, S).
  std::map<std::size_t, KeySwitchKey> galois;
};

struct KeySet {
  std::optional<SecretKey> secret;
  PublicKey public_key;
  EvaluationKeys eval;
};

// Rotation amounts are signed slot shifts (negative = right); each is stored
// under its left-rotation equivalent. Zero amounts are ignored.
KeySet keygen(const RingContext& ctx, std::span<const std::int64_t> rotation_amounts, Prng& rng);

enum class KeyKind : std::uint8_t { kSecret = 0, kPublic = 1, kRelin = 2, kGalois = 3 };

// "BMK1" | params digest (32) | kind u8 | payload.
Bytes serialize_secret_key(const RingContext& ctx, const SecretKey& sk);
Bytes serialize_public_key(const RingContext& ctx, const PublicKey& pk);
Bytes serialize_relin_key(const RingContext& ctx, const KeySwitchKey& rk);
Bytes serialize_galois_keys(const RingContext& ctx, const std::map<std::size_t, KeySwitchKey>& gk);

// Each throws KeyMismatch when the digest differs from ctx and FormatError
// when the kind byte is not the expected one.
SecretKey deserialize_secret_key(const RingContext& ctx, std::span<const std::uint8_t> data);
PublicKey deserialize_public_key(const RingContext& ctx, std::span<const std::uint8_t> data);
KeySwitchKey deserialize_relin_key(const RingContext& ctx, std::span<const std::uint8_t> data);
std::map<std::size_t, KeySwitchKey> deserialize_galois_keys(const RingContext& ctx, std::span<const std::uint8_t> data);

// Peek at the header of a key blob without decoding the payload.
struct KeyHeader {
  Digest params{};
  KeyKind kind{};
};
KeyHeader read_key_header(std::span<const std::uint8_t> data);

namespace detail {
// Sampling helpers shared by keygen and encryption.
std::vector<std::int64_t> sample_ternary(std::size_t n, Prng& rng);
std::vector<std::int64_t> sample_gaussian(std::size_t n, double stddev, Prng& rng);
// Small signed coefficients -> NTT form over the given modulus indices.
RnsPoly small_to_ntt(const RingContext& ctx, std::span<const std::int64_t> coeffs,
                     std::span<const std::size_t> moduli);
RnsPoly uniform_ntt(const RingContext& ctx, std::span<const std::size_t> moduli, Prng& rng);
}  // namespace detail

}  // namespace bm::ckks
