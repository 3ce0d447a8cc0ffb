// SPDX-License-Identifier: Apache-2.0
//
// Leveled RNS-CKKS backend for the he::Engine contract.
//
// Ciphertexts live in NTT form over q_0..q_l. Key switching decomposes the
// input into its RNS digits, multiplies by a key over q_0..q_l,P and divides
// by P. Plaintext masks for mul_plain are encoded at scale q_l so that the
// following rescale restores the input scale exactly.
#pragma once

#include <memory>
#include <mutex>
#include <optional>

#include "bm/ckks/encoder.hpp"
#include "bm/ckks/keys.hpp"
#include "bm/ckks/rns.hpp"
#include "bm/he/engine.hpp"
#include "bm/rng.hpp"

namespace bm::ckks {

struct CkksPayload final : he::CiphertextPayload {
  std::vector<RnsPoly> parts;  // 2 normally, 3 straight after a tensor product
  double scale = 0.0;          // exact scale, tracked alongside the logical one
  Digest params{};
};

struct CkksOptions {
  // Per-slot agreement bound advertised to callers.
  double tolerance = 1e-3;
  // Seeded encryption randomness for reproducible tests; secure otherwise.
  std::optional<std::uint64_t> seed;
};

class CkksEngine final : public he::Engine {
 public:
  // `keys.secret` may be absent (server side); decrypt then throws.
  CkksEngine(std::shared_ptr<const RingContext> ctx, KeySet keys, CkksOptions options = {});

  const Digest& digest() const override { return ctx_->digest(); }
  double slot_tolerance() const override { return options_.tolerance; }
  bool can_decrypt() const override { return keys_.secret.has_value(); }

  const RingContext& context() const { return *ctx_; }
  const std::shared_ptr<const RingContext>& context_ptr() const { return ctx_; }
  const Encoder& encoder() const { return encoder_; }
  const KeySet& keys() const { return keys_; }
  bool has_rotation_key(std::size_t steps) const { return keys_.eval.galois.count(steps) != 0; }
  // Exact scale carried by a ckks ciphertext.
  static double exact_scale(const he::LeveledCiphertext& ct);

  // Tensor product without relinearisation: a 3-part ciphertext. Not counted.
  he::LeveledCiphertext tensor(const he::LeveledCiphertext& a, const he::LeveledCiphertext& b) const;
  // 3-part -> 2-part; InvalidCiphertextForm on any other input.
  he::LeveledCiphertext relinearize(const he::LeveledCiphertext& ct) const;

  void write_payload(const he::LeveledCiphertext& ct, ByteWriter& out) const override;
  std::shared_ptr<const he::CiphertextPayload> read_payload(ByteReader& in, int level) const override;

 protected:
  std::shared_ptr<const he::CiphertextPayload> do_encrypt(std::span<const double> slots, int level) const override;
  std::vector<double> do_decrypt(const he::LeveledCiphertext& ct) const override;
  std::shared_ptr<const he::CiphertextPayload> do_add(const he::LeveledCiphertext& a,
                                                      const he::LeveledCiphertext& b) const override;
  std::shared_ptr<const he::CiphertextPayload> do_mul_plain(const he::LeveledCiphertext& a,
                                                            const he::PlainVector& p) const override;
  std::shared_ptr<const he::CiphertextPayload> do_mul_ct(const he::LeveledCiphertext& a,
                                                         const he::LeveledCiphertext& b) const override;
  std::shared_ptr<const he::CiphertextPayload> do_rotate(const he::LeveledCiphertext& a,
                                                         std::size_t steps) const override;
  std::shared_ptr<const he::CiphertextPayload> do_rescale(const he::LeveledCiphertext& a) const override;

 private:
  const CkksPayload& payload(const he::LeveledCiphertext& ct, std::size_t parts = 2) const;
  std::shared_ptr<CkksPayload> tensor_payload(const he::LeveledCiphertext& a, const he::LeveledCiphertext& b) const;
  std::shared_ptr<CkksPayload> relin_payload(const CkksPayload& p, int level) const;
  // Returns (ks0, ks1) over q_0..q_level with ks0 + ks1*s ~ c*s'.
  std::pair<RnsPoly, RnsPoly> key_switch(const RnsPoly& c, int level, const KeySwitchKey& key) const;
  // Drop the top limb of an NTT-form polynomial, dividing by that modulus.
  void divide_and_drop(RnsPoly& poly, std::size_t drop_limb, std::size_t drop_modulus,
                       std::size_t keep_limbs, bool by_special) const;

  std::shared_ptr<const RingContext> ctx_;
  Encoder encoder_;
  KeySet keys_;
  CkksOptions options_;
  mutable std::mutex rng_mutex_;
  mutable Prng rng_;
};

he::SchemeParams scheme_params_for(const RingParams& ring);

}  // namespace bm::ckks
