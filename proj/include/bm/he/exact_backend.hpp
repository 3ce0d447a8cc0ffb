// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <functional>
#include <vector>

#include "bm/he/engine.hpp"

namespace bm::he {

struct ExactPayload final : CiphertextPayload {
  explicit ExactPayload(std::vector<double> v) : slots(std::move(v)) {}
  std::vector<double> slots;
};

// Oracle backend: "encryption" wraps the raw slot vector and every operation
// is plain double arithmetic. Level, scale and error behaviour match the
// ckks backend, so pipelines run unchanged on either.
class ExactEngine final : public Engine {
 public:
  // Milliseconds charged for one op at a level; used for simulated timings.
  using LatencyModel = std::function<double(Op, int)>;

  explicit ExactEngine(SchemeParams params, LatencyModel latency = {});

  const Digest& digest() const override { return digest_; }
  double slot_tolerance() const override { return 1e-9; }
  bool can_decrypt() const override { return true; }

  double simulated_ms() const { return simulated_ms_.load(); }
  void reset_simulated_ms() { simulated_ms_.store(0.0); }

  // Read the slots of a ciphertext without counting a decryption.
  static const std::vector<double>& peek(const LeveledCiphertext& ct);

  void write_payload(const LeveledCiphertext& ct, ByteWriter& out) const override;
  std::shared_ptr<const CiphertextPayload> read_payload(ByteReader& in, int level) const override;

 protected:
  std::shared_ptr<const CiphertextPayload> do_encrypt(std::span<const double> slots, int level) const override;
  std::vector<double> do_decrypt(const LeveledCiphertext& ct) const override;
  std::shared_ptr<const CiphertextPayload> do_add(const LeveledCiphertext& a, const LeveledCiphertext& b) const override;
  std::shared_ptr<const CiphertextPayload> do_mul_plain(const LeveledCiphertext& a, const PlainVector& p) const override;
  std::shared_ptr<const CiphertextPayload> do_mul_ct(const LeveledCiphertext& a, const LeveledCiphertext& b) const override;
  std::shared_ptr<const CiphertextPayload> do_rotate(const LeveledCiphertext& a, std::size_t steps) const override;
  std::shared_ptr<const CiphertextPayload> do_rescale(const LeveledCiphertext& a) const override;
  void on_op(Op op, int level) const override;

 private:
  Digest digest_{};
  LatencyModel latency_;
  mutable std::atomic<double> simulated_ms_{0.0};
};

}  // namespace bm::he
