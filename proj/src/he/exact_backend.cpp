// SPDX-License-Identifier: Apache-2.0
#include "bm/he/exact_backend.hpp"

namespace bm::he {

ExactEngine::ExactEngine(SchemeParams params, LatencyModel latency)
    : Engine([&] {
        params.backend = BackendId::kExact;
        return params;
      }()),
      latency_(std::move(latency)) {
  ByteWriter w;
  w.put_magic("exact");
  w.put_u64(slot_count());
  w.put_u32(static_cast<std::uint32_t>(depth()));
  w.put_u32(static_cast<std::uint32_t>(this->params().scale_bits));
  digest_ = sha256(w.bytes());
}

const std::vector<double>& ExactEngine::peek(const LeveledCiphertext& ct) {
  return ct.payload_as<ExactPayload>().slots;
}

std::shared_ptr<const CiphertextPayload> ExactEngine::do_encrypt(std::span<const double> slots, int) const {
  return std::make_shared<ExactPayload>(std::vector<double>(slots.begin(), slots.end()));
}

std::vector<double> ExactEngine::do_decrypt(const LeveledCiphertext& ct) const { return peek(ct); }

std::shared_ptr<const CiphertextPayload> ExactEngine::do_add(const LeveledCiphertext& a,
                                                             const LeveledCiphertext& b) const {
  const auto& x = peek(a);
  const auto& y = peek(b);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return std::make_shared<ExactPayload>(std::move(out));
}

std::shared_ptr<const CiphertextPayload> ExactEngine::do_mul_plain(const LeveledCiphertext& a,
                                                                   const PlainVector& p) const {
  const auto& x = peek(a);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * p[i];
  return std::make_shared<ExactPayload>(std::move(out));
}

std::shared_ptr<const CiphertextPayload> ExactEngine::do_mul_ct(const LeveledCiphertext& a,
                                                                const LeveledCiphertext& b) const {
  const auto& x = peek(a);
  const auto& y = peek(b);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return std::make_shared<ExactPayload>(std::move(out));
}

std::shared_ptr<const CiphertextPayload> ExactEngine::do_rotate(const LeveledCiphertext& a, std::size_t steps) const {
  const auto& x = peek(a);
  const std::size_t n = x.size();
  std::vector<double> out(n);
  for (std::size_t p = 0; p < n; ++p) out[p] = x[(p + steps) % n];
  return std::make_shared<ExactPayload>(std::move(out));
}

std::shared_ptr<const CiphertextPayload> ExactEngine::do_rescale(const LeveledCiphertext& a) const {
  return a.handle();
}

void ExactEngine::on_op(Op op, int level) const {
  if (latency_) simulated_ms_.fetch_add(latency_(op, level));
}

void ExactEngine::write_payload(const LeveledCiphertext& ct, ByteWriter& out) const {
  for (double v : peek(ct)) out.put_f64(v);
}

std::shared_ptr<const CiphertextPayload> ExactEngine::read_payload(ByteReader& in, int) const {
  std::vector<double> v(slot_count());
  for (auto& x : v) x = in.f64();
  return std::make_shared<ExactPayload>(std::move(v));
}

}  // namespace bm::he
