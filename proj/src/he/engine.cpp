// SPDX-License-Identifier: Apache-2.0
#include "bm/he/engine.hpp"

#include <bit>
#include <string>

namespace bm::he {

std::string_view to_string(BackendId id) { return id == BackendId::kExact ? "exact" : "ckks"; }

BackendId backend_from_string(std::string_view name) {
  if (name == "exact") return BackendId::kExact;
  if (name == "ckks") return BackendId::kCkks;
  fail(ErrorCode::kInvalidArgument, "unknown backend " + std::string(name));
}

std::string_view to_string(Op op) {
  switch (op) {
    case Op::kAdd: return "Add";
    case Op::kMulC: return "MulC";
    case Op::kMulP: return "MulP";
    case Op::kRot: return "Rot";
    case Op::kRes: return "Res";
  }
  return "?";
}

Op op_from_string(std::string_view name) {
  for (Op op : kAllOps) {
    if (to_string(op) == name) return op;
  }
  fail(ErrorCode::kFormatError, "unknown op " + std::string(name));
}

void SchemeParams::validate() const {
  if (slot_count < 2 || !std::has_single_bit(slot_count)) {
    fail(ErrorCode::kInvalidArgument, "slot count must be a power of two >= 2");
  }
  if (depth < 1 || depth > 32) fail(ErrorCode::kInvalidArgument, "depth out of range");
  if (scale_bits < 10 || scale_bits > 60) fail(ErrorCode::kInvalidArgument, "scale_bits out of range");
}

std::uint64_t OpCounts::count(Op op, int level) const {
  if (level < 0 || level > max_level_) return 0;
  return counts_[static_cast<std::size_t>(op) * (max_level_ + 1) + level];
}

std::uint64_t& OpCounts::at(Op op, int level) {
  if (level < 0 || level > max_level_) fail(ErrorCode::kInvalidArgument, "level outside counter range");
  return counts_[static_cast<std::size_t>(op) * (max_level_ + 1) + level];
}

std::uint64_t OpCounts::total(Op op) const {
  std::uint64_t t = 0;
  for (int l = 0; l <= max_level_; ++l) t += count(op, l);
  return t;
}

std::uint64_t OpCounts::total() const {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

OpCounts operator-(const OpCounts& a, const OpCounts& b) {
  if (a.max_level_ != b.max_level_) fail(ErrorCode::kInvalidArgument, "counter shapes differ");
  OpCounts d(a.max_level_);
  for (std::size_t i = 0; i < a.counts_.size(); ++i) d.counts_[i] = a.counts_[i] - b.counts_[i];
  return d;
}

OpCounters::OpCounters(int max_level)
    : max_level_(max_level),
      counts_(std::make_unique<std::atomic<std::uint64_t>[]>(kNumOps * (max_level + 1))) {
  reset();
}

void OpCounters::record(Op op, int level) {
  counts_[static_cast<std::size_t>(op) * (max_level_ + 1) + level].fetch_add(1, std::memory_order_relaxed);
}

OpCounts OpCounters::snapshot() const {
  OpCounts s(max_level_);
  for (Op op : kAllOps) {
    for (int l = 0; l <= max_level_; ++l) {
      s.at(op, l) = counts_[static_cast<std::size_t>(op) * (max_level_ + 1) + l].load(std::memory_order_relaxed);
    }
  }
  return s;
}

void OpCounters::reset() {
  for (int i = 0; i < kNumOps * (max_level_ + 1); ++i) counts_[i].store(0, std::memory_order_relaxed);
}

std::size_t normalize_rotation(std::int64_t r, std::size_t slot_count) {
  const auto s = static_cast<std::int64_t>(slot_count);
  return static_cast<std::size_t>(((r % s) + s) % s);
}

Engine::Engine(SchemeParams params) : params_(std::move(params)), counters_(params_.depth) {
  params_.validate();
}

void Engine::record(Op op, int level) const {
  counters_.record(op, level);
  on_op(op, level);
}

void Engine::check_own(const LeveledCiphertext& ct) const {
  if (!ct.valid()) fail(ErrorCode::kInvalidCiphertextForm, "empty ciphertext");
  if (ct.slot_count() != slot_count()) {
    fail(ErrorCode::kSlotCountMismatch,
         "ciphertext has " + std::to_string(ct.slot_count()) + " slots, engine " + std::to_string(slot_count()));
  }
}

LeveledCiphertext Engine::encrypt_at(std::span<const double> slots, int level) const {
  if (slots.size() != slot_count()) {
    fail(ErrorCode::kSlotCountMismatch, "plaintext length " + std::to_string(slots.size()));
  }
  if (level < 0 || level > depth()) fail(ErrorCode::kInvalidArgument, "encryption level out of range");
  return {do_encrypt(slots, level), level, params_.scale_bits, slot_count()};
}

std::vector<double> Engine::decrypt(const LeveledCiphertext& ct) const {
  check_own(ct);
  return do_decrypt(ct);
}

LeveledCiphertext Engine::add(const LeveledCiphertext& a, const LeveledCiphertext& b) const {
  check_own(a);
  check_own(b);
  if (a.level() != b.level()) {
    fail(ErrorCode::kLevelMismatch, "add at levels " + std::to_string(a.level()) + " and " + std::to_string(b.level()));
  }
  if (a.scale_bits() != b.scale_bits()) fail(ErrorCode::kScaleMismatch, "add of differently scaled ciphertexts");
  auto out = do_add(a, b);
  record(Op::kAdd, a.level());
  return {std::move(out), a.level(), a.scale_bits(), slot_count()};
}

LeveledCiphertext Engine::mul_plain(const LeveledCiphertext& a, const PlainVector& p) const {
  check_own(a);
  if (p.size() != slot_count()) fail(ErrorCode::kSlotCountMismatch, "plain vector length " + std::to_string(p.size()));
  if (a.level() < 1) fail(ErrorCode::kLevelExhausted, "mul_plain at level 0");
  if (a.scale_bits() != params_.scale_bits) fail(ErrorCode::kScaleMismatch, "mul_plain before rescale");
  auto out = do_mul_plain(a, p);
  record(Op::kMulP, a.level());
  return {std::move(out), a.level(), a.scale_bits() + params_.scale_bits, slot_count()};
}

LeveledCiphertext Engine::mul_ct(const LeveledCiphertext& a, const LeveledCiphertext& b) const {
  check_own(a);
  check_own(b);
  if (a.level() != b.level()) {
    fail(ErrorCode::kLevelMismatch, "mul_ct at levels " + std::to_string(a.level()) + " and " + std::to_string(b.level()));
  }
  if (a.level() < 1) fail(ErrorCode::kLevelExhausted, "mul_ct at level 0");
  if (a.scale_bits() != params_.scale_bits || b.scale_bits() != params_.scale_bits) {
    fail(ErrorCode::kScaleMismatch, "mul_ct before rescale");
  }
  auto out = do_mul_ct(a, b);
  record(Op::kMulC, a.level());
  return {std::move(out), a.level(), 2 * params_.scale_bits, slot_count()};
}

LeveledCiphertext Engine::rotate(const LeveledCiphertext& a, std::int64_t r) const {
  check_own(a);
  const std::size_t steps = normalize_rotation(r, slot_count());
  if (steps == 0) return a;
  if (a.level() < 1) fail(ErrorCode::kLevelExhausted, "rotate at level 0");
  auto out = do_rotate(a, steps);
  record(Op::kRot, a.level());
  return {std::move(out), a.level(), a.scale_bits(), slot_count()};
}

LeveledCiphertext Engine::rescale(const LeveledCiphertext& a) const {
  check_own(a);
  if (a.level() < 1) fail(ErrorCode::kLevelExhausted, "rescale at level 0");
  if (a.scale_bits() != 2 * params_.scale_bits) fail(ErrorCode::kScaleMismatch, "rescale without a preceding multiply");
  auto out = do_rescale(a);
  record(Op::kRes, a.level());
  return {std::move(out), a.level() - 1, params_.scale_bits, slot_count()};
}

Bytes serialize(const Engine& engine, const LeveledCiphertext& ct) {
  ByteWriter w;
  w.put_magic("BMC1");
  w.put_bytes(engine.digest());
  w.put_u8(static_cast<std::uint8_t>(ct.level()));
  w.put_u16(static_cast<std::uint16_t>(ct.scale_bits()));
  w.put_u32(static_cast<std::uint32_t>(ct.slot_count()));
  engine.write_payload(ct, w);
  return w.take();
}

LeveledCiphertext deserialize(const Engine& engine, std::span<const std::uint8_t> data) {
  ByteReader r(data);
  r.expect_magic("BMC1");
  auto digest = r.take(32);
  if (!std::equal(digest.begin(), digest.end(), engine.digest().begin())) {
    fail(ErrorCode::kKeyMismatch, "ciphertext was produced under different parameters");
  }
  const int level = r.u8();
  const int scale_bits = r.u16();
  const std::size_t slots = r.u32();
  if (slots != engine.slot_count()) fail(ErrorCode::kSlotCountMismatch, "serialized slot count differs");
  if (level > engine.depth()) fail(ErrorCode::kFormatError, "serialized level above depth");
  auto payload = engine.read_payload(r, level);
  if (!r.done()) fail(ErrorCode::kFormatError, "trailing bytes after ciphertext");
  return {std::move(payload), level, scale_bits, slots};
}

}  // namespace bm::he
