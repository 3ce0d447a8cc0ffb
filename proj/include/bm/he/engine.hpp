// SPDX-License-Identifier: Apache-2.0
//
// Leveled homomorphic-encryption operation contract.
//
// A ciphertext encrypts S real slots at some level l in [0, depth]. Fresh
// encryptions sit at the top level; every rescale consumes one level. Scale
// bookkeeping is logical: a ciphertext is either at the base encoding scale
// (scale_bits) or, straight after a multiplication, at twice that. Every
// multiplication must be followed by a rescale before the next one.
//
// Slot indices are 0-based; rotate(ct, r) moves slot (p + r) mod S to p.
#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "bm/bytes.hpp"
#include "bm/error.hpp"
#include "bm/hash.hpp"

namespace bm::he {

enum class BackendId : std::uint8_t { kExact = 0, kCkks = 1 };

std::string_view to_string(BackendId id);
BackendId backend_from_string(std::string_view name);

struct SecurityProfile {
  std::size_t ring_degree = 0;
  int total_modulus_bits = 0;
};

struct SchemeParams {
  std::size_t slot_count = 0;
  int depth = 3;
  int scale_bits = 40;
  BackendId backend = BackendId::kExact;
  std::optional<SecurityProfile> security;

  // Throws InvalidArgument / InsecureParameters.
  void validate() const;
};

enum class Op : std::uint8_t { kAdd = 0, kMulC, kMulP, kRot, kRes };
inline constexpr int kNumOps = 5;
inline constexpr Op kAllOps[kNumOps] = {Op::kAdd, Op::kMulC, Op::kMulP, Op::kRot, Op::kRes};

std::string_view to_string(Op op);
Op op_from_string(std::string_view name);

// Plain snapshot of operation counts, indexed by (op, level at call time).
class OpCounts {
 public:
  OpCounts() = default;
  explicit OpCounts(int max_level) : max_level_(max_level), counts_(kNumOps * (max_level + 1), 0) {}

  int max_level() const { return max_level_; }
  std::uint64_t count(Op op, int level) const;
  std::uint64_t& at(Op op, int level);
  std::uint64_t total(Op op) const;
  std::uint64_t total() const;

  friend OpCounts operator-(const OpCounts& a, const OpCounts& b);
  friend bool operator==(const OpCounts&, const OpCounts&) = default;

 private:
  int max_level_ = -1;
  std::vector<std::uint64_t> counts_;
};

// Live counters; increments are atomic so one engine can serve many threads.
class OpCounters {
 public:
  explicit OpCounters(int max_level);

  void record(Op op, int level);
  OpCounts snapshot() const;
  void reset();

 private:
  int max_level_;
  std::unique_ptr<std::atomic<std::uint64_t>[]> counts_;
};

// Backend-specific ciphertext body. Immutable once built.
struct CiphertextPayload {
  virtual ~CiphertextPayload() = default;
};

class LeveledCiphertext {
 public:
  LeveledCiphertext() = default;
  LeveledCiphertext(std::shared_ptr<const CiphertextPayload> handle, int level, int scale_bits,
                    std::size_t slot_count)
      : handle_(std::move(handle)), level_(level), scale_bits_(scale_bits), slot_count_(slot_count) {}

  bool valid() const { return handle_ != nullptr; }
  int level() const { return level_; }
  int scale_bits() const { return scale_bits_; }
  std::size_t slot_count() const { return slot_count_; }
  const std::shared_ptr<const CiphertextPayload>& handle() const { return handle_; }

  template <class T>
  const T& payload_as() const {
    const auto* p = dynamic_cast<const T*>(handle_.get());
    if (p == nullptr) fail(ErrorCode::kInvalidCiphertextForm, "ciphertext belongs to another backend");
    return *p;
  }

 private:
  std::shared_ptr<const CiphertextPayload> handle_;
  int level_ = 0;
  int scale_bits_ = 0;
  std::size_t slot_count_ = 0;
};

class PlainVector {
 public:
  PlainVector() = default;
  explicit PlainVector(std::vector<double> slots) : slots_(std::move(slots)) {}
  explicit PlainVector(std::size_t n, double fill = 0.0) : slots_(n, fill) {}

  std::size_t size() const { return slots_.size(); }
  double& operator[](std::size_t i) { return slots_[i]; }
  double operator[](std::size_t i) const { return slots_[i]; }
  std::span<const double> span() const { return slots_; }
  const std::vector<double>& values() const { return slots_; }

  friend bool operator==(const PlainVector&, const PlainVector&) = default;

 private:
  std::vector<double> slots_;
};

class Engine {
 public:
  explicit Engine(SchemeParams params);
  virtual ~Engine() = default;
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  const SchemeParams& params() const { return params_; }
  std::size_t slot_count() const { return params_.slot_count; }
  int depth() const { return params_.depth; }
  BackendId backend() const { return params_.backend; }
  virtual const Digest& digest() const = 0;
  // Per-slot agreement bound a single op is expected to meet.
  virtual double slot_tolerance() const = 0;

  LeveledCiphertext encrypt(std::span<const double> slots) const { return encrypt_at(slots, depth()); }
  // Encrypt directly at a lower level (bulk packing on the client side).
  LeveledCiphertext encrypt_at(std::span<const double> slots, int level) const;
  std::vector<double> decrypt(const LeveledCiphertext& ct) const;
  // False for server-side engines that only hold evaluation keys.
  virtual bool can_decrypt() const = 0;

  LeveledCiphertext add(const LeveledCiphertext& a, const LeveledCiphertext& b) const;
  LeveledCiphertext mul_plain(const LeveledCiphertext& a, const PlainVector& p) const;
  LeveledCiphertext mul_ct(const LeveledCiphertext& a, const LeveledCiphertext& b) const;
  LeveledCiphertext rotate(const LeveledCiphertext& a, std::int64_t r) const;
  LeveledCiphertext rescale(const LeveledCiphertext& a) const;

  OpCounters& counters() const { return counters_; }

  // Backend payload codec used by he::serialize / he::deserialize.
  virtual void write_payload(const LeveledCiphertext& ct, ByteWriter& out) const = 0;
  virtual std::shared_ptr<const CiphertextPayload> read_payload(ByteReader& in, int level) const = 0;

 protected:
  virtual std::shared_ptr<const CiphertextPayload> do_encrypt(std::span<const double> slots, int level) const = 0;
  virtual std::vector<double> do_decrypt(const LeveledCiphertext& ct) const = 0;
  virtual std::shared_ptr<const CiphertextPayload> do_add(const LeveledCiphertext& a,
                                                          const LeveledCiphertext& b) const = 0;
  virtual std::shared_ptr<const CiphertextPayload> do_mul_plain(const LeveledCiphertext& a,
                                                                const PlainVector& p) const = 0;
  virtual std::shared_ptr<const CiphertextPayload> do_mul_ct(const LeveledCiphertext& a,
                                                             const LeveledCiphertext& b) const = 0;
  // `steps` is normalised to [1, S).
  virtual std::shared_ptr<const CiphertextPayload> do_rotate(const LeveledCiphertext& a, std::size_t steps) const = 0;
  virtual std::shared_ptr<const CiphertextPayload> do_rescale(const LeveledCiphertext& a) const = 0;

  // Hook for engines that model latency; called after each counted op.
  virtual void on_op(Op op, int level) const { (void)op, (void)level; }

 private:
  void record(Op op, int level) const;
  void check_own(const LeveledCiphertext& ct) const;

  SchemeParams params_;
  mutable OpCounters counters_;
};

// Wire/disk form: "BMC1" | params digest (32) | level u8 | scale_bits u16 |
// slot_count u32 | backend payload.
Bytes serialize(const Engine& engine, const LeveledCiphertext& ct);
LeveledCiphertext deserialize(const Engine& engine, std::span<const std::uint8_t> data);

// Normalise a signed rotation amount into [0, S).
std::size_t normalize_rotation(std::int64_t r, std::size_t slot_count);

}  // namespace bm::he
