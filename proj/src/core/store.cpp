// SPDX-License-Identifier: Apache-2.0
#include "bm/core/store.hpp"

#include <mutex>
#include <string>

namespace bm::core {

std::size_t CipherSet::count() const {
  std::size_t c = 0;
  for (bool b : occupied) c += b ? 1 : 0;
  return c;
}

EnrollmentStore::EnrollmentStore(const he::Engine& engine, PackingLayout layout, std::size_t capacity)
    : engine_(engine), layout_(layout), capacity_(capacity) {
  if (layout_.S != engine.slot_count()) fail(ErrorCode::kSlotCountMismatch, "layout S differs from engine slots");
  if (engine.depth() < 3) fail(ErrorCode::kInvalidArgument, "pipeline needs depth >= 3");
  const std::size_t n = (capacity + layout_.B - 1) / layout_.B;
  auto empty = std::make_shared<CipherSet>();
  empty->occupied.assign(layout_.B, false);
  sets_.assign(n, empty);
}

void EnrollmentStore::check_index(std::size_t index) const {
  if (index >= capacity_) {
    fail(ErrorCode::kCapacityExceeded, "index " + std::to_string(index) + " beyond capacity " +
                                           std::to_string(capacity_));
  }
}

void EnrollmentStore::enroll(std::size_t index, const he::LeveledCiphertext& ct_u, const MaskSet& masks) {
  check_index(index);
  if (ct_u.level() != engine_.depth()) {
    fail(ErrorCode::kLevelMismatch, "enrollment ciphertext must be fresh (level " + std::to_string(engine_.depth()) +
                                        "), got " + std::to_string(ct_u.level()));
  }
  const std::size_t t = index / layout_.B;
  const std::size_t k = index % layout_.B;
  {
    std::shared_lock lock(mu_);
    if (sets_[t]->occupied[k]) fail(ErrorCode::kSlotOccupied, "index " + std::to_string(index) + " already enrolled");
  }

  // Heavy HE work outside the lock.
  std::vector<he::LeveledCiphertext> parts;
  for (std::size_t i = 0; i < layout_.n_in; ++i) {
    auto c = engine_.rescale(engine_.mul_plain(ct_u, masks.enroll[i]));
    // Right shift by (k - i) blocks, composed from power-of-two block strides.
    const std::size_t blocks = (k + layout_.B - i % layout_.B) % layout_.B;
    for (std::size_t j = 0; (std::size_t{1} << j) <= blocks; ++j) {
      if ((blocks >> j) & 1U) c = engine_.rotate(c, -static_cast<std::int64_t>(layout_.s << j));
    }
    parts.push_back(std::move(c));
  }

  std::unique_lock lock(mu_);
  const auto& cur = *sets_[t];
  if (cur.occupied[k]) fail(ErrorCode::kSlotOccupied, "index " + std::to_string(index) + " already enrolled");
  auto next = std::make_shared<CipherSet>(cur);
  if (next->cts.empty()) {
    next->cts = std::move(parts);
  } else {
    for (std::size_t i = 0; i < layout_.n_in; ++i) next->cts[i] = engine_.add(next->cts[i], parts[i]);
  }
  next->occupied[k] = true;
  sets_[t] = std::move(next);
}

void EnrollmentStore::put_packed_set(std::size_t t, std::vector<he::LeveledCiphertext> cts,
                                     std::span<const std::size_t> blocks) {
  if (t >= sets_.size()) fail(ErrorCode::kCapacityExceeded, "set " + std::to_string(t) + " beyond capacity");
  if (cts.size() != layout_.n_in) fail(ErrorCode::kInvalidArgument, "packed set needs N_in ciphertexts");
  for (const auto& c : cts) {
    if (c.level() != engine_.depth() - 1) fail(ErrorCode::kLevelMismatch, "packed set must be at level d-1");
  }
  std::unique_lock lock(mu_);
  const auto& cur = *sets_[t];
  for (auto k : blocks) {
    if (k >= layout_.B) fail(ErrorCode::kInvalidArgument, "block outside set");
    check_index(t * layout_.B + k);
    if (cur.occupied[k]) fail(ErrorCode::kSlotOccupied, "block " + std::to_string(k) + " of set " + std::to_string(t));
  }
  auto next = std::make_shared<CipherSet>(cur);
  if (next->cts.empty()) {
    next->cts = std::move(cts);
  } else {
    for (std::size_t i = 0; i < layout_.n_in; ++i) next->cts[i] = engine_.add(next->cts[i], cts[i]);
  }
  for (auto k : blocks) next->occupied[k] = true;
  sets_[t] = std::move(next);
}

bool EnrollmentStore::occupied(std::size_t index) const {
  check_index(index);
  std::shared_lock lock(mu_);
  return sets_[index / layout_.B]->occupied[index % layout_.B];
}

std::size_t EnrollmentStore::enrolled() const {
  std::shared_lock lock(mu_);
  std::size_t c = 0;
  for (const auto& s : sets_) c += s->count();
  return c;
}

std::shared_ptr<const CipherSet> EnrollmentStore::set(std::size_t t) const {
  std::shared_lock lock(mu_);
  return sets_.at(t);
}

StoreSnapshot EnrollmentStore::snapshot() const {
  std::shared_lock lock(mu_);
  StoreSnapshot snap;
  snap.layout = layout_;
  for (std::size_t t = 0; t < sets_.size(); ++t) {
    if (!sets_[t]->cts.empty()) {
      snap.set_ids.push_back(t);
      snap.sets.push_back(sets_[t]);
    }
  }
  return snap;
}

std::vector<std::uint8_t> EnrollmentStore::occupancy() const {
  std::shared_lock lock(mu_);
  std::vector<std::uint8_t> out(capacity_, 0);
  for (std::size_t u = 0; u < capacity_; ++u) out[u] = sets_[u / layout_.B]->occupied[u % layout_.B] ? 1 : 0;
  return out;
}

}  // namespace bm::core
