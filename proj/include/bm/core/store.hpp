// SPDX-License-Identifier: Apache-2.0
//
// Server-side store of packed enrollees. One writer XOR many readers: every
// mutation swaps in a fresh immutable CipherSet, so a snapshot taken for a
// match is never disturbed by a concurrent enrollment.
#pragma once

#include <memory>
#include <shared_mutex>
#include <span>
#include <vector>

#include "bm/core/layout.hpp"

namespace bm::core {

struct CipherSet {
  std::vector<he::LeveledCiphertext> cts;  // N_in ciphertexts at level d-1, or empty
  std::vector<bool> occupied;              // B blocks

  std::size_t count() const;
};

struct StoreSnapshot {
  PackingLayout layout;
  std::vector<std::size_t> set_ids;  // occupied sets, ascending
  std::vector<std::shared_ptr<const CipherSet>> sets;
};

class EnrollmentStore {
 public:
  // `capacity` enrollees; sets = ceil(capacity / B).
  EnrollmentStore(const he::Engine& engine, PackingLayout layout, std::size_t capacity);

  const PackingLayout& layout() const { return layout_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t set_count() const { return sets_.size(); }

  // Rotate-and-add enrollment of a fresh (level d) encryption of
  // prepare_enroll_vector(f). Local index u lands in block u mod B of set u / B.
  void enroll(std::size_t index, const he::LeveledCiphertext& ct_u, const MaskSet& masks);

  // Install N_in ciphertexts (level d-1) already packed by the client with the
  // enrollees of `blocks`; added onto whatever the set already holds.
  void put_packed_set(std::size_t set, std::vector<he::LeveledCiphertext> cts, std::span<const std::size_t> blocks);

  bool occupied(std::size_t index) const;
  std::size_t enrolled() const;
  std::shared_ptr<const CipherSet> set(std::size_t t) const;
  StoreSnapshot snapshot() const;
  // One byte per local index: 1 when occupied.
  std::vector<std::uint8_t> occupancy() const;

 private:
  void check_index(std::size_t index) const;

  const he::Engine& engine_;
  PackingLayout layout_;
  std::size_t capacity_;
  mutable std::shared_mutex mu_;
  std::vector<std::shared_ptr<const CipherSet>> sets_;
};

}  // namespace bm::core
