// SPDX-License-Identifier: Apache-2.0
//
// Slot geometry for split-and-packed matching. A feature vector of dimension m
// is cut into N_in sub-parts of s = m / N_in slots; one ciphertext set (N_in
// ciphertexts) holds B = S / s enrollees, enrollee k owning block
// [k*s, (k+1)*s) of every ciphertext in the set.
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "bm/he/engine.hpp"

namespace bm::core {

struct PackingLayout {
  std::size_t S = 0;
  std::size_t m = 0;
  std::size_t n_in = 0;
  std::size_t s = 0;      // block size m / N_in
  std::size_t B = 0;      // set capacity S / s
  std::size_t tiles = 0;  // S / m

  // Throws InvalidLayout unless S, m, N_in are powers of two, m | S, N_in | m.
  static PackingLayout make(std::size_t S, std::size_t m, std::size_t n_in);

  int log_s() const;
  int log_n_in() const;
  friend bool operator==(const PackingLayout&, const PackingLayout&) = default;
};

struct MaskSet {
  std::vector<he::PlainVector> enroll;  // E_i: block i only
  std::vector<he::PlainVector> expand;  // X_i: block i of every m-period
  he::PlainVector score;                // M: p mod s == 0
  // shifted[r]: p mod s == r, used by compression after a right shift by r.
  std::vector<he::PlainVector> shifted;
};

MaskSet make_masks(const PackingLayout& layout);

// Signed stride of step j of the expansion ladder for output i: s*2^j,
// negated (right rotation) when bit j of i is set.
std::int64_t expansion_stride(const PackingLayout& layout, std::size_t i, int j);

// Rotation amounts (signed, left-positive) the server needs.
struct RotationNeeds {
  bool matching = true;     // expansion + HE-C3 ladder + compression
  bool enrollment = false;  // server-side rotate-and-add enrollment
};
std::vector<std::int64_t> rotation_set(const PackingLayout& layout, RotationNeeds needs = {});
// log2(m) prefix-sum ladder of the conventional single-split baseline.
std::vector<std::int64_t> conventional_rotation_set(std::size_t m);

}  // namespace bm::core
