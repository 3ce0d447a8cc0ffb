// SPDX-License-Identifier: Apache-2.0
#include "bm/core/layout.hpp"

#include <algorithm>
#include <bit>
#include <string>

namespace bm::core {

PackingLayout PackingLayout::make(std::size_t S, std::size_t m, std::size_t n_in) {
  auto pow2 = [](std::size_t x) { return x != 0 && std::has_single_bit(x); };
  if (!pow2(S) || !pow2(m) || !pow2(n_in)) {
    fail(ErrorCode::kInvalidLayout, "S, m and N_in must be powers of two");
  }
  if (m > S) fail(ErrorCode::kInvalidLayout, "m = " + std::to_string(m) + " exceeds S = " + std::to_string(S));
  if (n_in > m) fail(ErrorCode::kInvalidLayout, "N_in = " + std::to_string(n_in) + " exceeds m");
  PackingLayout l;
  l.S = S;
  l.m = m;
  l.n_in = n_in;
  l.s = m / n_in;
  l.B = S / l.s;
  l.tiles = S / m;
  return l;
}

int PackingLayout::log_s() const { return std::countr_zero(s); }
int PackingLayout::log_n_in() const { return std::countr_zero(n_in); }

MaskSet make_masks(const PackingLayout& l) {
  MaskSet ms;
  for (std::size_t i = 0; i < l.n_in; ++i) {
    he::PlainVector e(l.S), x(l.S);
    for (std::size_t p = 0; p < l.S; ++p) {
      if (p / l.s == i) e[p] = 1.0;
      if ((p % l.m) / l.s == i) x[p] = 1.0;
    }
    ms.enroll.push_back(std::move(e));
    ms.expand.push_back(std::move(x));
  }
  for (std::size_t r = 0; r < l.s; ++r) {
    he::PlainVector v(l.S);
    for (std::size_t p = r; p < l.S; p += l.s) v[p] = 1.0;
    ms.shifted.push_back(std::move(v));
  }
  ms.score = ms.shifted[0];
  return ms;
}

std::int64_t expansion_stride(const PackingLayout& l, std::size_t i, int j) {
  const auto stride = static_cast<std::int64_t>(l.s) << j;
  return ((i >> j) & 1U) != 0 ? -stride : stride;
}

std::vector<std::int64_t> rotation_set(const PackingLayout& l, RotationNeeds needs) {
  std::vector<std::int64_t> out;
  if (needs.matching) {
    for (int j = 0; j < l.log_n_in(); ++j) {
      const auto stride = static_cast<std::int64_t>(l.s) << j;
      out.push_back(stride);
      out.push_back(-stride);
    }
    for (int j = 0; j < l.log_s(); ++j) out.push_back(std::int64_t{1} << j);
    for (std::size_t r = 1; r < l.s; ++r) out.push_back(-static_cast<std::int64_t>(r));
  }
  if (needs.enrollment) {
    for (std::size_t step = 1; step < l.B; step <<= 1) out.push_back(-static_cast<std::int64_t>(step * l.s));
  }
  // Distinct modulo S: +m/2 and -m/2 coincide when m == S.
  const auto S = static_cast<std::int64_t>(l.S);
  for (auto& r : out) r = ((r % S) + S) % S;
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  out.erase(std::remove(out.begin(), out.end(), 0), out.end());
  return out;
}

std::vector<std::int64_t> conventional_rotation_set(std::size_t m) {
  std::vector<std::int64_t> out;
  for (std::size_t r = 1; r < m; r <<= 1) out.push_back(static_cast<std::int64_t>(r));
  return out;
}

}  // namespace bm::core
