// SPDX-License-Identifier: Apache-2.0
#include "bm/tools/dataset.hpp"

#include <bit>

#include "bm/rng.hpp"

namespace bm::tools {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

core::FeatureMatrix gen_dataset(std::size_t count, std::size_t m, std::uint64_t seed) {
  if (count == 0) fail(ErrorCode::kInvalidDim, "count must be >= 1");
  if (m < 2 || !std::has_single_bit(m)) fail(ErrorCode::kInvalidDim, "m must be a power of two >= 2");
  core::FeatureMatrix fm;
  fm.dim = m;
  fm.data.reserve(count * m);
  std::vector<double> v(m);
  for (std::size_t i = 0; i < count; ++i) {
    Prng rng = Prng::seeded(splitmix64(seed ^ splitmix64(i)));
    for (auto& x : v) x = rng.gaussian(1.0);
    fm.push(core::l2_normalize(v));
  }
  return fm;
}

void normalize_rows(core::FeatureMatrix& fm) {
  for (std::size_t i = 0; i < fm.count(); ++i) {
    const auto u = core::l2_normalize(fm.row(i));
    for (std::size_t j = 0; j < fm.dim; ++j) fm.data[i * fm.dim + j] = static_cast<float>(u[j]);
  }
}

}  // namespace bm::tools
