// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "bm/core/features.hpp"

namespace bm::tools {

// `count` i.i.d. unit vectors uniform on the sphere S^(m-1). Row i depends only
// on (seed, i), so any slice of the output is reproducible on its own.
// InvalidDim unless count >= 1 and m is a power of two.
core::FeatureMatrix gen_dataset(std::size_t count, std::size_t m, std::uint64_t seed);

// L2-normalise every row in place (ZeroVector on an all-zero row).
void normalize_rows(core::FeatureMatrix& fm);

}  // namespace bm::tools
