// SPDX-License-Identifier: Apache-2.0
//
// Client-side feature preparation and the feature-vector file formats.
#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "bm/core/layout.hpp"

namespace bm::core {

// Throws ZeroVector for an all-zero (or non-finite-norm) input.
std::vector<double> l2_normalize(std::span<const double> f);

// Unit f in slots [0, m), zeros elsewhere.
he::PlainVector prepare_enroll_vector(std::span<const double> f, const PackingLayout& layout);
// Unit f tiled S/m times, so the plaintext is m-periodic.
he::PlainVector prepare_query_vector(std::span<const double> f, const PackingLayout& layout);

// Plaintext of sub-part ciphertext i of a set, built directly by the client:
// block k holds unit vector units[k][i*s .. (i+1)*s). Absent entries stay zero.
he::PlainVector pack_set_plaintext(const PackingLayout& layout, std::size_t i,
                                   std::span<const std::vector<double>* const> units);
// Whole-vector packing of the conventional baseline: block k of size m.
he::PlainVector pack_full_plaintext(const PackingLayout& layout, std::span<const std::vector<double>* const> units);

// Row-major float matrix; the in-memory form of an fvec file.
struct FeatureMatrix {
  std::size_t dim = 0;
  std::vector<float> data;

  std::size_t count() const { return dim == 0 ? 0 : data.size() / dim; }
  std::vector<double> row(std::size_t i) const;
  void push(std::span<const double> v);
};

// "BMFV" | u32 count | u32 dim | count*dim f32 little-endian.
void write_fvec(const std::filesystem::path& path, const FeatureMatrix& fm);
FeatureMatrix read_fvec(const std::filesystem::path& path);
// One comma-separated vector per line.
void write_csv(const std::filesystem::path& path, const FeatureMatrix& fm);
FeatureMatrix read_csv(const std::filesystem::path& path);
// fvec when the file starts with the magic, CSV otherwise.
FeatureMatrix read_features(const std::filesystem::path& path);

}  // namespace bm::core
