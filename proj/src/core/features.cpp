// SPDX-License-Identifier: Apache-2.0
#include "bm/core/features.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "bm/bytes.hpp"

namespace bm::core {
namespace {

void check_dim(std::span<const double> f, const PackingLayout& layout) {
  if (f.size() != layout.m) {
    fail(ErrorCode::kInvalidDim, "feature length " + std::to_string(f.size()) + ", layout m = " +
                                     std::to_string(layout.m));
  }
}

}  // namespace

std::vector<double> l2_normalize(std::span<const double> f) {
  double ss = 0.0;
  for (double x : f) ss += x * x;
  const double norm = std::sqrt(ss);
  if (!(norm > 0.0) || !std::isfinite(norm)) fail(ErrorCode::kZeroVector, "feature vector has zero norm");
  std::vector<double> out(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) out[i] = f[i] / norm;
  return out;
}

he::PlainVector prepare_enroll_vector(std::span<const double> f, const PackingLayout& layout) {
  check_dim(f, layout);
  const auto u = l2_normalize(f);
  he::PlainVector out(layout.S);
  for (std::size_t i = 0; i < layout.m; ++i) out[i] = u[i];
  return out;
}

he::PlainVector prepare_query_vector(std::span<const double> f, const PackingLayout& layout) {
  check_dim(f, layout);
  const auto u = l2_normalize(f);
  he::PlainVector out(layout.S);
  for (std::size_t p = 0; p < layout.S; ++p) out[p] = u[p % layout.m];
  return out;
}

he::PlainVector pack_set_plaintext(const PackingLayout& layout, std::size_t i,
                                   std::span<const std::vector<double>* const> units) {
  if (units.size() > layout.B) fail(ErrorCode::kCapacityExceeded, "more vectors than set capacity");
  he::PlainVector out(layout.S);
  for (std::size_t k = 0; k < units.size(); ++k) {
    if (units[k] == nullptr) continue;
    for (std::size_t j = 0; j < layout.s; ++j) out[k * layout.s + j] = (*units[k])[i * layout.s + j];
  }
  return out;
}

he::PlainVector pack_full_plaintext(const PackingLayout& layout, std::span<const std::vector<double>* const> units) {
  if (units.size() > layout.tiles) fail(ErrorCode::kCapacityExceeded, "more vectors than S / m");
  he::PlainVector out(layout.S);
  for (std::size_t k = 0; k < units.size(); ++k) {
    if (units[k] == nullptr) continue;
    for (std::size_t j = 0; j < layout.m; ++j) out[k * layout.m + j] = (*units[k])[j];
  }
  return out;
}

std::vector<double> FeatureMatrix::row(std::size_t i) const {
  std::vector<double> out(dim);
  for (std::size_t j = 0; j < dim; ++j) out[j] = data[i * dim + j];
  return out;
}

void FeatureMatrix::push(std::span<const double> v) {
  if (dim == 0) dim = v.size();
  if (v.size() != dim) fail(ErrorCode::kInvalidDim, "row length differs from matrix dimension");
  for (double x : v) data.push_back(static_cast<float>(x));
}

void write_fvec(const std::filesystem::path& path, const FeatureMatrix& fm) {
  ByteWriter w;
  w.put_magic("BMFV");
  w.put_u32(static_cast<std::uint32_t>(fm.count()));
  w.put_u32(static_cast<std::uint32_t>(fm.dim));
  for (float x : fm.data) w.put_f32(x);
  write_file(path.string(), w.bytes());
}

FeatureMatrix read_fvec(const std::filesystem::path& path) {
  const Bytes raw = read_file(path.string());
  ByteReader r(raw);
  r.expect_magic("BMFV");
  FeatureMatrix fm;
  const std::size_t count = r.u32();
  fm.dim = r.u32();
  if (fm.dim == 0) fail(ErrorCode::kInvalidDim, "fvec dimension is zero");
  if (r.remaining() != count * fm.dim * 4) fail(ErrorCode::kFormatError, "fvec size does not match header");
  fm.data.resize(count * fm.dim);
  for (auto& x : fm.data) x = r.f32();
  return fm;
}

void write_csv(const std::filesystem::path& path, const FeatureMatrix& fm) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::kIoError, "cannot write " + path.string());
  out.precision(9);
  for (std::size_t i = 0; i < fm.count(); ++i) {
    for (std::size_t j = 0; j < fm.dim; ++j) out << (j ? "," : "") << fm.data[i * fm.dim + j];
    out << '\n';
  }
}

FeatureMatrix read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIoError, "cannot read " + path.string());
  FeatureMatrix fm;
  std::string line;
  std::vector<double> row;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    row.clear();
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        fail(ErrorCode::kFormatError, "non-numeric CSV cell '" + cell + "'");
      }
    }
    fm.push(row);
  }
  return fm;
}

FeatureMatrix read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot read " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() == 4 && std::string_view(magic, 4) == "BMFV") return read_fvec(path);
  return read_csv(path);
}

}  // namespace bm::core
