// SPDX-License-Identifier: Apache-2.0
#include "bm/ckks/encoder.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <string>

#include "bm/error.hpp"

namespace bm::ckks {
namespace {

void bit_reverse_permute(std::vector<std::complex<double>>& v) {
  const std::size_t n = v.size();
  const int bits = std::countr_zero(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = bit_reverse(i, bits);
    if (i < j) std::swap(v[i], v[j]);
  }
}

}  // namespace

Encoder::Encoder(const RingContext& ctx) : ctx_(ctx) {
  const std::size_t slots = ctx.slots();
  const std::size_t m = 2 * ctx.n();
  rot_group_.resize(slots);
  std::size_t g = 1;
  for (std::size_t j = 0; j < slots; ++j) {
    rot_group_[j] = g;
    g = (g * 5) % m;
  }
  ksi_.resize(m + 1);
  for (std::size_t j = 0; j <= m; ++j) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(m);
    ksi_[j] = {std::cos(angle), std::sin(angle)};
  }
  // Decryption happens at level 0, so values times scale must stay well
  // inside q_0 / 2.
  const double q0_bits = std::log2(static_cast<double>(ctx.modulus(0).value()));
  magnitude_limit_ = std::exp2(q0_bits - ctx.params().scale_bits - 2);
}

void Encoder::embed(std::vector<std::complex<double>>& vals) const {
  const std::size_t size = vals.size();
  const std::size_t m = 2 * ctx_.n();
  bit_reverse_permute(vals);
  for (std::size_t len = 2; len <= size; len <<= 1) {
    const std::size_t lenh = len >> 1;
    const std::size_t lenq = len << 2;
    for (std::size_t i = 0; i < size; i += len) {
      for (std::size_t j = 0; j < lenh; ++j) {
        const std::size_t idx = (rot_group_[j] % lenq) * (m / lenq);
        const auto u = vals[i + j];
        const auto v = vals[i + j + lenh] * ksi_[idx];
        vals[i + j] = u + v;
        vals[i + j + lenh] = u - v;
      }
    }
  }
}

void Encoder::embed_inverse(std::vector<std::complex<double>>& vals) const {
  const std::size_t size = vals.size();
  const std::size_t m = 2 * ctx_.n();
  for (std::size_t len = size; len >= 2; len >>= 1) {
    const std::size_t lenh = len >> 1;
    const std::size_t lenq = len << 2;
    for (std::size_t i = 0; i < size; i += len) {
      for (std::size_t j = 0; j < lenh; ++j) {
        const std::size_t idx = (lenq - (rot_group_[j] % lenq)) * (m / lenq);
        const auto u = vals[i + j] + vals[i + j + lenh];
        const auto v = (vals[i + j] - vals[i + j + lenh]) * ksi_[idx];
        vals[i + j] = u;
        vals[i + j + lenh] = v;
      }
    }
  }
  bit_reverse_permute(vals);
  const double inv = 1.0 / static_cast<double>(size);
  for (auto& x : vals) x *= inv;
}

RnsPoly Encoder::encode(std::span<const double> v, double scale, int level) const {
  const std::size_t slots = ctx_.slots();
  const std::size_t n = ctx_.n();
  if (v.size() != slots) fail(ErrorCode::kSlotCountMismatch, "encode expects " + std::to_string(slots) + " values");
  const double limit = magnitude_limit_ * std::exp2(ctx_.params().scale_bits) / scale;
  std::vector<std::complex<double>> vals(slots);
  for (std::size_t i = 0; i < slots; ++i) {
    if (!(std::abs(v[i]) <= limit)) {
      fail(ErrorCode::kMagnitudeOverflow, "slot value " + std::to_string(v[i]) + " exceeds encoding limit");
    }
    vals[i] = {v[i], 0.0};
  }
  embed_inverse(vals);
  RnsPoly out(n, static_cast<std::size_t>(level) + 1);
  for (std::size_t i = 0; i < slots; ++i) {
    const double re = std::round(vals[i].real() * scale);
    const double im = std::round(vals[i].imag() * scale);
    if (std::abs(re) >= 0x1p62 || std::abs(im) >= 0x1p62) {
      fail(ErrorCode::kMagnitudeOverflow, "encoded coefficient exceeds 62 bits");
    }
    const auto cre = static_cast<std::int64_t>(re);
    const auto cim = static_cast<std::int64_t>(im);
    for (int l = 0; l <= level; ++l) {
      const auto& q = ctx_.modulus(l);
      out.limb(l)[i] = q.from_signed(cre);
      out.limb(l)[i + slots] = q.from_signed(cim);
    }
  }
  for (int l = 0; l <= level; ++l) ctx_.ntt(l).forward(out.limb(l));
  return out;
}

std::vector<double> Encoder::decode(std::span<const double> coeffs, double scale) const {
  const std::size_t slots = ctx_.slots();
  std::vector<std::complex<double>> vals(slots);
  for (std::size_t i = 0; i < slots; ++i) vals[i] = {coeffs[i] / scale, coeffs[i + slots] / scale};
  embed(vals);
  std::vector<double> out(slots);
  for (std::size_t i = 0; i < slots; ++i) out[i] = vals[i].real();
  return out;
}

}  // namespace bm::ckks
