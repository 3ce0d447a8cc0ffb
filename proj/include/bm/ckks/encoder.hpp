// SPDX-License-Identifier: Apache-2.0
//
// Canonical-embedding encoder. Slot j is the evaluation at zeta^{5^j}
// (zeta = exp(i*pi/n)), so the automorphism X -> X^{5^r} rotates slots left by r.
// Only real slot values are used; imaginary parts are zero.
#pragma once

#include <complex>
#include <span>
#include <vector>

#include "bm/ckks/rns.hpp"

namespace bm::ckks {

class Encoder {
 public:
  explicit Encoder(const RingContext& ctx);

  // Scaled, rounded integer coefficients of the polynomial whose slots are v.
  // Throws MagnitudeOverflow when a coefficient would not fit the level.
  RnsPoly encode(std::span<const double> v, double scale, int level) const;
  // Inverse of encode for centered real coefficients.
  std::vector<double> decode(std::span<const double> coeffs, double scale) const;

  // Largest |slot| accepted by encode at the base scale.
  double magnitude_limit() const { return magnitude_limit_; }

  // Floating embedding primitives (exposed for tests).
  void embed_inverse(std::vector<std::complex<double>>& vals) const;
  void embed(std::vector<std::complex<double>>& vals) const;

 private:
  const RingContext& ctx_;
  std::vector<std::size_t> rot_group_;
  std::vector<std::complex<double>> ksi_;
  double magnitude_limit_;
};

}  // namespace bm::ckks
