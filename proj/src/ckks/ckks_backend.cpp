// SPDX-License-Identifier: Apache-2.0
#include "bm/ckks/ckks_backend.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "bm/error.hpp"

namespace bm::ckks {

using he::LeveledCiphertext;

he::SchemeParams scheme_params_for(const RingParams& ring) {
  he::SchemeParams p;
  p.slot_count = ring.slot_count();
  p.depth = ring.depth();
  p.scale_bits = ring.scale_bits;
  p.backend = he::BackendId::kCkks;
  p.security = he::SecurityProfile{ring.ring_degree, static_cast<int>(std::ceil(ring.total_modulus_bits()))};
  return p;
}

CkksEngine::CkksEngine(std::shared_ptr<const RingContext> ctx, KeySet keys, CkksOptions options)
    : he::Engine(scheme_params_for(ctx->params())),
      ctx_(std::move(ctx)),
      encoder_(*ctx_),
      keys_(std::move(keys)),
      options_(options),
      rng_(options.seed ? Prng::seeded(*options.seed) : Prng::secure()) {
  const std::size_t chain = ctx_->special_index();
  if (keys_.public_key.b.n() != ctx_->n() || keys_.public_key.b.limbs() != chain) {
    fail(ErrorCode::kKeyMismatch, "public key does not match the ring");
  }
  if (keys_.secret && keys_.secret->s.limbs() != chain + 1) fail(ErrorCode::kKeyMismatch, "secret key shape");
}

double CkksEngine::exact_scale(const LeveledCiphertext& ct) { return ct.payload_as<CkksPayload>().scale; }

const CkksPayload& CkksEngine::payload(const LeveledCiphertext& ct, std::size_t parts) const {
  const auto& p = ct.payload_as<CkksPayload>();
  if (p.params != ctx_->digest()) fail(ErrorCode::kKeyMismatch, "ciphertext from a different parameter set");
  if (p.parts.size() != parts) {
    fail(ErrorCode::kInvalidCiphertextForm,
         "expected a " + std::to_string(parts) + "-part ciphertext, got " + std::to_string(p.parts.size()));
  }
  return p;
}

std::shared_ptr<const he::CiphertextPayload> CkksEngine::do_encrypt(std::span<const double> slots, int level) const {
  const auto& ctx = *ctx_;
  const double scale = std::exp2(ctx.params().scale_bits);
  RnsPoly m = encoder_.encode(slots, scale, level);
  std::vector<std::size_t> moduli(level + 1);
  std::iota(moduli.begin(), moduli.end(), 0);

  std::vector<std::int64_t> u, e0, e1;
  {
    std::lock_guard lock(rng_mutex_);
    u = detail::sample_ternary(ctx.n(), rng_);
    e0 = detail::sample_gaussian(ctx.n(), ctx.params().error_stddev, rng_);
    e1 = detail::sample_gaussian(ctx.n(), ctx.params().error_stddev, rng_);
  }
  const RnsPoly un = detail::small_to_ntt(ctx, u, moduli);
  RnsPoly c0 = detail::small_to_ntt(ctx, e0, moduli);
  RnsPoly c1 = detail::small_to_ntt(ctx, e1, moduli);
  for (int i = 0; i <= level; ++i) {
    const auto& q = ctx.modulus(i);
    auto b = keys_.public_key.b.limb(i);
    auto a = keys_.public_key.a.limb(i);
    auto ul = un.limb(i);
    auto ml = m.limb(i);
    auto o0 = c0.limb(i);
    auto o1 = c1.limb(i);
    for (std::size_t x = 0; x < ctx.n(); ++x) {
      o0[x] = q.add(q.add(o0[x], q.mul(b[x], ul[x])), ml[x]);
      o1[x] = q.add(o1[x], q.mul(a[x], ul[x]));
    }
  }
  auto out = std::make_shared<CkksPayload>();
  out->parts.push_back(std::move(c0));
  out->parts.push_back(std::move(c1));
  out->scale = scale;
  out->params = ctx.digest();
  return out;
}

std::vector<double> CkksEngine::do_decrypt(const LeveledCiphertext& ct) const {
  if (!keys_.secret) fail(ErrorCode::kMissingSecretKey, "this engine holds evaluation keys only");
  const auto& p = ct.payload_as<CkksPayload>();
  if (p.params != ctx_->digest()) fail(ErrorCode::kKeyMismatch, "ciphertext from a different parameter set");
  const auto& ctx = *ctx_;
  const int level = ct.level();
  const auto& s = keys_.secret->s;
  RnsPoly m(ctx.n(), level + 1);
  for (int i = 0; i <= level; ++i) {
    const auto& q = ctx.modulus(i);
    auto out = m.limb(i);
    auto sl = s.limb(i);
    // Horner in s over the parts: c0 + s*(c1 + s*c2).
    auto last = p.parts.back().limb(i);
    std::copy(last.begin(), last.end(), out.begin());
    for (std::size_t k = p.parts.size() - 1; k-- > 0;) {
      auto c = p.parts[k].limb(i);
      for (std::size_t x = 0; x < ctx.n(); ++x) out[x] = q.add(q.mul(out[x], sl[x]), c[x]);
    }
    ctx.ntt(i).inverse(out);
  }
  std::vector<double> coeffs(ctx.n());
  ctx.crt_to_double(m, level, coeffs);
  return encoder_.decode(coeffs, p.scale);
}

std::shared_ptr<const he::CiphertextPayload> CkksEngine::do_add(const LeveledCiphertext& a,
                                                                const LeveledCiphertext& b) const {
  const auto& pa = payload(a);
  const auto& pb = payload(b);
  if (std::abs(pa.scale / pb.scale - 1.0) > 1e-9) fail(ErrorCode::kScaleMismatch, "exact scales differ");
  auto out = std::make_shared<CkksPayload>(pa);
  for (std::size_t k = 0; k < 2; ++k) {
    for (int i = 0; i <= a.level(); ++i) {
      const auto& q = ctx_->modulus(i);
      auto o = out->parts[k].limb(i);
      auto y = pb.parts[k].limb(i);
      for (std::size_t x = 0; x < ctx_->n(); ++x) o[x] = q.add(o[x], y[x]);
    }
  }
  return out;
}

std::shared_ptr<const he::CiphertextPayload> CkksEngine::do_mul_plain(const LeveledCiphertext& a,
                                                                      const he::PlainVector& p) const {
  const auto& pa = payload(a);
  const int level = a.level();
  const double pscale = static_cast<double>(ctx_->modulus(level).value());
  const RnsPoly pt = encoder_.encode(p.span(), pscale, level);
  auto out = std::make_shared<CkksPayload>(pa);
  for (auto& part : out->parts) {
    for (int i = 0; i <= level; ++i) {
      const auto& q = ctx_->modulus(i);
      auto o = part.limb(i);
      auto w = pt.limb(i);
      for (std::size_t x = 0; x < ctx_->n(); ++x) o[x] = q.mul(o[x], w[x]);
    }
  }
  out->scale = pa.scale * pscale;
  return out;
}

std::shared_ptr<CkksPayload> CkksEngine::tensor_payload(const LeveledCiphertext& a, const LeveledCiphertext& b) const {
  const auto& pa = payload(a);
  const auto& pb = payload(b);
  const int level = a.level();
  const std::size_t n = ctx_->n();
  auto out = std::make_shared<CkksPayload>();
  out->parts.assign(3, RnsPoly(n, level + 1));
  for (int i = 0; i <= level; ++i) {
    const auto& q = ctx_->modulus(i);
    auto a0 = pa.parts[0].limb(i);
    auto a1 = pa.parts[1].limb(i);
    auto b0 = pb.parts[0].limb(i);
    auto b1 = pb.parts[1].limb(i);
    auto d0 = out->parts[0].limb(i);
    auto d1 = out->parts[1].limb(i);
    auto d2 = out->parts[2].limb(i);
    for (std::size_t x = 0; x < n; ++x) {
      d0[x] = q.mul(a0[x], b0[x]);
      d1[x] = q.reduce(static_cast<u128>(a0[x]) * b1[x] + static_cast<u128>(a1[x]) * b0[x]);
      d2[x] = q.mul(a1[x], b1[x]);
    }
  }
  out->scale = pa.scale * pb.scale;
  out->params = ctx_->digest();
  return out;
}

LeveledCiphertext CkksEngine::tensor(const LeveledCiphertext& a, const LeveledCiphertext& b) const {
  if (a.level() != b.level()) fail(ErrorCode::kLevelMismatch, "tensor at different levels");
  if (a.level() < 1) fail(ErrorCode::kLevelExhausted, "tensor at level 0");
  return {tensor_payload(a, b), a.level(), a.scale_bits() + b.scale_bits(), slot_count()};
}

std::shared_ptr<CkksPayload> CkksEngine::relin_payload(const CkksPayload& p, int level) const {
  auto [k0, k1] = key_switch(p.parts[2], level, keys_.eval.relin);
  auto out = std::make_shared<CkksPayload>();
  out->parts.push_back(p.parts[0]);
  out->parts.push_back(p.parts[1]);
  for (int i = 0; i <= level; ++i) {
    const auto& q = ctx_->modulus(i);
    auto o0 = out->parts[0].limb(i);
    auto o1 = out->parts[1].limb(i);
    auto x0 = k0.limb(i);
    auto x1 = k1.limb(i);
    for (std::size_t x = 0; x < ctx_->n(); ++x) {
      o0[x] = q.add(o0[x], x0[x]);
      o1[x] = q.add(o1[x], x1[x]);
    }
  }
  out->scale = p.scale;
  out->params = p.params;
  return out;
}

LeveledCiphertext CkksEngine::relinearize(const LeveledCiphertext& ct) const {
  const auto& p = payload(ct, 3);
  return {relin_payload(p, ct.level()), ct.level(), ct.scale_bits(), slot_count()};
}

std::shared_ptr<const he::CiphertextPayload> CkksEngine::do_mul_ct(const LeveledCiphertext& a,
                                                                   const LeveledCiphertext& b) const {
  auto t = tensor_payload(a, b);
  return relin_payload(*t, a.level());
}

std::shared_ptr<const he::CiphertextPayload> CkksEngine::do_rotate(const LeveledCiphertext& a,
                                                                   std::size_t steps) const {
  const auto it = keys_.eval.galois.find(steps);
  if (it == keys_.eval.galois.end()) {
    fail(ErrorCode::kMissingRotationKey, "no Galois key for left rotation by " + std::to_string(steps));
  }
  const auto& pa = payload(a);
  const int level = a.level();
  const std::size_t n = ctx_->n();
  const std::uint64_t g = ctx_->galois_element(steps);
  RnsPoly c0(n, level + 1), c1(n, level + 1);
  for (int i = 0; i <= level; ++i) {
    ctx_->apply_galois_ntt(pa.parts[0].limb(i), c0.limb(i), g);
    ctx_->apply_galois_ntt(pa.parts[1].limb(i), c1.limb(i), g);
  }
  auto [k0, k1] = key_switch(c1, level, it->second);
  for (int i = 0; i <= level; ++i) {
    const auto& q = ctx_->modulus(i);
    auto o = c0.limb(i);
    auto x0 = k0.limb(i);
    for (std::size_t x = 0; x < n; ++x) o[x] = q.add(o[x], x0[x]);
  }
  auto out = std::make_shared<CkksPayload>();
  out->parts.push_back(std::move(c0));
  out->parts.push_back(std::move(k1));
  out->scale = pa.scale;
  out->params = pa.params;
  return out;
}

void CkksEngine::divide_and_drop(RnsPoly& poly, std::size_t drop_limb, std::size_t drop_modulus,
                                 std::size_t keep_limbs, bool by_special) const {
  const std::size_t n = ctx_->n();
  std::vector<std::uint64_t> top(poly.limb(drop_limb).begin(), poly.limb(drop_limb).end());
  ctx_->ntt(drop_modulus).inverse(top);
  const std::uint64_t qd = ctx_->modulus(drop_modulus).value();
  const std::uint64_t half = qd >> 1;
  std::vector<std::uint64_t> tmp(n);
  for (std::size_t i = 0; i < keep_limbs; ++i) {
    const auto& q = ctx_->modulus(i);
    const std::uint64_t qd_mod = q.reduce(qd);
    for (std::size_t x = 0; x < n; ++x) {
      // Centered representative of the dropped residue, reduced mod q_i.
      const std::uint64_t v = q.reduce(top[x]);
      tmp[x] = top[x] > half ? q.sub(v, qd_mod) : v;
    }
    ctx_->ntt(i).forward(tmp);
    const ShoupConst& inv = by_special ? ctx_->inv_p_mod(i) : ctx_->inv_q_mod(static_cast<int>(drop_modulus), i);
    auto l = poly.limb(i);
    for (std::size_t x = 0; x < n; ++x) l[x] = mul_shoup(q.sub(l[x], tmp[x]), inv, q.value());
  }
  poly.truncate(keep_limbs);
}

std::pair<RnsPoly, RnsPoly> CkksEngine::key_switch(const RnsPoly& c, int level, const KeySwitchKey& key) const {
  const auto& ctx = *ctx_;
  const std::size_t n = ctx.n();
  const std::size_t digits = static_cast<std::size_t>(level) + 1;
  const std::size_t ext = digits + 1;

  // Coefficient form of each digit, then every digit lifted to all ext moduli.
  std::vector<RnsPoly> lifted(digits, RnsPoly(n, ext));
  std::vector<std::uint64_t> coeff(n);
  for (std::size_t j = 0; j < digits; ++j) {
    auto cj = c.limb(j);
    std::copy(cj.begin(), cj.end(), coeff.begin());
    ctx.ntt(j).inverse(coeff);
    const std::uint64_t qj = ctx.modulus(j).value();
    const std::uint64_t half = qj >> 1;
    for (std::size_t t = 0; t < ext; ++t) {
      const std::size_t k = ctx.ext_index(level, t);
      auto out = lifted[j].limb(t);
      if (k == j) {
        std::copy(cj.begin(), cj.end(), out.begin());
        continue;
      }
      const auto& q = ctx.modulus(k);
      const std::uint64_t qj_mod = q.reduce(qj);
      for (std::size_t x = 0; x < n; ++x) {
        const std::uint64_t v = q.reduce(coeff[x]);
        out[x] = coeff[x] > half ? q.sub(v, qj_mod) : v;
      }
      ctx.ntt(k).forward(out);
    }
  }

  RnsPoly acc0(n, ext), acc1(n, ext);
  for (std::size_t t = 0; t < ext; ++t) {
    const std::size_t k = ctx.ext_index(level, t);
    const auto& q = ctx.modulus(k);
    auto o0 = acc0.limb(t);
    auto o1 = acc1.limb(t);
    for (std::size_t x = 0; x < n; ++x) {
      u128 s0 = 0, s1 = 0;
      for (std::size_t j = 0; j < digits; ++j) {
        const std::uint64_t d = lifted[j].limb(t)[x];
        s0 += static_cast<u128>(d) * key.b[j].limb(k)[x];
        s1 += static_cast<u128>(d) * key.a[j].limb(k)[x];
      }
      o0[x] = q.reduce(s0);
      o1[x] = q.reduce(s1);
    }
  }
  divide_and_drop(acc0, digits, ctx.special_index(), digits, true);
  divide_and_drop(acc1, digits, ctx.special_index(), digits, true);
  return {std::move(acc0), std::move(acc1)};
}

std::shared_ptr<const he::CiphertextPayload> CkksEngine::do_rescale(const LeveledCiphertext& a) const {
  const auto& pa = payload(a);
  const int level = a.level();
  auto out = std::make_shared<CkksPayload>(pa);
  for (auto& part : out->parts) {
    divide_and_drop(part, static_cast<std::size_t>(level), static_cast<std::size_t>(level),
                    static_cast<std::size_t>(level), false);
  }
  out->scale = pa.scale / static_cast<double>(ctx_->modulus(level).value());
  return out;
}

void CkksEngine::write_payload(const LeveledCiphertext& ct, ByteWriter& out) const {
  const auto& p = ct.payload_as<CkksPayload>();
  out.put_u64(p.parts.size());
  out.put_f64(p.scale);
  for (const auto& part : p.parts) out.put_u64_array(part.words());
}

std::shared_ptr<const he::CiphertextPayload> CkksEngine::read_payload(ByteReader& in, int level) const {
  auto p = std::make_shared<CkksPayload>();
  const std::uint64_t parts = in.u64();
  if (parts < 2 || parts > 3) fail(ErrorCode::kFormatError, "ciphertext part count");
  p->scale = in.f64();
  if (!(p->scale > 0.0)) fail(ErrorCode::kFormatError, "ciphertext scale");
  for (std::uint64_t k = 0; k < parts; ++k) {
    RnsPoly poly(ctx_->n(), static_cast<std::size_t>(level) + 1);
    in.u64_array(poly.words());
    for (int i = 0; i <= level; ++i) {
      for (auto v : poly.limb(i)) {
        if (v >= ctx_->modulus(i).value()) fail(ErrorCode::kFormatError, "residue out of range");
      }
    }
    p->parts.push_back(std::move(poly));
  }
  p->params = ctx_->digest();
  return p;
}

}  // namespace bm::ckks
