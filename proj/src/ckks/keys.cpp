// SPDX-License-Identifier: Apache-2.0
#include "bm/ckks/keys.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bm/error.hpp"

namespace bm::ckks {
namespace detail {

std::vector<std::int64_t> sample_ternary(std::size_t n, Prng& rng) {
  std::vector<std::int64_t> out(n);
  for (auto& c : out) c = static_cast<std::int64_t>(rng.uniform_below(3)) - 1;
  return out;
}

std::vector<std::int64_t> sample_gaussian(std::size_t n, double stddev, Prng& rng) {
  std::vector<std::int64_t> out(n);
  const double bound = 6.0 * stddev;
  for (auto& c : out) {
    double x;
    do {
      x = rng.gaussian(stddev);
    } while (std::abs(x) > bound);
    c = static_cast<std::int64_t>(std::llround(x));
  }
  return out;
}

RnsPoly small_to_ntt(const RingContext& ctx, std::span<const std::int64_t> coeffs,
                     std::span<const std::size_t> moduli) {
  RnsPoly p(ctx.n(), moduli.size());
  for (std::size_t t = 0; t < moduli.size(); ++t) {
    const auto& q = ctx.modulus(moduli[t]);
    auto limb = p.limb(t);
    for (std::size_t i = 0; i < coeffs.size(); ++i) limb[i] = q.from_signed(coeffs[i]);
    ctx.ntt(moduli[t]).forward(limb);
  }
  return p;
}

RnsPoly uniform_ntt(const RingContext& ctx, std::span<const std::size_t> moduli, Prng& rng) {
  RnsPoly p(ctx.n(), moduli.size());
  for (std::size_t t = 0; t < moduli.size(); ++t) {
    const std::uint64_t q = ctx.modulus(moduli[t]).value();
    for (auto& v : p.limb(t)) v = rng.uniform_below(q);
  }
  return p;
}

}  // namespace detail

namespace {

std::vector<std::size_t> all_moduli(const RingContext& ctx) {
  std::vector<std::size_t> idx(ctx.special_index() + 1);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

std::vector<std::size_t> chain_moduli(const RingContext& ctx) {
  std::vector<std::size_t> idx(ctx.special_index());
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

// -a*s + e per limb, limbs indexed by modulus index.
RnsPoly rlwe_sample(const RingContext& ctx, const RnsPoly& a, const RnsPoly& s,
                    std::span<const std::size_t> moduli, Prng& rng) {
  const auto e = detail::sample_gaussian(ctx.n(), ctx.params().error_stddev, rng);
  RnsPoly b = detail::small_to_ntt(ctx, e, moduli);
  for (std::size_t t = 0; t < moduli.size(); ++t) {
    const auto& q = ctx.modulus(moduli[t]);
    auto bl = b.limb(t);
    auto al = a.limb(t);
    auto sl = s.limb(moduli[t]);
    for (std::size_t i = 0; i < ctx.n(); ++i) bl[i] = q.sub(bl[i], q.mul(al[i], sl[i]));
  }
  return b;
}

KeySwitchKey make_switch_key(const RingContext& ctx, const RnsPoly& s, const RnsPoly& target, Prng& rng) {
  const auto moduli = all_moduli(ctx);
  KeySwitchKey k;
  for (int j = 0; j <= ctx.depth(); ++j) {
    RnsPoly a = detail::uniform_ntt(ctx, moduli, rng);
    RnsPoly b = rlwe_sample(ctx, a, s, moduli, rng);
    const auto& qj = ctx.modulus(j);
    const std::uint64_t pj = ctx.p_mod(j);
    auto bl = b.limb(j);
    auto tl = target.limb(j);
    for (std::size_t i = 0; i < ctx.n(); ++i) bl[i] = qj.add(bl[i], qj.mul(pj, tl[i]));
    k.b.push_back(std::move(b));
    k.a.push_back(std::move(a));
  }
  return k;
}

void write_poly(ByteWriter& w, const RnsPoly& p) {
  w.put_u32(static_cast<std::uint32_t>(p.limbs()));
  w.put_u64_array(p.words());
}

RnsPoly read_poly(ByteReader& r, const RingContext& ctx, std::size_t expected_limbs) {
  const std::size_t limbs = r.u32();
  if (limbs != expected_limbs) fail(ErrorCode::kFormatError, "unexpected limb count in key");
  RnsPoly p(ctx.n(), limbs);
  r.u64_array(p.words());
  return p;
}

void write_switch_key(ByteWriter& w, const KeySwitchKey& k) {
  w.put_u32(static_cast<std::uint32_t>(k.b.size()));
  for (std::size_t j = 0; j < k.b.size(); ++j) {
    write_poly(w, k.b[j]);
    write_poly(w, k.a[j]);
  }
}

KeySwitchKey read_switch_key(ByteReader& r, const RingContext& ctx) {
  const std::size_t digits = r.u32();
  if (digits != static_cast<std::size_t>(ctx.depth()) + 1) fail(ErrorCode::kFormatError, "bad digit count");
  KeySwitchKey k;
  for (std::size_t j = 0; j < digits; ++j) {
    k.b.push_back(read_poly(r, ctx, ctx.special_index() + 1));
    k.a.push_back(read_poly(r, ctx, ctx.special_index() + 1));
  }
  return k;
}

ByteWriter key_header(const RingContext& ctx, KeyKind kind) {
  ByteWriter w;
  w.put_magic("BMK1");
  w.put_bytes(ctx.digest());
  w.put_u8(static_cast<std::uint8_t>(kind));
  return w;
}

ByteReader open_key(const RingContext& ctx, std::span<const std::uint8_t> data, KeyKind kind) {
  const KeyHeader h = read_key_header(data);
  if (h.params != ctx.digest()) fail(ErrorCode::kKeyMismatch, "key was generated for different parameters");
  if (h.kind != kind) fail(ErrorCode::kFormatError, "unexpected key kind");
  ByteReader r(data);
  r.take(4 + 32 + 1);
  return r;
}

}  // namespace

KeySet keygen(const RingContext& ctx, std::span<const std::int64_t> rotation_amounts, Prng& rng) {
  const auto moduli = all_moduli(ctx);
  const auto chain = chain_moduli(ctx);
  KeySet ks;
  const auto s_coeffs = detail::sample_ternary(ctx.n(), rng);
  SecretKey sk{detail::small_to_ntt(ctx, s_coeffs, moduli)};

  PublicKey pk;
  pk.a = detail::uniform_ntt(ctx, chain, rng);
  pk.b = rlwe_sample(ctx, pk.a, sk.s, chain, rng);

  RnsPoly s2(ctx.n(), moduli.size());
  for (std::size_t k = 0; k < moduli.size(); ++k) {
    const auto& q = ctx.modulus(k);
    auto o = s2.limb(k);
    auto si = sk.s.limb(k);
    for (std::size_t i = 0; i < ctx.n(); ++i) o[i] = q.mul(si[i], si[i]);
  }
  ks.eval.relin = make_switch_key(ctx, sk.s, s2, rng);

  std::vector<std::size_t> steps;
  for (auto r : rotation_amounts) {
    const auto s = static_cast<std::int64_t>(ctx.slots());
    const auto st = static_cast<std::size_t>(((r % s) + s) % s);
    if (st != 0) steps.push_back(st);
  }
  std::sort(steps.begin(), steps.end());
  steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
  for (auto st : steps) {
    const std::uint64_t g = ctx.galois_element(st);
    RnsPoly sg(ctx.n(), moduli.size());
    for (std::size_t k = 0; k < moduli.size(); ++k) ctx.apply_galois_ntt(sk.s.limb(k), sg.limb(k), g);
    ks.eval.galois.emplace(st, make_switch_key(ctx, sk.s, sg, rng));
  }
  ks.public_key = std::move(pk);
  ks.secret = std::move(sk);
  return ks;
}

KeyHeader read_key_header(std::span<const std::uint8_t> data) {
  ByteReader r(data);
  r.expect_magic("BMK1");
  KeyHeader h;
  auto d = r.take(32);
  std::copy(d.begin(), d.end(), h.params.begin());
  const auto kind = r.u8();
  if (kind > static_cast<std::uint8_t>(KeyKind::kGalois)) fail(ErrorCode::kFormatError, "unknown key kind");
  h.kind = static_cast<KeyKind>(kind);
  return h;
}

Bytes serialize_secret_key(const RingContext& ctx, const SecretKey& sk) {
  auto w = key_header(ctx, KeyKind::kSecret);
  write_poly(w, sk.s);
  return w.take();
}

Bytes serialize_public_key(const RingContext& ctx, const PublicKey& pk) {
  auto w = key_header(ctx, KeyKind::kPublic);
  write_poly(w, pk.b);
  write_poly(w, pk.a);
  return w.take();
}

Bytes serialize_relin_key(const RingContext& ctx, const KeySwitchKey& rk) {
  auto w = key_header(ctx, KeyKind::kRelin);
  write_switch_key(w, rk);
  return w.take();
}

Bytes serialize_galois_keys(const RingContext& ctx, const std::map<std::size_t, KeySwitchKey>& gk) {
  auto w = key_header(ctx, KeyKind::kGalois);
  w.put_u32(static_cast<std::uint32_t>(gk.size()));
  for (const auto& [steps, key] : gk) {
    w.put_u64(steps);
    write_switch_key(w, key);
  }
  return w.take();
}

SecretKey deserialize_secret_key(const RingContext& ctx, std::span<const std::uint8_t> data) {
  auto r = open_key(ctx, data, KeyKind::kSecret);
  return SecretKey{read_poly(r, ctx, ctx.special_index() + 1)};
}

PublicKey deserialize_public_key(const RingContext& ctx, std::span<const std::uint8_t> data) {
  auto r = open_key(ctx, data, KeyKind::kPublic);
  PublicKey pk;
  pk.b = read_poly(r, ctx, ctx.special_index());
  pk.a = read_poly(r, ctx, ctx.special_index());
  return pk;
}

KeySwitchKey deserialize_relin_key(const RingContext& ctx, std::span<const std::uint8_t> data) {
  auto r = open_key(ctx, data, KeyKind::kRelin);
  return read_switch_key(r, ctx);
}

std::map<std::size_t, KeySwitchKey> deserialize_galois_keys(const RingContext& ctx,
                                                            std::span<const std::uint8_t> data) {
  auto r = open_key(ctx, data, KeyKind::kGalois);
  std::map<std::size_t, KeySwitchKey> out;
  const std::size_t count = r.u32();
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t steps = r.u64();
    out.emplace(steps, read_switch_key(r, ctx));
  }
  return out;
}

}  // namespace bm::ckks
