// CKKS backend: correctness against the exact backend and contract errors.
#include <cmath>
#include <random>

#include "bm/ckks/ckks_backend.hpp"
#include "bm/ckks/encoder.hpp"
#include "bm/ckks/keys.hpp"
#include "bm/he/exact_backend.hpp"
#include "doctest.h"

using namespace bm;
using namespace bm::ckks;

namespace {

std::shared_ptr<const RingContext> toy_ring(std::size_t n = 256) {
  auto p = RingParams::standard(n);
  p.allow_insecure = true;
  return std::make_shared<RingContext>(p);
}

struct Fixture {
  std::shared_ptr<const RingContext> ctx = toy_ring();
  Prng rng = Prng::seeded(42);
  KeySet keys;
  std::unique_ptr<CkksEngine> eng;
  Fixture(std::vector<std::int64_t> rots = {1, 2, 3, -1, 5, 64, 127}) {
    keys = keygen(*ctx, rots, rng);
    eng = std::make_unique<CkksEngine>(ctx, keys, CkksOptions{1e-3, 7});
  }
};

std::vector<double> random_slots(std::size_t s, std::uint64_t seed, double mag = 1.0) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> d(-mag, mag);
  std::vector<double> v(s);
  for (auto& x : v) x = d(g);
  return v;
}

double max_err(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return static_cast<ErrorCode>(0);
}

}  // namespace

TEST_CASE("encoder roundtrip without encryption") {
  auto ctx = toy_ring(64);
  Encoder enc(*ctx);
  const auto v = random_slots(32, 1);
  auto poly = enc.encode(v, std::exp2(40), 0);
  ctx->ntt(0).inverse(poly.limb(0));
  std::vector<double> coeffs(64);
  ctx->crt_to_double(poly, 0, coeffs);
  CHECK(max_err(enc.decode(coeffs, std::exp2(40)), v) < 1e-9);
}

TEST_CASE("encrypt/decrypt roundtrip at every level") {
  Fixture f;
  const auto v = random_slots(128, 2, 5.0);
  for (int level = 0; level <= 3; ++level) {
    auto ct = f.eng->encrypt_at(v, level);
    CHECK(ct.level() == level);
    CHECK(max_err(f.eng->decrypt(ct), v) < 1e-6);
  }
}

TEST_CASE("add, mul_plain, mul_ct and rescale track the exact backend") {
  Fixture f;
  he::ExactEngine ex(f.eng->params());
  const auto a = random_slots(128, 3), b = random_slots(128, 4);
  he::PlainVector mask(random_slots(128, 5));

  auto run = [&](const he::Engine& e) {
    auto ca = e.encrypt(a), cb = e.encrypt(b);
    auto s = e.add(ca, cb);                                // level 3
    auto p = e.rescale(e.mul_plain(s, mask));             // level 2
    auto q = e.rescale(e.mul_ct(p, e.rescale(e.mul_plain(cb, mask))));  // level 1
    auto r = e.rescale(e.mul_plain(q, mask));             // level 0
    return e.decrypt(r);
  };
  const auto want = run(ex);
  const auto got = run(*f.eng);
  CHECK(max_err(got, want) < 1e-3);
}

TEST_CASE("rotation moves slot p+r to p") {
  Fixture f;
  std::vector<double> v(128);
  for (std::size_t i = 0; i < 128; ++i) v[i] = static_cast<double>(i) / 128.0;
  auto ct = f.eng->encrypt(v);
  for (std::int64_t r : {1, 2, 3, 5, 64, 127, -1}) {
    const auto out = f.eng->decrypt(f.eng->rotate(ct, r));
    std::vector<double> want(128);
    for (std::size_t p = 0; p < 128; ++p) want[p] = v[he::normalize_rotation(static_cast<std::int64_t>(p) + r, 128)];
    CHECK_MESSAGE(max_err(out, want) < 1e-6, "r = " << r);
  }
  // Rotation by a multiple of S is the identity and is not counted.
  f.eng->counters().reset();
  auto same = f.eng->rotate(ct, 256);
  CHECK(same.handle() == ct.handle());
  CHECK(f.eng->counters().snapshot().total() == 0);
}

TEST_CASE("relinearisation of a tensor product") {
  Fixture f;
  const auto a = random_slots(128, 6), b = random_slots(128, 7);
  auto t = f.eng->tensor(f.eng->encrypt(a), f.eng->encrypt(b));
  // The secret-key decryption handles 3-part ciphertexts directly.
  std::vector<double> want(128);
  for (std::size_t i = 0; i < 128; ++i) want[i] = a[i] * b[i];
  CHECK(max_err(f.eng->decrypt(t), want) < 1e-3);
  auto r = f.eng->relinearize(t);
  CHECK(max_err(f.eng->decrypt(r), want) < 1e-3);
  CHECK(code_of([&] { f.eng->relinearize(r); }) == ErrorCode::kInvalidCiphertextForm);
  CHECK(code_of([&] { f.eng->add(t, t); }) == ErrorCode::kInvalidCiphertextForm);
}

TEST_CASE("contract errors") {
  Fixture f;
  const auto v = random_slots(128, 8);
  auto top = f.eng->encrypt(v);
  auto low = f.eng->encrypt_at(v, 0);
  CHECK(code_of([&] { f.eng->add(top, low); }) == ErrorCode::kLevelMismatch);
  CHECK(code_of([&] { f.eng->rotate(low, 1); }) == ErrorCode::kLevelExhausted);
  CHECK(code_of([&] { f.eng->rescale(low); }) == ErrorCode::kLevelExhausted);
  CHECK(code_of([&] { f.eng->mul_plain(low, he::PlainVector(128, 1.0)); }) == ErrorCode::kLevelExhausted);
  CHECK(code_of([&] { f.eng->rescale(top); }) == ErrorCode::kScaleMismatch);
  auto m = f.eng->mul_plain(top, he::PlainVector(128, 1.0));
  CHECK(code_of([&] { f.eng->add(m, top); }) == ErrorCode::kScaleMismatch);
  CHECK(code_of([&] { f.eng->mul_ct(m, top); }) == ErrorCode::kScaleMismatch);
  CHECK(code_of([&] { f.eng->rotate(top, 4); }) == ErrorCode::kMissingRotationKey);
  CHECK(code_of([&] { f.eng->encrypt(std::vector<double>(64)); }) == ErrorCode::kSlotCountMismatch);
  CHECK(code_of([&] { f.eng->encrypt(std::vector<double>(128, 1e9)); }) == ErrorCode::kMagnitudeOverflow);
}

TEST_CASE("operation counters record op and level") {
  Fixture f;
  auto ct = f.eng->encrypt(random_slots(128, 9));
  f.eng->counters().reset();
  auto x = f.eng->rescale(f.eng->mul_plain(f.eng->rotate(ct, 1), he::PlainVector(128, 0.5)));
  x = f.eng->add(x, x);
  const auto c = f.eng->counters().snapshot();
  CHECK(c.count(he::Op::kRot, 3) == 1);
  CHECK(c.count(he::Op::kMulP, 3) == 1);
  CHECK(c.count(he::Op::kRes, 3) == 1);
  CHECK(c.count(he::Op::kAdd, 2) == 1);
  CHECK(c.total() == 4);
}

TEST_CASE("ciphertext and key serialization") {
  Fixture f;
  const auto v = random_slots(128, 10);
  auto ct = f.eng->rescale(f.eng->mul_plain(f.eng->encrypt(v), he::PlainVector(128, 2.0)));
  const auto bytes = he::serialize(*f.eng, ct);
  auto back = he::deserialize(*f.eng, bytes);
  CHECK(back.level() == 2);
  CHECK(max_err(f.eng->decrypt(back), f.eng->decrypt(ct)) == 0.0);

  // Evaluation-only engine rebuilt from serialized keys.
  KeySet pub;
  pub.public_key = deserialize_public_key(*f.ctx, serialize_public_key(*f.ctx, f.keys.public_key));
  pub.eval.relin = deserialize_relin_key(*f.ctx, serialize_relin_key(*f.ctx, f.keys.eval.relin));
  pub.eval.galois = deserialize_galois_keys(*f.ctx, serialize_galois_keys(*f.ctx, f.keys.eval.galois));
  CkksEngine server(f.ctx, pub);
  CHECK_FALSE(server.can_decrypt());
  auto rotated = server.rotate(he::deserialize(server, he::serialize(*f.eng, f.eng->encrypt(v))), 1);
  CHECK(code_of([&] { server.decrypt(rotated); }) == ErrorCode::kMissingSecretKey);
  auto out = f.eng->decrypt(he::deserialize(*f.eng, he::serialize(server, rotated)));
  CHECK(std::abs(out[0] - v[1]) < 1e-6);

  const auto sk_bytes = serialize_secret_key(*f.ctx, *f.keys.secret);
  CHECK(read_key_header(sk_bytes).kind == KeyKind::kSecret);
  CHECK(code_of([&] { deserialize_public_key(*f.ctx, sk_bytes); }) == ErrorCode::kFormatError);

  auto other = toy_ring(128);
  CHECK(code_of([&] { deserialize_secret_key(*other, sk_bytes); }) == ErrorCode::kKeyMismatch);
}

TEST_CASE("ciphertexts from another parameter set are rejected") {
  Fixture f;
  auto p = RingParams::standard(256, 3, 38);
  p.allow_insecure = true;
  auto ctx2 = std::make_shared<RingContext>(p);
  auto rng = Prng::seeded(1);
  CkksEngine other(ctx2, keygen(*ctx2, {}, rng));
  auto ct = other.encrypt(random_slots(128, 11));
  CHECK(code_of([&] { he::deserialize(*f.eng, he::serialize(other, ct)); }) == ErrorCode::kKeyMismatch);
  CHECK(code_of([&] { f.eng->decrypt(ct); }) == ErrorCode::kKeyMismatch);
}
