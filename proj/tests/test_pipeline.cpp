// Packing layout, enrollment, expansion, split matching and compression on the
// exact backend, checked against plain-vector oracles.
#include <cmath>
#include <random>

#include "bm/core/features.hpp"
#include "bm/core/pipeline.hpp"
#include "bm/he/exact_backend.hpp"
#include "doctest.h"

using namespace bm;
using namespace bm::core;

namespace {

he::SchemeParams exact_params(std::size_t S) {
  he::SchemeParams p;
  p.slot_count = S;
  p.backend = he::BackendId::kExact;
  return p;
}

std::vector<double> pv(const he::PlainVector& v) { return v.values(); }

std::vector<double> random_unit(std::size_t m, std::mt19937_64& g) {
  std::normal_distribution<double> d;
  std::vector<double> v(m);
  for (auto& x : v) x = d(g);
  return l2_normalize(v);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
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

TEST_CASE("layout geometry") {
  auto l = PackingLayout::make(8192, 128, 4);
  CHECK(l.s == 32);
  CHECK(l.B == 256);
  CHECK(l.tiles == 64);
  CHECK(l.s * l.B == l.S);
  CHECK(code_of([] { PackingLayout::make(8192, 96, 4); }) == ErrorCode::kInvalidLayout);
  CHECK(code_of([] { PackingLayout::make(64, 128, 4); }) == ErrorCode::kInvalidLayout);
  CHECK(code_of([] { PackingLayout::make(8192, 128, 256); }) == ErrorCode::kInvalidLayout);
  CHECK(code_of([] { PackingLayout::make(8192, 128, 3); }) == ErrorCode::kInvalidLayout);
}

TEST_CASE("mask construction") {
  auto l = PackingLayout::make(8, 4, 2);
  auto ms = make_masks(l);
  CHECK(pv(ms.expand[0]) == std::vector<double>{1, 1, 0, 0, 1, 1, 0, 0});
  CHECK(pv(ms.expand[1]) == std::vector<double>{0, 0, 1, 1, 0, 0, 1, 1});
  CHECK(pv(ms.enroll[0]) == std::vector<double>{1, 1, 0, 0, 0, 0, 0, 0});
  CHECK(pv(ms.enroll[1]) == std::vector<double>{0, 0, 1, 1, 0, 0, 0, 0});
  CHECK(pv(ms.score) == std::vector<double>{1, 0, 1, 0, 1, 0, 1, 0});

  for (auto [S, m, n] : {std::tuple{64, 16, 4}, {256, 32, 2}, {1024, 64, 64}, {32, 32, 1}}) {
    auto lay = PackingLayout::make(S, m, n);
    auto mk = make_masks(lay);
    for (std::size_t p = 0; p < lay.S; ++p) {
      double sum = 0, esum = 0;
      for (std::size_t i = 0; i < lay.n_in; ++i) {
        sum += mk.expand[i][p];
        esum += mk.enroll[i][p];
      }
      CHECK(sum == 1.0);
      CHECK(esum == (p < lay.m ? 1.0 : 0.0));
      CHECK(mk.score[p] == (p % lay.s == 0 ? 1.0 : 0.0));
    }
  }
}

TEST_CASE("feature preparation") {
  auto l = PackingLayout::make(8, 4, 2);
  std::vector<double> f{3, 4, 0, 0};
  CHECK(pv(prepare_enroll_vector(f, l)) == std::vector<double>{0.6, 0.8, 0, 0, 0, 0, 0, 0});
  CHECK(pv(prepare_query_vector(f, l)) == std::vector<double>{0.6, 0.8, 0, 0, 0.6, 0.8, 0, 0});
  CHECK(code_of([&] { prepare_query_vector(std::vector<double>(4, 0.0), l); }) == ErrorCode::kZeroVector);
  CHECK(code_of([&] { prepare_query_vector(std::vector<double>(5, 1.0), l); }) == ErrorCode::kInvalidDim);
  std::mt19937_64 g(1);
  auto big = PackingLayout::make(1024, 64, 4);
  std::normal_distribution<double> d;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> v(64);
    for (auto& x : v) x = d(g) * 10;
    auto e = prepare_enroll_vector(v, big);
    double ss = 0;
    for (std::size_t i = 0; i < 64; ++i) ss += e[i] * e[i];
    CHECK(std::abs(ss - 1.0) < 1e-12);
    auto q = prepare_query_vector(v, big);
    for (std::size_t p = 64; p < 1024; ++p) CHECK(q[p] == q[p - 64]);
  }
}

TEST_CASE("enrollment places sub-parts at their blocks") {
  he::ExactEngine eng(exact_params(8));
  auto l = PackingLayout::make(8, 4, 2);
  auto ms = make_masks(l);
  EnrollmentStore store(eng, l, 8);
  const std::vector<double> f{0.1, 0.2, 0.3, 0.4};
  const auto u = l2_normalize(f);
  store.enroll(1, eng.encrypt(prepare_enroll_vector(f, l).span()), ms);
  const auto set = store.set(0);
  CHECK(set->cts[0].level() == 2);
  const auto c0 = he::ExactEngine::peek(set->cts[0]);
  const auto c1 = he::ExactEngine::peek(set->cts[1]);
  const std::vector<double> w0{0, 0, u[0], u[1], 0, 0, 0, 0};
  const std::vector<double> w1{0, 0, u[2], u[3], 0, 0, 0, 0};
  for (std::size_t p = 0; p < 8; ++p) {
    CHECK(c0[p] == doctest::Approx(w0[p]).epsilon(1e-15));
    CHECK(c1[p] == doctest::Approx(w1[p]).epsilon(1e-15));
  }
  CHECK(code_of([&] { store.enroll(1, eng.encrypt(prepare_enroll_vector(f, l).span()), ms); }) ==
        ErrorCode::kSlotOccupied);
  CHECK(code_of([&] { store.enroll(8, eng.encrypt(prepare_enroll_vector(f, l).span()), ms); }) ==
        ErrorCode::kCapacityExceeded);
  auto low = eng.encrypt_at(prepare_enroll_vector(f, l).span(), 2);
  CHECK(code_of([&] { store.enroll(2, low, ms); }) == ErrorCode::kLevelMismatch);

  // Index 0: sub-part 0 needs no rotation at all.
  eng.counters().reset();
  store.enroll(0, eng.encrypt(prepare_enroll_vector(f, l).span()), ms);
  // Sub-part 1 shifts by (0 - 1) mod B = 3 blocks, composed as 1 + 2.
  CHECK(eng.counters().snapshot().total(he::Op::kRot) == 2);
}

TEST_CASE("set capacity is exactly B") {
  he::ExactEngine eng(exact_params(64));
  auto l = PackingLayout::make(64, 16, 4);  // B = 16
  auto ms = make_masks(l);
  EnrollmentStore store(eng, l, l.B);
  std::mt19937_64 g(2);
  for (std::size_t u = 0; u < l.B; ++u) store.enroll(u, eng.encrypt(prepare_enroll_vector(random_unit(16, g), l).span()), ms);
  CHECK(store.enrolled() == l.B);
  CHECK(code_of([&] { store.enroll(l.B, eng.encrypt(prepare_enroll_vector(random_unit(16, g), l).span()), ms); }) ==
        ErrorCode::kCapacityExceeded);
}

TEST_CASE("expansion worked example and slot formula") {
  he::ExactEngine eng(exact_params(8));
  auto l = PackingLayout::make(8, 4, 2);
  auto ms = make_masks(l);
  const std::vector<double> q{0.1, 0.2, 0.3, 0.4};
  const auto u = l2_normalize(q);
  auto out = expand_query(eng, eng.encrypt(prepare_query_vector(q, l).span()), l, ms);
  REQUIRE(out.size() == 2);
  CHECK(out[0].level() == 2);
  for (std::size_t p = 0; p < 8; ++p) {
    CHECK(he::ExactEngine::peek(out[0])[p] == doctest::Approx(u[p % 2]));
    CHECK(he::ExactEngine::peek(out[1])[p] == doctest::Approx(u[2 + p % 2]));
  }
  // Non-periodic input is rejected on the exact backend.
  auto bad = prepare_enroll_vector(q, l);
  CHECK(code_of([&] { expand_query(eng, eng.encrypt(bad.span()), l, ms); }) == ErrorCode::kNotPeriodic);

  std::mt19937_64 g(3);
  for (auto [S, m, n] : {std::tuple{64, 16, 4}, {256, 32, 8}, {128, 128, 16}, {64, 16, 1}, {64, 16, 16}}) {
    he::ExactEngine e(exact_params(S));
    auto lay = PackingLayout::make(S, m, n);
    auto mk = make_masks(lay);
    const auto f = random_unit(m, g);
    e.counters().reset();
    auto xs = expand_query(e, e.encrypt(prepare_query_vector(f, lay).span()), lay, mk);
    for (std::size_t i = 0; i < lay.n_in; ++i) {
      const auto& w = he::ExactEngine::peek(xs[i]);
      for (std::size_t p = 0; p < lay.S; ++p) CHECK(w[p] == doctest::Approx(f[i * lay.s + p % lay.s]).epsilon(1e-14));
    }
    const auto c = e.counters().snapshot();
    const auto log_n = static_cast<std::uint64_t>(lay.log_n_in());
    CHECK(c.total(he::Op::kMulP) == lay.n_in);
    CHECK(c.total(he::Op::kRes) == lay.n_in);
    CHECK(c.total(he::Op::kRot) == lay.n_in * log_n);
    CHECK(c.total(he::Op::kAdd) == lay.n_in * log_n);
  }
}

TEST_CASE("split matching worked example") {
  he::ExactEngine eng(exact_params(8));
  auto l = PackingLayout::make(8, 4, 2);
  auto ms = make_masks(l);
  EnrollmentStore store(eng, l, l.B);
  store.enroll(0, eng.encrypt(prepare_enroll_vector(std::vector<double>{1, 0, 0, 0}, l).span()), ms);
  store.enroll(1, eng.encrypt(prepare_enroll_vector(std::vector<double>{0, 1, 0, 0}, l).span()), ms);
  auto xs = expand_query(eng, eng.encrypt(prepare_query_vector(std::vector<double>{1, 0, 0, 0}, l).span()), l, ms);
  eng.counters().reset();
  auto r = match_set(eng, xs, store.set(0)->cts, l);
  CHECK(r.level() == 1);
  CHECK(he::ExactEngine::peek(r)[0] == doctest::Approx(1.0));
  CHECK(he::ExactEngine::peek(r)[2] == doctest::Approx(0.0));
  CHECK(eng.counters().snapshot().total(he::Op::kMulC) == l.n_in);
}

TEST_CASE("compression worked example") {
  he::ExactEngine eng(exact_params(8));
  auto l = PackingLayout::make(8, 4, 2);  // s = 2, B = 4
  auto ms = make_masks(l);
  // Garbage in the odd slots must be masked away.
  std::vector<double> set0{10, 99, 11, 99, 12, 99, 13, 99};
  std::vector<double> set1{20, -5, 21, -5, 22, -5, 23, -5};
  std::vector<he::LeveledCiphertext> results{eng.encrypt_at(set0, 1), eng.encrypt_at(set1, 1)};
  auto packed = compress(eng, results, l, ms);
  REQUIRE(packed.size() == 1);
  CHECK(packed[0].level() == 0);
  CHECK(he::ExactEngine::peek(packed[0]) == std::vector<double>{10, 20, 11, 21, 12, 22, 13, 23});

  // T = 1: mask and rescale only.
  eng.counters().reset();
  auto single = compress(eng, std::span(results.data(), 1), l, ms);
  CHECK(he::ExactEngine::peek(single[0]) == std::vector<double>{10, 0, 11, 0, 12, 0, 13, 0});
  CHECK(eng.counters().snapshot().total(he::Op::kRot) == 0);

  ResultDescriptor d{l, 0, {0, 1}, {std::vector<bool>(4, true), std::vector<bool>(4, true)}};
  std::vector<std::vector<double>> dec{he::ExactEngine::peek(packed[0])};
  auto scores = extract_scores(dec, d);
  CHECK(scores.at(0) == 10);
  CHECK(scores.at(4) == 20);
  CHECK(scores.at(3) == 13);
  CHECK(scores.at(7) == 23);
}

TEST_CASE("decide: argmax, ties and threshold") {
  auto r = decide({{3, 0.49}, {5, 0.2}}, 0.5);
  CHECK_FALSE(r.accepted);
  CHECK(*r.best_index == 3);
  auto t = decide({{7, 0.8}, {2, 0.8}, {9, 0.1}}, 0.5);
  CHECK(*t.best_index == 2);
  CHECK(t.accepted);
  auto e = decide({}, 0.0);
  CHECK_FALSE(e.best_index.has_value());
  CHECK_FALSE(e.accepted);
  CHECK(code_of([] { decide({}, std::nan("")); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("end-to-end oracle equivalence and rotation-count law") {
  std::mt19937_64 g(4);
  for (auto [S, m, n, R] : {std::tuple{256, 32, 2, 40}, {1024, 64, 4, 200}, {512, 16, 4, 300}, {256, 32, 32, 9}}) {
    he::ExactEngine eng(exact_params(S));
    auto l = PackingLayout::make(S, m, n);
    auto ms = make_masks(l);
    EnrollmentStore store(eng, l, static_cast<std::size_t>(R) + 7);
    std::vector<std::vector<double>> db;
    for (int u = 0; u < R; ++u) {
      db.push_back(random_unit(m, g));
      store.enroll(u, eng.encrypt(prepare_enroll_vector(db.back(), l).span()), ms);
    }
    const auto q = random_unit(m, g);
    auto snap = store.snapshot();
    eng.counters().reset();
    auto res = match_store(eng, eng.encrypt(prepare_query_vector(q, l).span()), snap, ms);
    const auto c = eng.counters().snapshot();
    std::vector<std::vector<double>> dec;
    for (const auto& p : res.packed) {
      CHECK(p.level() == 0);
      dec.push_back(eng.decrypt(p));
    }
    auto scores = extract_scores(dec, res.descriptor);
    REQUIRE(scores.size() == static_cast<std::size_t>(R));
    for (int u = 0; u < R; ++u) CHECK(std::abs(scores.at(u) - dot(q, db[u])) <= 1e-9);

    const std::size_t sets = snap.sets.size();
    std::size_t shifted = 0;
    for (std::size_t t = 0; t < sets; ++t) shifted += (t % l.s) != 0 ? 1 : 0;
    CHECK(c.total(he::Op::kRot) == l.n_in * l.log_n_in() + sets * l.log_s() + shifted);
    CHECK(c.total(he::Op::kMulC) == sets * l.n_in);
  }
}

TEST_CASE("conventional baseline agrees with split matching") {
  std::mt19937_64 g(5);
  const std::size_t S = 256, m = 32;
  he::ExactEngine eng(exact_params(S));
  auto l1 = PackingLayout::make(S, m, 1);
  std::vector<std::vector<double>> db;
  for (int u = 0; u < 20; ++u) db.push_back(random_unit(m, g));
  std::vector<he::LeveledCiphertext> store;
  for (std::size_t j = 0; j * l1.tiles < db.size(); ++j) {
    std::vector<const std::vector<double>*> chunk;
    for (std::size_t k = 0; k < l1.tiles && j * l1.tiles + k < db.size(); ++k) chunk.push_back(&db[j * l1.tiles + k]);
    store.push_back(eng.encrypt(pack_full_plaintext(l1, chunk).span()));
  }
  const auto q = random_unit(m, g);
  eng.counters().reset();
  auto res = conventional_match(eng, eng.encrypt(prepare_query_vector(q, l1).span()), store, m);
  CHECK(eng.counters().snapshot().total(he::Op::kRot) == store.size() * 5);
  std::vector<std::vector<double>> dec;
  for (const auto& r : res) dec.push_back(eng.decrypt(r));
  auto base = extract_conventional(dec, m, db.size());

  auto l = PackingLayout::make(S, m, 4);
  auto ms = make_masks(l);
  EnrollmentStore split(eng, l, db.size());
  for (std::size_t u = 0; u < db.size(); ++u) split.enroll(u, eng.encrypt(prepare_enroll_vector(db[u], l).span()), ms);
  auto pr = match_store(eng, eng.encrypt(prepare_query_vector(q, l).span()), split.snapshot(), ms);
  std::vector<std::vector<double>> pdec;
  for (const auto& p : pr.packed) pdec.push_back(eng.decrypt(p));
  auto scores = extract_scores(pdec, pr.descriptor);
  for (std::size_t u = 0; u < db.size(); ++u) {
    CHECK(std::abs(base.at(u) - scores.at(u)) <= 1e-9);
    CHECK(std::abs(base.at(u) - dot(q, db[u])) <= 1e-9);
  }
}

TEST_CASE("client-packed sets match rotate-and-add enrollment") {
  std::mt19937_64 g(6);
  he::ExactEngine eng(exact_params(256));
  auto l = PackingLayout::make(256, 32, 4);
  auto ms = make_masks(l);
  EnrollmentStore a(eng, l, l.B), b(eng, l, l.B);
  std::vector<std::vector<double>> db;
  std::vector<const std::vector<double>*> ptrs(l.B, nullptr);
  std::vector<std::size_t> blocks;
  for (std::size_t k = 0; k < l.B; k += 3) {
    db.push_back(random_unit(32, g));
    blocks.push_back(k);
  }
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    ptrs[blocks[j]] = &db[j];
    a.enroll(blocks[j], eng.encrypt(prepare_enroll_vector(db[j], l).span()), ms);
  }
  std::vector<he::LeveledCiphertext> cts;
  for (std::size_t i = 0; i < l.n_in; ++i) cts.push_back(eng.encrypt_at(pack_set_plaintext(l, i, ptrs).span(), 2));
  b.put_packed_set(0, cts, blocks);
  for (std::size_t i = 0; i < l.n_in; ++i) {
    const auto& x = he::ExactEngine::peek(a.set(0)->cts[i]);
    const auto& y = he::ExactEngine::peek(b.set(0)->cts[i]);
    for (std::size_t p = 0; p < l.S; ++p) CHECK(std::abs(x[p] - y[p]) < 1e-15);
  }
  CHECK(a.occupancy() == b.occupancy());
  CHECK(code_of([&] { b.put_packed_set(0, cts, blocks); }) == ErrorCode::kSlotOccupied);
}
