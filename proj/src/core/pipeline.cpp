// SPDX-License-Identifier: Apache-2.0
#include "bm/core/pipeline.hpp"

#include <cmath>
#include <string>

#include "bm/he/exact_backend.hpp"

namespace bm::core {
namespace {

void expect_level(const he::LeveledCiphertext& ct, int level, const char* what) {
  if (ct.level() != level) {
    fail(ErrorCode::kLevelMismatch, std::string(what) + " expected at level " + std::to_string(level) + ", got " +
                                        std::to_string(ct.level()));
  }
}

void check_periodic(const he::LeveledCiphertext& query, const PackingLayout& layout) {
  const auto& v = he::ExactEngine::peek(query);
  for (std::size_t p = layout.m; p < v.size(); ++p) {
    if (v[p] != v[p - layout.m]) {
      fail(ErrorCode::kNotPeriodic, "query slot " + std::to_string(p) + " differs from slot " +
                                        std::to_string(p - layout.m));
    }
  }
}

he::LeveledCiphertext prefix_sum(const he::Engine& engine, he::LeveledCiphertext c, std::size_t width) {
  for (std::size_t step = 1; step < width; step <<= 1) {
    c = engine.add(engine.rotate(c, static_cast<std::int64_t>(step)), c);
  }
  return c;
}

}  // namespace

std::vector<he::LeveledCiphertext> expand_query(const he::Engine& engine, const he::LeveledCiphertext& query,
                                                const PackingLayout& layout, const MaskSet& masks,
                                                ExpandOptions options) {
  expect_level(query, engine.depth(), "query");
  if (options.check_periodic && engine.backend() == he::BackendId::kExact) check_periodic(query, layout);
  std::vector<he::LeveledCiphertext> out;
  out.reserve(layout.n_in);
  for (std::size_t i = 0; i < layout.n_in; ++i) {
    auto c = engine.rescale(engine.mul_plain(query, masks.expand[i]));
    for (int j = 0; j < layout.log_n_in(); ++j) c = engine.add(engine.rotate(c, expansion_stride(layout, i, j)), c);
    out.push_back(std::move(c));
  }
  return out;
}

he::LeveledCiphertext match_set(const he::Engine& engine, std::span<const he::LeveledCiphertext> expanded,
                                std::span<const he::LeveledCiphertext> stored, const PackingLayout& layout) {
  if (expanded.size() != layout.n_in || stored.size() != layout.n_in) {
    fail(ErrorCode::kInvalidArgument, "match_set needs N_in expanded and N_in stored ciphertexts");
  }
  he::LeveledCiphertext acc;
  for (std::size_t i = 0; i < layout.n_in; ++i) {
    if (expanded[i].level() != stored[i].level()) {
      fail(ErrorCode::kLevelMismatch, "expanded query and stored set at different levels");
    }
    auto prod = engine.rescale(engine.mul_ct(expanded[i], stored[i]));
    acc = acc.valid() ? engine.add(acc, prod) : prod;
  }
  return prefix_sum(engine, std::move(acc), layout.s);
}

std::vector<he::LeveledCiphertext> compress(const he::Engine& engine, std::span<const he::LeveledCiphertext> results,
                                            const PackingLayout& layout, const MaskSet& masks) {
  std::vector<he::LeveledCiphertext> out;
  for (std::size_t t = 0; t < results.size(); ++t) {
    if (t > 0) expect_level(results[t], results[0].level(), "set result");
    const std::size_t r = t % layout.s;
    // Shift first: the result still has a level to spend, the packed one does not.
    auto shifted = engine.rotate(results[t], -static_cast<std::int64_t>(r));
    auto c = engine.rescale(engine.mul_plain(shifted, masks.shifted[r]));
    if (r == 0) {
      out.push_back(std::move(c));
    } else {
      out.back() = engine.add(out.back(), c);
    }
  }
  return out;
}

std::map<std::uint64_t, double> extract_scores(std::span<const std::vector<double>> packed,
                                               const ResultDescriptor& desc) {
  const auto& l = desc.layout;
  std::map<std::uint64_t, double> scores;
  for (std::size_t t = 0; t < desc.set_ids.size(); ++t) {
    const std::size_t which = t / l.s;
    if (which >= packed.size()) fail(ErrorCode::kFormatError, "fewer packed results than the descriptor lists");
    const auto& v = packed[which];
    if (v.size() != l.S) fail(ErrorCode::kSlotCountMismatch, "packed result length");
    for (std::size_t k = 0; k < l.B; ++k) {
      if (!desc.occupied[t][k]) continue;
      scores[desc.index_offset + desc.set_ids[t] * l.B + k] = v[k * l.s + t % l.s];
    }
  }
  return scores;
}

MatchResult decide(std::map<std::uint64_t, double> scores, double theta) {
  if (!std::isfinite(theta)) fail(ErrorCode::kInvalidArgument, "threshold must be finite");
  MatchResult r;
  r.threshold = theta;
  for (const auto& [g, score] : scores) {
    if (!r.best_index || score > r.best_score) {
      r.best_index = g;
      r.best_score = score;
    }
  }
  r.accepted = r.best_index.has_value() && r.best_score >= theta;
  r.scores = std::move(scores);
  return r;
}

PackedResult match_store(const he::Engine& engine, const he::LeveledCiphertext& query, const StoreSnapshot& snap,
                         const MaskSet& masks, ExpandOptions options) {
  PackedResult out;
  out.descriptor.layout = snap.layout;
  out.descriptor.set_ids = snap.set_ids;
  for (const auto& s : snap.sets) out.descriptor.occupied.push_back(s->occupied);
  if (snap.sets.empty()) return out;
  const auto expanded = expand_query(engine, query, snap.layout, masks, options);
  std::vector<he::LeveledCiphertext> results;
  results.reserve(snap.sets.size());
  for (const auto& s : snap.sets) results.push_back(match_set(engine, expanded, s->cts, snap.layout));
  out.packed = compress(engine, results, snap.layout, masks);
  return out;
}

std::vector<he::LeveledCiphertext> conventional_match(const he::Engine& engine, const he::LeveledCiphertext& query,
                                                      std::span<const he::LeveledCiphertext> store,
                                                      std::size_t m) {
  const auto layout = PackingLayout::make(engine.slot_count(), m, 1);
  std::vector<he::LeveledCiphertext> out;
  out.reserve(store.size());
  for (const auto& ct : store) out.push_back(match_set(engine, std::span(&query, 1), std::span(&ct, 1), layout));
  return out;
}

std::map<std::uint64_t, double> extract_conventional(std::span<const std::vector<double>> results, std::size_t m,
                                                     std::size_t enrolled) {
  std::map<std::uint64_t, double> scores;
  if (results.empty()) return scores;
  const std::size_t per = results[0].size() / m;
  for (std::size_t u = 0; u < enrolled; ++u) {
    const std::size_t j = u / per;
    if (j >= results.size()) fail(ErrorCode::kFormatError, "fewer baseline results than enrollees");
    scores[u] = results[j][(u % per) * m];
  }
  return scores;
}

}  // namespace bm::core
