// SPDX-License-Identifier: Apache-2.0
//
// Query expansion, split cosine similarity, compression and client-side
// score extraction.
//
// Level schedule for a depth-d engine: query and enrollee at d, expanded and
// stored at d-1, per-set results at d-2, packed results at d-3.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "bm/core/layout.hpp"
#include "bm/core/store.hpp"

namespace bm::core {

struct ExpandOptions {
  // Exact backend only: reject queries that are not m-periodic (NotPeriodic).
  bool check_periodic = true;
};

// N_in ciphertexts at level d-1; output i holds query sub-part i repeated in
// every s-block. Budget per output: 1 MulP, 1 Res, log2 N_in Rot and Add.
std::vector<he::LeveledCiphertext> expand_query(const he::Engine& engine, const he::LeveledCiphertext& query,
                                                const PackingLayout& layout, const MaskSet& masks,
                                                ExpandOptions options = {});

// Sum_i rescale(expanded_i * stored_i), then a log2(s) prefix-sum ladder.
// Slot k*s of the result is the inner product for block k.
he::LeveledCiphertext match_set(const he::Engine& engine, std::span<const he::LeveledCiphertext> expanded,
                                std::span<const he::LeveledCiphertext> stored, const PackingLayout& layout);

// Interleave T per-set results into ceil(T/s) ciphertexts one level lower:
// result t's block-k score goes to slot k*s + (t mod s) of output t / s.
std::vector<he::LeveledCiphertext> compress(const he::Engine& engine, std::span<const he::LeveledCiphertext> results,
                                            const PackingLayout& layout, const MaskSet& masks);

// What a client needs to read packed results: which store set each result
// position came from and which of its blocks are occupied.
struct ResultDescriptor {
  PackingLayout layout;
  std::uint64_t index_offset = 0;  // global index of local index 0
  std::vector<std::size_t> set_ids;
  std::vector<std::vector<bool>> occupied;
};

// Score of every occupied enrollee, keyed by global index.
std::map<std::uint64_t, double> extract_scores(std::span<const std::vector<double>> packed,
                                               const ResultDescriptor& desc);

struct MatchResult {
  std::map<std::uint64_t, double> scores;
  std::optional<std::uint64_t> best_index;
  double best_score = 0.0;
  bool accepted = false;
  double threshold = 0.0;
};

// Argmax with ties going to the lowest index; accepted iff best >= theta.
MatchResult decide(std::map<std::uint64_t, double> scores, double theta);

// Server side of one query against a store snapshot.
struct PackedResult {
  std::vector<he::LeveledCiphertext> packed;
  ResultDescriptor descriptor;
};
PackedResult match_store(const he::Engine& engine, const he::LeveledCiphertext& query, const StoreSnapshot& snap,
                         const MaskSet& masks, ExpandOptions options = {});

// Conventional baseline: whole m-vectors per block (layout with N_in = 1),
// store at level d, one MulC + Res and a log2(m) ladder per stored ciphertext.
std::vector<he::LeveledCiphertext> conventional_match(const he::Engine& engine, const he::LeveledCiphertext& query,
                                                      std::span<const he::LeveledCiphertext> store,
                                                      std::size_t m);
// Score of user j*(S/m) + k sits at slot k*m of result j.
std::map<std::uint64_t, double> extract_conventional(std::span<const std::vector<double>> results, std::size_t m,
                                                     std::size_t enrolled);

}  // namespace bm::core
