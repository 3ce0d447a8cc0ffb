// SPDX-License-Identifier: Apache-2.0
//
// Benchmark harness: enrol a dataset across in-process shards, run timed
// matches per N_in (and the conventional baseline), report per-stage times.
// Shards run one after another; the matching time of a query is the slowest
// shard, which is what a parallel deployment would see.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bm/core/features.hpp"
#include "bm/cost/cost_model.hpp"

namespace bm::tools {

struct Stat {
  double mean = 0.0;
  std::optional<double> std;  // sample std, present iff more than one sample
  static Stat of(const std::vector<double>& samples);
};

struct BenchRow {
  std::string label;  // "Base" or the N_in value
  std::size_t n_in = 0;
  Stat encryption, matching, decryption, network, total;
  std::size_t reps = 0;
  std::uint64_t rotations = 0;  // per query on the busiest shard
  std::uint64_t ops = 0;
  double rank1 = 0.0;  // fraction of queries whose best index is the query's own row
};

struct BenchReport {
  std::size_t S = 0, m = 0, R = 0, shards = 1, reps = 1;
  std::string backend;
  bool simulated = false;  // exact backend timed through a latency table
  std::vector<BenchRow> rows;
  std::vector<std::string> notes;  // extra footer lines

  const BenchRow* find(const std::string& label) const;
  // Deterministic: no wall-clock or host information.
  std::string to_csv() const;
  // Stages as rows, one column per configuration, then the footer.
  std::string to_markdown() const;
};

struct BenchOptions {
  std::size_t S = 8192;
  std::size_t m = 128;
  int depth = 3;
  int scale_bits = 40;
  he::BackendId backend = he::BackendId::kCkks;
  std::size_t shards = 1;
  // Enrollees per shard; by default R / shards rounded up to whole sets.
  std::optional<std::size_t> shard_capacity;
  std::size_t reps = 10;
  // Exact backend only: charge these latencies instead of measuring.
  std::optional<cost::TimingTable> timing;
  bool allow_insecure = false;
  std::uint64_t seed = 1;
};

// One row per N_in. CapacityExceeded when the data does not fit S*shards
// worth of sets; InvalidLayout for an impossible N_in.
BenchReport bench_match(const BenchOptions& opt, const core::FeatureMatrix& data,
                        const std::vector<std::size_t>& n_in_list);

// Conventional whole-vector matching as a "Base" row.
BenchRow bench_baseline_row(const BenchOptions& opt, const core::FeatureMatrix& data);

// Base next to the split method at `split_n_in`, with the ratios in the notes.
BenchReport bench_baseline(const BenchOptions& opt, const core::FeatureMatrix& data, std::size_t split_n_in);

std::string hardware_summary();

}  // namespace bm::tools
