// SPDX-License-Identifier: Apache-2.0
//
// Analytical matching-time model: per-op latencies by level, the three stage
// formulas, their sum F(N_in), and helpers to pick and sanity-check N_in.
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bm/he/engine.hpp"

namespace bm::cost {

struct Timing {
  double mean_ms = 0.0;
  std::optional<double> std_ms;
};

class TimingTable {
 public:
  void set(he::Op op, int level, double mean_ms, std::optional<double> std_ms = std::nullopt);
  bool has(he::Op op, int level) const { return entries_.count({op, level}) != 0; }
  // Mean latency; a level below the lowest tabulated one uses the lowest.
  double at(he::Op op, int level) const;
  const Timing& entry(he::Op op, int level) const;
  std::vector<int> levels() const;
  std::size_t size() const { return entries_.size(); }
  TimingTable scaled(double c) const;

  // Reference N = 8192 measurements (levels 1..3).
  static TimingTable reference();

  // CSV with header op,level,mean_ms,std_ms (std may be empty).
  std::string to_csv() const;
  static TimingTable from_csv(const std::string& text);
  void save(const std::string& path) const;
  static TimingTable load(const std::string& path);
  // Rows l = max..min, columns Add MulC MulP Rot Res, "mean (std)".
  std::string to_markdown() const;

 private:
  std::map<std::pair<he::Op, int>, Timing> entries_;
};

struct CostBreakdown {
  double expansion_ms = 0.0;
  double matching_ms = 0.0;
  double compression_ms = 0.0;
  double total_ms = 0.0;
  std::size_t n_in = 0;
  double m_prime = 0.0;
};

// N_in*(MulP_l + Res_l) + N_in*log2(N_in)*(Res_{l-1} + MulC_{l-1}).
// `short_log_term` drops the leading N_in on the log term. InvalidNin
// unless N_in is a power of two.
double expansion_cost(const TimingTable& tt, std::size_t n_in, int level = 3, bool short_log_term = false);
// m' = m*R/S; InvalidGeometry unless m' >= N_in.
double matching_cost(const TimingTable& tt, std::size_t m, std::size_t R, std::size_t S, std::size_t n_in);
double compression_cost(const TimingTable& tt, std::size_t m, std::size_t R, std::size_t S, std::size_t n_in);
CostBreakdown total_F(const TimingTable& tt, std::size_t m, std::size_t R, std::size_t S, std::size_t n_in);

// Power-of-two candidates in [2, m'] when `candidates` is empty. Ties go to
// the smaller N_in.
std::size_t optimal_nin(const TimingTable& tt, std::size_t m, std::size_t R, std::size_t S,
                        std::vector<std::size_t> candidates = {});

// F with ceilings dropped and X real.
double continuous_F(const TimingTable& tt, double m_prime, double x);

struct BracketResult {
  double x_min = 0.0;
  double lower = 0.0;  // m'^(1/3)
  double upper = 0.0;  // m'^(1/2)
  bool bracket_ok = false;
  bool convex = false;               // all second differences on the grid > 0
  std::size_t best_pow2 = 0;         // discrete argmin of total_F over powers of two
  bool best_pow2_adjacent = false;   // best_pow2 is floor or ceil power of two of x_min
};
// Requires m' >= 4; dense log-space grid (step 1e-3) plus golden-section refinement.
BracketResult bracket_check(const TimingTable& tt, double m_prime);

// Sum over (op, level) of count * mean.
double predict_from_counts(const he::OpCounts& counts, const TimingTable& tt);

// Wall-clock mean/std per op at levels 1..min(3, depth) on random ciphertexts.
// BackendUnavailable unless `engine` is a ckks engine with a rotation key.
TimingTable calibrate(const he::Engine& engine, int reps = 30);

}  // namespace bm::cost
