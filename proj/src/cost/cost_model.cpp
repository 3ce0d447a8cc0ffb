// SPDX-License-Identifier: Apache-2.0
#include "bm/cost/cost_model.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "bm/bytes.hpp"
#include "bm/ckks/ckks_backend.hpp"

namespace bm::cost {

using he::Op;

void TimingTable::set(Op op, int level, double mean_ms, std::optional<double> std_ms) {
  if (!(mean_ms > 0.0)) fail(ErrorCode::kInvalidArgument, "timing entries must be positive");
  entries_[{op, level}] = Timing{mean_ms, std_ms};
}

const Timing& TimingTable::entry(Op op, int level) const {
  auto it = entries_.find({op, level});
  if (it != entries_.end()) return it->second;
  // Below the table (e.g. an Add at level 0): fall back to the lowest level.
  for (const auto& [key, t] : entries_) {
    if (key.first == op && key.second > level) return t;
  }
  fail(ErrorCode::kInvalidArgument,
       "no timing for " + std::string(he::to_string(op)) + " at level " + std::to_string(level));
}

double TimingTable::at(Op op, int level) const { return entry(op, level).mean_ms; }

std::vector<int> TimingTable::levels() const {
  std::vector<int> out;
  for (const auto& [key, t] : entries_) out.push_back(key.second);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

TimingTable TimingTable::scaled(double c) const {
  TimingTable out;
  for (const auto& [key, t] : entries_) {
    out.set(key.first, key.second, t.mean_ms * c, t.std_ms ? std::optional(*t.std_ms * c) : std::nullopt);
  }
  return out;
}

TimingTable TimingTable::reference() {
  TimingTable t;
  struct Row {
    int level;
    double v[5];
    double sd[5];
  };
  // Columns: Add, MulC, MulP, Rot, Res.
  const Row rows[] = {
      {3, {0.44, 7.87, 1.25, 7.50, 1.30}, {0.03, 0.51, 0.13, 0.33, 0.04}},
      {2, {0.33, 5.49, 0.97, 5.33, 0.95}, {0.01, 0.34, 0.06, 0.45, 0.02}},
      {1, {0.09, 3.13, 0.76, 2.95, 0.60}, {0.01, 0.10, 0.08, 0.16, 0.03}},
  };
  for (const auto& r : rows) {
    for (int k = 0; k < he::kNumOps; ++k) t.set(he::kAllOps[k], r.level, r.v[k], r.sd[k]);
  }
  return t;
}

std::string TimingTable::to_csv() const {
  std::ostringstream out;
  out << "op,level,mean_ms,std_ms\n";
  out.precision(6);
  for (int level : levels()) {
    for (Op op : he::kAllOps) {
      auto it = entries_.find({op, level});
      if (it == entries_.end()) continue;
      out << he::to_string(op) << ',' << level << ',' << std::fixed << it->second.mean_ms << ',';
      if (it->second.std_ms) out << *it->second.std_ms;
      out << '\n';
      out.unsetf(std::ios::fixed);
    }
  }
  return out.str();
}

TimingTable TimingTable::from_csv(const std::string& text) {
  TimingTable t;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      if (line != "op,level,mean_ms,std_ms") fail(ErrorCode::kFormatError, "timing CSV header: " + line);
      header = false;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    if (cells.size() != 4) fail(ErrorCode::kFormatError, "timing CSV row: " + line);
    try {
      const Op op = he::op_from_string(cells[0]);
      const int level = std::stoi(cells[1]);
      const double mean = std::stod(cells[2]);
      std::optional<double> sd;
      if (!cells[3].empty()) sd = std::stod(cells[3]);
      t.set(op, level, mean, sd);
    } catch (const std::logic_error&) {
      fail(ErrorCode::kFormatError, "timing CSV row: " + line);
    }
  }
  if (header) fail(ErrorCode::kFormatError, "empty timing CSV");
  return t;
}

void TimingTable::save(const std::string& path) const {
  const auto s = to_csv();
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

TimingTable TimingTable::load(const std::string& path) {
  const auto raw = read_file(path);
  return from_csv(std::string(raw.begin(), raw.end()));
}

std::string TimingTable::to_markdown() const {
  std::ostringstream out;
  out << "| l \\ op | Add | Mul(C) | Mul(P) | Rot | Res |\n|---|---|---|---|---|---|\n";
  char buf[64];
  auto lv = levels();
  for (auto it = lv.rbegin(); it != lv.rend(); ++it) {
    out << "| " << *it << " |";
    for (Op op : he::kAllOps) {
      if (!has(op, *it)) {
        out << " - |";
        continue;
      }
      const auto& e = entry(op, *it);
      if (e.std_ms) {
        std::snprintf(buf, sizeof buf, " %.2f (%.2f) |", e.mean_ms, *e.std_ms);
      } else {
        std::snprintf(buf, sizeof buf, " %.2f |", e.mean_ms);
      }
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

namespace {

void check_nin(std::size_t n_in) {
  if (n_in == 0 || !std::has_single_bit(n_in)) {
    fail(ErrorCode::kInvalidNin, "N_in = " + std::to_string(n_in) + " is not a power of two");
  }
}

double m_prime_of(std::size_t m, std::size_t R, std::size_t S, std::size_t n_in) {
  check_nin(n_in);
  if (S == 0) fail(ErrorCode::kInvalidGeometry, "S must be positive");
  const double mp = static_cast<double>(m) * static_cast<double>(R) / static_cast<double>(S);
  if (mp < static_cast<double>(n_in)) {
    fail(ErrorCode::kInvalidGeometry, "m' = " + std::to_string(mp) + " < N_in = " + std::to_string(n_in));
  }
  return mp;
}

}  // namespace

double expansion_cost(const TimingTable& tt, std::size_t n_in, int l, bool short_log_term) {
  check_nin(n_in);
  const double x = static_cast<double>(n_in);
  const double lg = std::log2(x);
  const double ladder = lg * (tt.at(Op::kRes, l - 1) + tt.at(Op::kMulC, l - 1));
  return x * (tt.at(Op::kMulP, l) + tt.at(Op::kRes, l)) + (short_log_term ? ladder : x * ladder);
}

namespace {

double matching_of(const TimingTable& tt, double mp, double x) {
  return std::ceil(mp / x) * (x * (tt.at(Op::kMulC, 2) + tt.at(Op::kRes, 2) + tt.at(Op::kAdd, 1)) +
                              (std::log2(mp) - std::log2(x)) * (tt.at(Op::kRot, 1) + tt.at(Op::kAdd, 1)));
}

double compression_of(const TimingTable& tt, double mp, double x) {
  return std::ceil(mp / x) * (std::log2(mp) - std::log2(x)) *
         (tt.at(Op::kMulP, 1) + tt.at(Op::kRot, 1) + tt.at(Op::kAdd, 1));
}

}  // namespace

double matching_cost(const TimingTable& tt, std::size_t m, std::size_t R, std::size_t S, std::size_t n_in) {
  return matching_of(tt, m_prime_of(m, R, S, n_in), static_cast<double>(n_in));
}

double compression_cost(const TimingTable& tt, std::size_t m, std::size_t R, std::size_t S, std::size_t n_in) {
  return compression_of(tt, m_prime_of(m, R, S, n_in), static_cast<double>(n_in));
}

CostBreakdown total_F(const TimingTable& tt, std::size_t m, std::size_t R, std::size_t S, std::size_t n_in) {
  CostBreakdown b;
  b.n_in = n_in;
  b.m_prime = m_prime_of(m, R, S, n_in);
  b.expansion_ms = expansion_cost(tt, n_in, 3);
  b.matching_ms = matching_cost(tt, m, R, S, n_in);
  b.compression_ms = compression_cost(tt, m, R, S, n_in);
  b.total_ms = b.expansion_ms + b.matching_ms + b.compression_ms;
  return b;
}

std::size_t optimal_nin(const TimingTable& tt, std::size_t m, std::size_t R, std::size_t S,
                        std::vector<std::size_t> candidates) {
  if (candidates.empty()) {
    const double mp = static_cast<double>(m) * static_cast<double>(R) / static_cast<double>(S);
    for (std::size_t x = 2; static_cast<double>(x) <= mp; x <<= 1) candidates.push_back(x);
  }
  if (candidates.empty()) fail(ErrorCode::kInvalidGeometry, "no admissible N_in candidates");
  std::sort(candidates.begin(), candidates.end());
  std::size_t best = 0;
  double best_f = 0.0;
  for (auto x : candidates) {
    const double f = total_F(tt, m, R, S, x).total_ms;
    if (best == 0 || f < best_f) {
      best = x;
      best_f = f;
    }
  }
  return best;
}

double continuous_F(const TimingTable& tt, double mp, double x) {
  const double a = tt.at(Op::kMulP, 3) + tt.at(Op::kRes, 3);
  const double b = tt.at(Op::kRes, 2) + tt.at(Op::kMulC, 2);
  const double c = tt.at(Op::kMulC, 2) + tt.at(Op::kRes, 2) + tt.at(Op::kAdd, 1);
  const double d = tt.at(Op::kRot, 1) + tt.at(Op::kAdd, 1);
  const double e = tt.at(Op::kMulP, 1) + tt.at(Op::kRot, 1) + tt.at(Op::kAdd, 1);
  const double gap = std::log2(mp) - std::log2(x);
  return x * (a + std::log2(x) * b) + (mp / x) * (x * c + gap * d) + (mp / x) * gap * e;
}

BracketResult bracket_check(const TimingTable& tt, double mp) {
  if (!(mp >= 4.0)) fail(ErrorCode::kInvalidGeometry, "bracket check needs m' >= 4");
  BracketResult r;
  r.lower = std::cbrt(mp);
  r.upper = std::sqrt(mp);
  // Grid over log2 X in [0, log2 m'].
  const double step = 1e-3;
  const double top = std::log2(mp);
  std::vector<double> f;
  for (double t = 0.0; t <= top + 1e-12; t += step) f.push_back(continuous_F(tt, mp, std::exp2(t)));
  const auto it = std::min_element(f.begin(), f.end());
  const auto idx = static_cast<std::size_t>(it - f.begin());
  r.convex = true;
  for (std::size_t i = 1; i + 1 < f.size(); ++i) {
    if (f[i - 1] - 2 * f[i] + f[i + 1] <= 0.0) r.convex = false;
  }
  // Golden-section refinement in X on the neighbouring grid cells.
  double lo = std::exp2(std::max(0.0, (static_cast<double>(idx) - 1) * step));
  double hi = std::exp2(std::min(top, (static_cast<double>(idx) + 1) * step));
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
  double f1 = continuous_F(tt, mp, x1), f2 = continuous_F(tt, mp, x2);
  for (int i = 0; i < 100 && hi - lo > 1e-12; ++i) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - g * (hi - lo);
      f1 = continuous_F(tt, mp, x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + g * (hi - lo);
      f2 = continuous_F(tt, mp, x2);
    }
  }
  r.x_min = (lo + hi) / 2.0;
  r.bracket_ok = r.x_min > r.lower && r.x_min < r.upper;

  // Discrete argmin over powers of two, ceilings kept.
  double best_f = 0.0;
  for (std::size_t x = 2; static_cast<double>(x) <= mp; x <<= 1) {
    const double xd = static_cast<double>(x);
    const double fx = expansion_cost(tt, x) + matching_of(tt, mp, xd) + compression_of(tt, mp, xd);
    if (r.best_pow2 == 0 || fx < best_f) {
      r.best_pow2 = x;
      best_f = fx;
    }
  }
  const double floor_p = std::exp2(std::floor(std::log2(r.x_min)));
  const double ceil_p = std::exp2(std::ceil(std::log2(r.x_min)));
  r.best_pow2_adjacent = static_cast<double>(r.best_pow2) == floor_p || static_cast<double>(r.best_pow2) == ceil_p;
  return r;
}

double predict_from_counts(const he::OpCounts& counts, const TimingTable& tt) {
  double total = 0.0;
  for (Op op : he::kAllOps) {
    for (int l = 0; l <= counts.max_level(); ++l) {
      const auto c = counts.count(op, l);
      if (c != 0) total += static_cast<double>(c) * tt.at(op, l);
    }
  }
  return total;
}

TimingTable calibrate(const he::Engine& engine, int reps) {
  const auto* ck = dynamic_cast<const ckks::CkksEngine*>(&engine);
  if (ck == nullptr) fail(ErrorCode::kBackendUnavailable, "calibration needs the ckks backend");
  if (ck->keys().eval.galois.empty()) fail(ErrorCode::kBackendUnavailable, "calibration needs a rotation key");
  if (reps < 1) fail(ErrorCode::kInvalidArgument, "reps must be >= 1");
  const auto steps = static_cast<std::int64_t>(ck->keys().eval.galois.begin()->first);
  std::mt19937_64 g(17);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(engine.slot_count());
  auto rand_vec = [&] {
    for (auto& x : v) x = d(g);
    return v;
  };
  he::PlainVector mask(rand_vec());

  TimingTable tt;
  using clock = std::chrono::steady_clock;
  for (int l = std::min(3, engine.depth()); l >= 1; --l) {
    const auto a = engine.encrypt_at(rand_vec(), l);
    const auto b = engine.encrypt_at(rand_vec(), l);
    const auto prod = engine.mul_ct(a, b);
    for (Op op : he::kAllOps) {
      std::vector<double> ms;
      for (int i = 0; i < reps; ++i) {
        const auto t0 = clock::now();
        switch (op) {
          case Op::kAdd: (void)engine.add(a, b); break;
          case Op::kMulC: (void)engine.mul_ct(a, b); break;
          case Op::kMulP: (void)engine.mul_plain(a, mask); break;
          case Op::kRot: (void)engine.rotate(a, steps); break;
          case Op::kRes: (void)engine.rescale(prod); break;
        }
        ms.push_back(std::chrono::duration<double, std::milli>(clock::now() - t0).count());
      }
      const double mean = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
      std::optional<double> sd;
      if (ms.size() > 1) {
        double ss = 0.0;
        for (double x : ms) ss += (x - mean) * (x - mean);
        sd = std::sqrt(ss / static_cast<double>(ms.size() - 1));
      }
      tt.set(op, l, std::max(mean, 1e-6), sd);
    }
  }
  return tt;
}

}  // namespace bm::cost
