// SPDX-License-Identifier: Apache-2.0
#include "bm/tools/bench.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "bm/ckks/ckks_backend.hpp"
#include "bm/core/pipeline.hpp"
#include "bm/he/exact_backend.hpp"

namespace bm::tools {

using Clock = std::chrono::steady_clock;

Stat Stat::of(const std::vector<double>& xs) {
  Stat s;
  if (xs.empty()) return s;
  double sum = 0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

namespace {

struct Setup {
  std::unique_ptr<he::Engine> engine;
  const he::ExactEngine* exact = nullptr;  // set when timing is simulated
};

Setup make_engine(const BenchOptions& opt, const std::vector<std::int64_t>& rotations) {
  Setup su;
  if (opt.backend == he::BackendId::kExact) {
    he::SchemeParams p;
    p.slot_count = opt.S;
    p.depth = opt.depth;
    p.scale_bits = opt.scale_bits;
    he::ExactEngine::LatencyModel lat;
    if (opt.timing) lat = [tt = *opt.timing](he::Op op, int level) { return tt.at(op, level); };
    auto e = std::make_unique<he::ExactEngine>(p, lat);
    if (opt.timing) su.exact = e.get();
    su.engine = std::move(e);
    return su;
  }
  auto rp = ckks::RingParams::standard(2 * opt.S, opt.depth, opt.scale_bits);
  rp.allow_insecure = opt.allow_insecure;
  auto ring = std::make_shared<const ckks::RingContext>(std::move(rp));
  Prng rng = Prng::seeded(opt.seed);
  auto keys = ckks::keygen(*ring, rotations, rng);
  ckks::CkksOptions co;
  co.seed = opt.seed + 1;
  su.engine = std::make_unique<ckks::CkksEngine>(std::move(ring), std::move(keys), co);
  return su;
}

// Wall clock, or the simulated latency of the ops run in between.
class StageTimer {
 public:
  explicit StageTimer(const he::ExactEngine* sim) : sim_(sim) {}
  void start() {
    if (sim_ != nullptr) {
      s0_ = sim_->simulated_ms();
    } else {
      t0_ = Clock::now();
    }
  }
  double stop() const {
    if (sim_ != nullptr) return sim_->simulated_ms() - s0_;
    return std::chrono::duration<double, std::milli>(Clock::now() - t0_).count();
  }

 private:
  const he::ExactEngine* sim_;
  Clock::time_point t0_{};
  double s0_ = 0;
};

std::vector<std::vector<double>> unit_rows(const core::FeatureMatrix& data, std::size_t m) {
  if (data.dim != m) {
    fail(ErrorCode::kInvalidDim, "dataset dimension " + std::to_string(data.dim) + " differs from m = " +
                                     std::to_string(m));
  }
  std::vector<std::vector<double>> out;
  out.reserve(data.count());
  for (std::size_t i = 0; i < data.count(); ++i) out.push_back(core::l2_normalize(data.row(i)));
  return out;
}

std::size_t shard_capacity(const BenchOptions& opt, std::size_t R, std::size_t granule) {
  std::size_t cap = 0;
  if (opt.shards == 0) fail(ErrorCode::kInvalidArgument, "shards must be >= 1");
  if (R == 0) fail(ErrorCode::kInvalidArgument, "empty dataset");
  const std::size_t per = (R + opt.shards - 1) / opt.shards;
  cap = (per + granule - 1) / granule * granule;
  if (opt.shard_capacity) {
    cap = *opt.shard_capacity;
    if (cap % granule != 0) {
      fail(ErrorCode::kInvalidArgument,
           "shard capacity " + std::to_string(cap) + " is not a multiple of " + std::to_string(granule));
    }
    if (R > cap * opt.shards) {
      fail(ErrorCode::kCapacityExceeded, std::to_string(R) + " enrollees exceed " + std::to_string(opt.shards) +
                                             " x " + std::to_string(cap));
    }
  }
  return cap;
}

std::vector<std::size_t> query_rows(const BenchOptions& opt, std::size_t R) {
  if (opt.reps == 0) fail(ErrorCode::kInvalidArgument, "reps must be >= 1");
  Prng rng = Prng::seeded(opt.seed ^ 0x5157ULL);
  std::vector<std::size_t> rows(opt.reps);
  for (auto& r : rows) r = rng.uniform_below(R);
  return rows;
}

struct Samples {
  std::vector<double> enc, match, dec, net, total;
  std::uint64_t rotations = 0, ops = 0;
  std::size_t hits = 0;

  BenchRow row(std::string label, std::size_t n_in) const {
    BenchRow r;
    r.label = std::move(label);
    r.n_in = n_in;
    r.encryption = Stat::of(enc);
    r.matching = Stat::of(match);
    r.decryption = Stat::of(dec);
    r.network = Stat::of(net);
    r.total = Stat::of(total);
    r.reps = enc.size();
    r.rotations = rotations;
    r.ops = ops;
    r.rank1 = static_cast<double>(hits) / static_cast<double>(enc.size());
    return r;
  }
};

BenchRow run_split(const BenchOptions& opt, const std::vector<std::vector<double>>& units, std::size_t n_in) {
  const auto layout = core::PackingLayout::make(opt.S, opt.m, n_in);
  const std::size_t R = units.size();
  const std::size_t cap = shard_capacity(opt, R, layout.B);
  auto su = make_engine(opt, core::rotation_set(layout));
  const auto& engine = *su.engine;
  const auto masks = core::make_masks(layout);

  std::vector<std::unique_ptr<core::EnrollmentStore>> stores;
  for (std::size_t sh = 0; sh < opt.shards; ++sh) {
    auto store = std::make_unique<core::EnrollmentStore>(engine, layout, cap);
    const std::size_t lo = sh * cap, hi = std::min(R, (sh + 1) * cap);
    for (std::size_t first = lo; first < hi; first += layout.B) {
      std::vector<const std::vector<double>*> members(layout.B, nullptr);
      std::vector<std::size_t> blocks;
      for (std::size_t g = first; g < std::min(hi, first + layout.B); ++g) {
        members[g - first] = &units[g];
        blocks.push_back(g - first);
      }
      std::vector<he::LeveledCiphertext> cts;
      for (std::size_t i = 0; i < n_in; ++i) {
        const auto pt = core::pack_set_plaintext(layout, i, members);
        cts.push_back(engine.encrypt_at(pt.span(), engine.depth() - 1));
      }
      store->put_packed_set((first - lo) / layout.B, std::move(cts), blocks);
    }
    stores.push_back(std::move(store));
  }

  StageTimer timer(su.exact);
  Samples smp;
  for (std::size_t qrow : query_rows(opt, R)) {
    timer.start();
    const auto q = engine.encrypt(core::prepare_query_vector(units[qrow], layout).span());
    const double enc = timer.stop();

    double match = 0;
    std::vector<core::PackedResult> results;
    for (const auto& store : stores) {
      const auto snap = store->snapshot();
      const auto before = engine.counters().snapshot();
      timer.start();
      if (snap.sets.empty()) {
        results.emplace_back();
      } else {
        results.push_back(core::match_store(engine, q, snap, masks));
      }
      match = std::max(match, timer.stop());
      const auto d = engine.counters().snapshot() - before;
      smp.rotations = std::max<std::uint64_t>(smp.rotations, d.total(he::Op::kRot));
      smp.ops = std::max<std::uint64_t>(smp.ops, d.total());
    }

    timer.start();
    (void)he::deserialize(engine, he::serialize(engine, q));
    for (auto& r : results) {
      for (auto& ct : r.packed) ct = he::deserialize(engine, he::serialize(engine, ct));
    }
    const double net = timer.stop();

    timer.start();
    std::map<std::uint64_t, double> scores;
    for (std::size_t sh = 0; sh < results.size(); ++sh) {
      auto& r = results[sh];
      if (r.packed.empty()) continue;
      std::vector<std::vector<double>> plain;
      for (const auto& ct : r.packed) plain.push_back(engine.decrypt(ct));
      r.descriptor.index_offset = sh * cap;
      scores.merge(core::extract_scores(plain, r.descriptor));
    }
    const auto res = core::decide(std::move(scores), 0.0);
    const double dec = timer.stop();
    if (res.best_index && *res.best_index == qrow) ++smp.hits;

    smp.enc.push_back(enc);
    smp.match.push_back(match);
    smp.net.push_back(net);
    smp.dec.push_back(dec);
    smp.total.push_back(enc + match + net + dec);
  }
  return smp.row(std::to_string(n_in), n_in);
}

}  // namespace

BenchRow bench_baseline_row(const BenchOptions& opt, const core::FeatureMatrix& data) {
  const auto units = unit_rows(data, opt.m);
  const auto layout = core::PackingLayout::make(opt.S, opt.m, 1);
  const std::size_t per = layout.tiles;  // users per ciphertext
  const std::size_t R = units.size();
  const std::size_t cap = shard_capacity(opt, R, per);
  auto su = make_engine(opt, core::conventional_rotation_set(opt.m));
  const auto& engine = *su.engine;

  std::vector<std::vector<he::LeveledCiphertext>> stores(opt.shards);
  std::vector<std::size_t> counts(opt.shards, 0);
  for (std::size_t sh = 0; sh < opt.shards; ++sh) {
    const std::size_t lo = sh * cap, hi = std::min(R, (sh + 1) * cap);
    for (std::size_t first = lo; first < hi; first += per) {
      std::vector<const std::vector<double>*> members;
      for (std::size_t g = first; g < std::min(hi, first + per); ++g) members.push_back(&units[g]);
      stores[sh].push_back(engine.encrypt(core::pack_full_plaintext(layout, members).span()));
    }
    counts[sh] = hi > lo ? hi - lo : 0;
  }

  StageTimer timer(su.exact);
  Samples smp;
  for (std::size_t qrow : query_rows(opt, R)) {
    timer.start();
    const auto q = engine.encrypt(core::prepare_query_vector(units[qrow], layout).span());
    const double enc = timer.stop();

    double match = 0;
    std::vector<std::vector<he::LeveledCiphertext>> results;
    for (const auto& store : stores) {
      const auto before = engine.counters().snapshot();
      timer.start();
      results.push_back(store.empty() ? std::vector<he::LeveledCiphertext>{}
                                      : core::conventional_match(engine, q, store, opt.m));
      match = std::max(match, timer.stop());
      const auto d = engine.counters().snapshot() - before;
      smp.rotations = std::max<std::uint64_t>(smp.rotations, d.total(he::Op::kRot));
      smp.ops = std::max<std::uint64_t>(smp.ops, d.total());
    }

    timer.start();
    (void)he::deserialize(engine, he::serialize(engine, q));
    for (auto& r : results) {
      for (auto& ct : r) ct = he::deserialize(engine, he::serialize(engine, ct));
    }
    const double net = timer.stop();

    timer.start();
    std::map<std::uint64_t, double> scores;
    for (std::size_t sh = 0; sh < results.size(); ++sh) {
      std::vector<std::vector<double>> plain;
      for (const auto& ct : results[sh]) plain.push_back(engine.decrypt(ct));
      for (const auto& [k, v] : core::extract_conventional(plain, opt.m, counts[sh])) scores.emplace(sh * cap + k, v);
    }
    const auto res = core::decide(std::move(scores), 0.0);
    const double dec = timer.stop();
    if (res.best_index && *res.best_index == qrow) ++smp.hits;

    smp.enc.push_back(enc);
    smp.match.push_back(match);
    smp.net.push_back(net);
    smp.dec.push_back(dec);
    smp.total.push_back(enc + match + net + dec);
  }
  return smp.row("Base", 1);
}

namespace {

BenchReport empty_report(const BenchOptions& opt, std::size_t R) {
  BenchReport rep;
  rep.S = opt.S;
  rep.m = opt.m;
  rep.R = R;
  rep.shards = opt.shards;
  rep.reps = opt.reps;
  rep.backend = std::string(he::to_string(opt.backend));
  rep.simulated = opt.backend == he::BackendId::kExact && opt.timing.has_value();
  return rep;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string cell(const Stat& s) {
  char buf[96];
  if (s.std) {
    std::snprintf(buf, sizeof buf, "%.2f (%.2f)", s.mean, *s.std);
  } else {
    std::snprintf(buf, sizeof buf, "%.2f", s.mean);
  }
  return buf;
}

}  // namespace

BenchReport bench_match(const BenchOptions& opt, const core::FeatureMatrix& data,
                        const std::vector<std::size_t>& n_in_list) {
  const auto units = unit_rows(data, opt.m);
  auto rep = empty_report(opt, units.size());
  for (auto n : n_in_list) rep.rows.push_back(run_split(opt, units, n));
  return rep;
}

BenchReport bench_baseline(const BenchOptions& opt, const core::FeatureMatrix& data, std::size_t split_n_in) {
  const auto units = unit_rows(data, opt.m);
  auto rep = empty_report(opt, units.size());
  rep.rows.push_back(bench_baseline_row(opt, data));
  rep.rows.push_back(run_split(opt, units, split_n_in));
  const auto& base = rep.rows[0];
  const auto& split = rep.rows[1];
  char buf[256];
  std::snprintf(buf, sizeof buf, "Base/split matching time ratio at N_in = %zu: %.2f", split_n_in,
                base.matching.mean / split.matching.mean);
  rep.notes.emplace_back(buf);
  const auto layout = core::PackingLayout::make(opt.S, opt.m, split_n_in);
  // Shard 0 is always the fullest.
  const std::size_t R = units.size();
  const double base_groups = std::ceil(static_cast<double>(std::min(R, shard_capacity(opt, R, layout.tiles))) /
                                       static_cast<double>(layout.tiles));
  const double split_sets = std::ceil(static_cast<double>(std::min(R, shard_capacity(opt, R, layout.B))) /
                                      static_cast<double>(layout.B));
  std::snprintf(buf, sizeof buf,
                "Rotations per query (busiest shard): Base %llu, split %llu; per stored group %.2f (log2 m = %d) vs "
                "%.2f (log2 s = %d plus amortised expansion and compression)",
                static_cast<unsigned long long>(base.rotations), static_cast<unsigned long long>(split.rotations),
                static_cast<double>(base.rotations) / base_groups, static_cast<int>(std::log2(opt.m)),
                static_cast<double>(split.rotations) / split_sets, layout.log_s());
  rep.notes.emplace_back(buf);
  return rep;
}

const BenchRow* BenchReport::find(const std::string& label) const {
  for (const auto& r : rows) {
    if (r.label == label) return &r;
  }
  return nullptr;
}

std::string BenchReport::to_csv() const {
  std::ostringstream os;
  os << "# S=" << S << " m=" << m << " R=" << R << " shards=" << shards << " backend=" << backend
     << " simulated=" << (simulated ? 1 : 0) << " reps=" << reps << "\n";
  const bool with_std = reps > 1;
  os << "label,n_in,encryption_ms,matching_ms,decryption_ms,network_ms,total_ms";
  if (with_std) os << ",encryption_std,matching_std,decryption_std,network_std,total_std";
  os << ",reps,rotations,ops,rank1\n";
  for (const auto& r : rows) {
    os << r.label << "," << r.n_in;
    for (const Stat* s : {&r.encryption, &r.matching, &r.decryption, &r.network, &r.total}) os << "," << fmt(s->mean);
    if (with_std) {
      for (const Stat* s : {&r.encryption, &r.matching, &r.decryption, &r.network, &r.total}) {
        os << "," << fmt(s->std.value_or(0.0));
      }
    }
    os << "," << r.reps << "," << r.rotations << "," << r.ops << "," << fmt(r.rank1) << "\n";
  }
  return os.str();
}

std::string BenchReport::to_markdown() const {
  std::ostringstream os;
  os << "Mean 1:N matching time (ms) over " << reps << (reps == 1 ? " trial" : " trials") << "; S = " << S
     << ", m = " << m << ", R = " << R << ", shards = " << shards << ", backend = " << backend
     << (simulated ? " (simulated latencies)" : "") << "\n\n";
  os << "| Stage |";
  for (const auto& r : rows) os << " " << (r.label == "Base" ? "Base" : "N_in = " + r.label) << " |";
  os << "\n| --- |";
  for (std::size_t i = 0; i < rows.size(); ++i) os << " ---: |";
  os << "\n";
  const std::pair<const char*, Stat BenchRow::*> stages[] = {{"Encryption", &BenchRow::encryption},
                                                            {"Matching", &BenchRow::matching},
                                                            {"Decryption", &BenchRow::decryption},
                                                            {"Network", &BenchRow::network},
                                                            {"Total", &BenchRow::total}};
  for (const auto& [name, field] : stages) {
    os << "| " << name << " |";
    for (const auto& r : rows) os << " " << cell(r.*field) << " |";
    os << "\n";
  }
  os << "| Rotations / query |";
  for (const auto& r : rows) os << " " << r.rotations << " |";
  os << "\n| Rank-1 |";
  for (const auto& r : rows) os << " " << fmt(r.rank1) << " |";
  os << "\n\n";
  os << "- Hardware: " << hardware_summary() << "\n";
  os << "- Absolute milliseconds depend on the machine; compare orderings and ratios across columns.\n";
  os << "- Matching is the slowest shard per query; Network is serialisation and parsing of the query and "
        "packed results.\n";
  if (reps == 1) os << "- Single trial: no standard deviation.\n";
  for (const auto& n : notes) os << "- " << n << "\n";
  return os.str();
}

std::string hardware_summary() {
  std::string model = "unknown CPU";
  std::ifstream cpu("/proc/cpuinfo");
  for (std::string line; std::getline(cpu, line);) {
    if (line.rfind("model name", 0) == 0) {
      model = line.substr(line.find(':') + 2);
      break;
    }
  }
  std::string mem;
  std::ifstream mi("/proc/meminfo");
  for (std::string line; std::getline(mi, line);) {
    if (line.rfind("MemTotal", 0) == 0) {
      std::istringstream is(line.substr(9));
      double kb = 0;
      is >> kb;
      char buf[64];
      std::snprintf(buf, sizeof buf, ", %.1f GiB RAM", kb / (1024.0 * 1024.0));
      mem = buf;
      break;
    }
  }
  return model + ", " + std::to_string(std::thread::hardware_concurrency()) + " logical CPUs" + mem;
}

}  // namespace bm::tools
