// SPDX-License-Identifier: Apache-2.0
#include "cli_common.hpp"

#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <pthread.h>

#include "bm/cluster/client.hpp"
#include "bm/cluster/server.hpp"
#include "bm/core/features.hpp"
#include "bm/cost/cost_model.hpp"
#include "bm/tools/bench.hpp"
#include "bm/tools/dataset.hpp"

namespace bm::cli {

namespace fs = std::filesystem;

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

cluster::ClusterConfig load_config(const std::string& path) {
  const auto p = cluster::resolve_config_path(path);
  if (p.empty()) return {};
  return cluster::ClusterConfig::load(p);
}

namespace {

void emit(const std::string& out, const std::string& csv, const std::string& md) {
  if (out.empty()) {
    std::cout << md << "\n" << csv;
    return;
  }
  write_file(out + ".csv", Bytes(csv.begin(), csv.end()));
  write_file(out + ".md", Bytes(md.begin(), md.end()));
  std::cout << "wrote " << out << ".csv and " << out << ".md\n";
}

cost::TimingTable load_timing(const std::string& source) {
  if (source.empty() || source == "reference") return cost::TimingTable::reference();
  return cost::TimingTable::load(source);
}

std::vector<std::size_t> pow2_up_to(std::size_t hi) {
  std::vector<std::size_t> v;
  for (std::size_t x = 2; x <= hi; x <<= 1) v.push_back(x);
  return v;
}

int serve(const std::string& role, const std::string& listen, const std::vector<std::string>& shards,
          const std::string& config, const std::string& data) {
  const auto cfg = load_config(config);
  // Block termination signals before any server thread exists; wait for them here.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  std::unique_ptr<cluster::FrameServer> server;
  if (role == "shard") {
    server = std::make_unique<cluster::ShardServer>(cfg, data);
  } else {
    std::vector<cluster::Endpoint> eps;
    for (const auto& s : shards) eps.push_back(cluster::parse_endpoint(s));
    server = std::make_unique<cluster::MainServer>(cfg, eps, data);
  }
  const auto port = server->start(cluster::parse_endpoint(listen));
  std::cout << role << " listening on port " << port << std::endl;
  int sig = 0;
  sigwait(&set, &sig);
  server->stop();
  return 0;
}

struct ClientArgs {
  std::string config, server = "127.0.0.1:7000", keys = "keys", fvec;
  double threshold = 0.5;
  std::uint64_t start = 0;
  bool packed = false;
  std::vector<std::size_t> rows;
  std::optional<std::uint64_t> seed;
};

int client_keys(const ClientArgs& a) {
  const auto cfg = load_config(a.config);
  if (!fs::exists(fs::path(a.keys) / "upload.bin")) {
    Prng rng = a.seed ? Prng::seeded(*a.seed) : Prng::secure();
    cluster::save_client_keys(cfg, cluster::generate_keys(cfg, rng), a.keys);
    std::cout << "generated keys in " << a.keys << "\n";
  }
  cluster::Client client(cluster::parse_endpoint(a.server), cfg);
  client.upload_keys(read_file((fs::path(a.keys) / "upload.bin").string()));
  std::cout << client.status().dump() << "\n";
  return 0;
}

int client_enroll(const ClientArgs& a) {
  const auto cfg = load_config(a.config);
  const auto keys = cluster::load_client_keys(cfg, a.keys);
  auto engine = cluster::make_client_engine(cfg, keys);
  const auto fm = core::read_features(a.fvec);
  const auto layout = cfg.layout();
  cluster::Client client(cluster::parse_endpoint(a.server), cfg);
  if (a.packed) {
    std::map<std::uint64_t, std::vector<double>> feats;
    for (std::size_t i = 0; i < fm.count(); ++i) feats[a.start + i] = fm.row(i);
    for (const auto& up : cluster::pack_enrollees(*engine, layout, feats)) {
      client.enroll_packed(up.set, up.blocks, up.cts);
    }
  } else {
    for (std::size_t i = 0; i < fm.count(); ++i) {
      client.enroll(a.start + i, cluster::encrypt_enrollee(*engine, layout, fm.row(i)));
    }
  }
  std::cout << "enrolled " << fm.count() << " vectors at " << a.start << ".." << a.start + fm.count() - 1 << "\n";
  return 0;
}

int client_match(const ClientArgs& a) {
  const auto cfg = load_config(a.config);
  const auto keys = cluster::load_client_keys(cfg, a.keys);
  auto engine = cluster::make_client_engine(cfg, keys);
  const auto fm = core::read_features(a.fvec);
  std::vector<std::size_t> rows = a.rows;
  if (rows.empty()) {
    for (std::size_t i = 0; i < fm.count(); ++i) rows.push_back(i);
  }
  cluster::Client client(cluster::parse_endpoint(a.server), cfg);
  for (auto i : rows) {
    if (i >= fm.count()) fail(ErrorCode::kInvalidArgument, "row " + std::to_string(i) + " not in " + a.fvec);
    const auto reply = client.match(cluster::encrypt_query(*engine, cfg.layout(), fm.row(i)));
    const auto res = cluster::client_decide(*engine, reply, a.threshold);
    nlohmann::json j = {{"query", i},
                        {"accepted", res.accepted},
                        {"partial", reply.partial},
                        {"candidates", res.scores.size()}};
    if (res.best_index) {
      j["best_index"] = *res.best_index;
      j["best_score"] = res.best_score;
    }
    for (const auto& s : reply.shards) {
      if (s.status != cluster::ShardStatus::kOk) j["shards"][std::to_string(s.shard)] = std::string(to_string(s.status));
    }
    std::cout << j.dump() << "\n";
  }
  return 0;
}

}  // namespace

void add_serve(CLI::App& app, CLI::App* cmd) {
  (void)app;
  struct Args {
    std::string role = "shard", listen = "127.0.0.1:7000", config, data;
    std::vector<std::string> shards;
  };
  auto a = std::make_shared<Args>();
  cmd->add_option("--role", a->role, "main or shard")->check(CLI::IsMember({"main", "shard"}));
  cmd->add_option("--listen", a->listen, "host:port to bind");
  cmd->add_option("--shards", a->shards, "shard addresses (main only)")->delimiter(',');
  cmd->add_option("--config", a->config, "JSON config (BM_CONFIG overrides)");
  cmd->add_option("--data", a->data, "persistence directory");
  cmd->callback([a] { throw CLI::RuntimeError(guarded([&] { return serve(a->role, a->listen, a->shards, a->config, a->data); })); });
}

void add_client(CLI::App& app, bool prefixed) {
  (void)prefixed;
  auto a = std::make_shared<ClientArgs>();
  auto common = [a](CLI::App* c) {
    c->add_option("--config", a->config, "JSON config (BM_CONFIG overrides)");
    c->add_option("--server", a->server, "main server host:port");
    c->add_option("--keys", a->keys, "client key directory");
  };
  auto* keys = app.add_subcommand("keys", "generate (if needed) and upload evaluation keys");
  common(keys);
  keys->add_option("--seed", a->seed, "deterministic key generation (testing only)");
  keys->callback([a] { throw CLI::RuntimeError(guarded([&] { return client_keys(*a); })); });

  auto* enroll = app.add_subcommand("enroll", "encrypt and enrol every row of a feature file");
  common(enroll);
  enroll->add_option("--fvec", a->fvec, "fvec or CSV features")->required();
  enroll->add_option("--start", a->start, "global index of the first row");
  enroll->add_flag("--packed", a->packed, "pack whole sets on the client");

  enroll->callback([a] { throw CLI::RuntimeError(guarded([&] { return client_enroll(*a); })); });

  auto* match = app.add_subcommand("match", "1:N match each row (or --rows) of a feature file");
  common(match);
  match->add_option("--fvec", a->fvec, "fvec or CSV queries")->required();
  match->add_option("--threshold", a->threshold, "acceptance threshold on cosine similarity");
  match->add_option("--rows", a->rows, "row indices to query")->delimiter(',');
  match->callback([a] { throw CLI::RuntimeError(guarded([&] { return client_match(*a); })); });

  auto* status = app.add_subcommand("status", "print cluster readiness");
  common(status);
  status->callback([a] {
    throw CLI::RuntimeError(guarded([&] {
      const auto cfg = load_config(a->config);
      cluster::Client client(cluster::parse_endpoint(a->server), cfg);
      std::cout << client.status().dump(2) << "\n";
      return 0;
    }));
  });
}

void add_local(CLI::App& app) {
  // gen
  {
    struct Args {
      std::size_t count = 1000, m = 128;
      std::uint64_t seed = 1;
      std::string out;
      bool csv = false;
    };
    auto a = std::make_shared<Args>();
    auto* c = app.add_subcommand("gen", "synthetic unit vectors uniform on the sphere");
    c->add_option("--count", a->count);
    c->add_option("--m", a->m, "dimension (power of two)");
    c->add_option("--seed", a->seed);
    c->add_option("--out", a->out, "output file")->required();
    c->add_flag("--csv", a->csv, "write CSV instead of fvec");
    c->callback([a] {
      throw CLI::RuntimeError(guarded([&] {
        const auto fm = tools::gen_dataset(a->count, a->m, a->seed);
        if (a->csv) {
          core::write_csv(a->out, fm);
        } else {
          core::write_fvec(a->out, fm);
        }
        std::cout << "wrote " << fm.count() << " x " << fm.dim << " to " << a->out << "\n";
        return 0;
      }));
    });
  }
  // keygen
  {
    struct Args {
      std::string config, out = "keys";
      std::optional<std::uint64_t> seed;
    };
    auto a = std::make_shared<Args>();
    auto* c = app.add_subcommand("keygen", "generate client keys for the configured deployment");
    c->add_option("--config", a->config);
    c->add_option("--out", a->out, "key directory");
    c->add_option("--seed", a->seed, "deterministic keys (testing only)");
    c->callback([a] {
      throw CLI::RuntimeError(guarded([&] {
        const auto cfg = load_config(a->config);
        Prng rng = a->seed ? Prng::seeded(*a->seed) : Prng::secure();
        cluster::save_client_keys(cfg, cluster::generate_keys(cfg, rng), a->out);
        std::cout << "keys written to " << a->out << " (" << he::to_string(cfg.backend) << ")\n";
        return 0;
      }));
    });
  }
  // bench-ops
  {
    struct Args {
      std::string config, out;
      int reps = 30;
    };
    auto a = std::make_shared<Args>();
    auto* c = app.add_subcommand("bench-ops", "calibrate per-op latencies on the ckks backend");
    c->add_option("--config", a->config);
    c->add_option("--reps", a->reps);
    c->add_option("--out", a->out, "output prefix for .csv and .md");
    c->callback([a] {
      throw CLI::RuntimeError(guarded([&] {
        const auto cfg = load_config(a->config);
        auto ring = cluster::make_ring(cfg);
        Prng rng = Prng::secure();
        const std::int64_t rot[] = {1};
        auto keys = ckks::keygen(*ring, rot, rng);
        ckks::CkksEngine engine(ring, std::move(keys));
        const auto tt = cost::calibrate(engine, a->reps);
        std::string md = "Per-op latency (ms), n = " + std::to_string(cfg.ring_degree()) + ", " +
                         std::to_string(a->reps) + " reps\n\n" + tt.to_markdown() + "\n- Hardware: " +
                         tools::hardware_summary() + "\n";
        emit(a->out, tt.to_csv(), md);
        return 0;
      }));
    });
  }
  // bench-match / bench-base
  {
    struct Args {
      std::string config, fvec, timing, out;
      std::size_t count = 0, reps = 10, shards = 0, split_nin = 0;
      std::vector<std::size_t> nins{2, 4, 8, 16, 32};
      std::uint64_t seed = 1;
    };
    auto a = std::make_shared<Args>();
    auto options = [a]() {
      const auto cfg = load_config(a->config);
      tools::BenchOptions o;
      o.S = cfg.S;
      o.m = cfg.m;
      o.depth = cfg.depth;
      o.scale_bits = cfg.scale_bits;
      o.backend = cfg.backend;
      o.allow_insecure = cfg.allow_insecure;
      o.shards = a->shards != 0 ? a->shards : cfg.K;
      o.reps = a->reps;
      o.seed = a->seed;
      if (!a->timing.empty()) {
        if (cfg.backend != he::BackendId::kExact) fail(ErrorCode::kInvalidArgument, "--timing needs the exact backend");
        o.timing = load_timing(a->timing);
      }
      return o;
    };
    auto data = [a](std::size_t m) {
      if (!a->fvec.empty()) return core::read_features(a->fvec);
      if (a->count == 0) fail(ErrorCode::kInvalidArgument, "give --fvec or --count");
      return tools::gen_dataset(a->count, m, a->seed);
    };
    auto setup = [a](CLI::App* c) {
      c->add_option("--config", a->config);
      c->add_option("--fvec", a->fvec, "dataset (fvec or CSV)");
      c->add_option("--count", a->count, "generate this many random enrollees instead");
      c->add_option("--reps", a->reps);
      c->add_option("--shards", a->shards, "in-process shards (default: K)");
      c->add_option("--timing", a->timing, "exact backend: latency table CSV or 'reference'");
      c->add_option("--seed", a->seed);
      c->add_option("--out", a->out, "output prefix for .csv and .md");
    };
    auto* bm = app.add_subcommand("bench-match", "per-stage matching times over N_in");
    setup(bm);
    bm->add_option("--nin", a->nins, "N_in values")->delimiter(',');
    bm->callback([a, options, data] {
      throw CLI::RuntimeError(guarded([&] {
        const auto o = options();
        const auto rep = tools::bench_match(o, data(o.m), a->nins);
        emit(a->out, rep.to_csv(), rep.to_markdown());
        return 0;
      }));
    });
    auto* bb = app.add_subcommand("bench-base", "conventional matching next to the split method");
    setup(bb);
    bb->add_option("--split-nin", a->split_nin, "N_in of the split column (default: cost-model optimum)");
    bb->callback([a, options, data] {
      throw CLI::RuntimeError(guarded([&] {
        const auto o = options();
        const auto fm = data(o.m);
        std::size_t nin = a->split_nin;
        if (nin == 0) {
          const std::size_t per_shard = (fm.count() + o.shards - 1) / o.shards;
          nin = cost::optimal_nin(o.timing.value_or(cost::TimingTable::reference()), o.m, per_shard, o.S);
        }
        const auto rep = tools::bench_baseline(o, fm, nin);
        emit(a->out, rep.to_csv(), rep.to_markdown());
        return 0;
      }));
    });
  }
  // cost eval | optimize | bracket
  {
    struct Args {
      std::string timing = "reference";
      std::size_t m = 128, R = 2048, S = 8192;
      std::vector<std::size_t> nins;
      std::vector<std::size_t> mps{8, 16, 32, 64, 128, 256};
    };
    auto a = std::make_shared<Args>();
    auto* cost_cmd = app.add_subcommand("cost", "analytic cost model");
    cost_cmd->require_subcommand(1);
    auto geom = [a](CLI::App* c) {
      c->add_option("--timing", a->timing, "latency table CSV or 'reference'");
      c->add_option("--m", a->m);
      c->add_option("--R", a->R, "enrollees");
      c->add_option("--S", a->S, "slots");
    };
    auto* ev = cost_cmd->add_subcommand("eval", "F(N_in) and its stages");
    geom(ev);
    ev->add_option("--nin", a->nins, "N_in values (default: powers of two up to m')")->delimiter(',');
    ev->callback([a] {
      throw CLI::RuntimeError(guarded([&] {
        const auto tt = load_timing(a->timing);
        auto nins = a->nins;
        if (nins.empty()) nins = pow2_up_to(a->m * a->R / a->S);
        std::cout << "N_in,expansion_ms,matching_ms,compression_ms,F_ms\n" << std::fixed << std::setprecision(2);
        for (auto n : nins) {
          const auto b = cost::total_F(tt, a->m, a->R, a->S, n);
          std::cout << n << "," << b.expansion_ms << "," << b.matching_ms << "," << b.compression_ms << ","
                    << b.total_ms << "\n";
        }
        return 0;
      }));
    });
    auto* op = cost_cmd->add_subcommand("optimize", "N_in minimising F");
    geom(op);
    op->add_option("--nin", a->nins, "candidates (default: powers of two up to m')")->delimiter(',');
    op->callback([a] {
      throw CLI::RuntimeError(guarded([&] {
        const auto tt = load_timing(a->timing);
        const auto n = cost::optimal_nin(tt, a->m, a->R, a->S, a->nins);
        std::cout << "N_in = " << n << std::fixed << std::setprecision(2)
                  << " (F = " << cost::total_F(tt, a->m, a->R, a->S, n).total_ms << " ms)\n";
        return 0;
      }));
    });
    auto* br = cost_cmd->add_subcommand("bracket", "continuous minimiser against (m'^(1/3), m'^(1/2))");
    br->add_option("--timing", a->timing, "latency table CSV or 'reference'");
    br->add_option("--mp", a->mps, "m' values")->delimiter(',');
    br->callback([a] {
      throw CLI::RuntimeError(guarded([&] {
        const auto tt = load_timing(a->timing);
        bool all = true;
        std::cout << "m',x_min,lower,upper,in_bracket,convex,best_pow2,adjacent\n" << std::fixed << std::setprecision(4);
        for (auto mp : a->mps) {
          const auto b = cost::bracket_check(tt, static_cast<double>(mp));
          all = all && b.bracket_ok && b.best_pow2_adjacent;
          std::cout << mp << "," << b.x_min << "," << b.lower << "," << b.upper << "," << b.bracket_ok << ","
                    << b.convex << "," << b.best_pow2 << "," << b.best_pow2_adjacent << "\n";
        }
        return all ? 0 : 3;
      }));
    });
  }
}

}  // namespace bm::cli
