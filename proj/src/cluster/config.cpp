// SPDX-License-Identifier: Apache-2.0
#include "bm/cluster/config.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cstdlib>

#include "bm/he/exact_backend.hpp"

namespace bm::cluster {

void ClusterConfig::validate() const {
  const auto lay = layout();
  if (depth < 3) fail(ErrorCode::kInvalidArgument, "the matching pipeline needs depth >= 3");
  if (K == 0) fail(ErrorCode::kInvalidArgument, "K must be >= 1");
  if (C_cap == 0 || C_cap % lay.B != 0) {
    fail(ErrorCode::kInvalidArgument,
         "C_cap = " + std::to_string(C_cap) + " must be a positive multiple of B = " + std::to_string(lay.B));
  }
  if (shard_timeout.count() <= 0 || connect_timeout.count() <= 0 || keys_timeout.count() <= 0) {
    fail(ErrorCode::kInvalidArgument, "timeouts must be positive");
  }
}

ClusterConfig ClusterConfig::from_json(const nlohmann::json& j) {
  ClusterConfig c;
  try {
    c.S = j.value("S", c.S);
    c.m = j.value("m", c.m);
    c.n_in = j.value("N_in", c.n_in);
    c.depth = j.value("depth", c.depth);
    c.scale_bits = j.value("scale_bits", c.scale_bits);
    c.K = j.value("K", c.K);
    c.C_cap = j.value("C_cap", c.C_cap);
    if (j.contains("backend")) c.backend = he::backend_from_string(j.at("backend").get<std::string>());
    if (j.contains("timeouts")) {
      const auto& t = j.at("timeouts");
      c.shard_timeout = std::chrono::milliseconds(t.value("shard_ms", c.shard_timeout.count()));
      c.connect_timeout = std::chrono::milliseconds(t.value("connect_ms", c.connect_timeout.count()));
      c.keys_timeout = std::chrono::milliseconds(t.value("keys_ms", c.keys_timeout.count()));
    }
    c.max_payload = j.value("max_payload", c.max_payload);
    c.allow_insecure = j.value("allow_insecure", c.allow_insecure);
    c.server_enrollment = j.value("server_enrollment", c.server_enrollment);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormatError, std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json ClusterConfig::to_json() const {
  return {{"S", S},
          {"m", m},
          {"N_in", n_in},
          {"depth", depth},
          {"scale_bits", scale_bits},
          {"K", K},
          {"C_cap", C_cap},
          {"backend", std::string(he::to_string(backend))},
          {"timeouts",
           {{"shard_ms", shard_timeout.count()},
            {"connect_ms", connect_timeout.count()},
            {"keys_ms", keys_timeout.count()}}},
          {"max_payload", max_payload},
          {"allow_insecure", allow_insecure},
          {"server_enrollment", server_enrollment}};
}

ClusterConfig ClusterConfig::load(const std::string& path) {
  const Bytes raw = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(raw.begin(), raw.end());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormatError, path + ": " + e.what());
  }
  return from_json(j);
}

std::string resolve_config_path(const std::string& path) {
  if (const char* env = std::getenv("BM_CONFIG"); env != nullptr && *env != '\0') return env;
  return path;
}

Route route(const ClusterConfig& cfg, std::uint64_t g) {
  if (g >= cfg.capacity()) {
    fail(ErrorCode::kCapacityExceeded,
         "global index " + std::to_string(g) + " >= capacity " + std::to_string(cfg.capacity()));
  }
  return {static_cast<std::size_t>(g / cfg.C_cap), static_cast<std::size_t>(g % cfg.C_cap)};
}

std::uint64_t global_index(const ClusterConfig& cfg, Route r) {
  return static_cast<std::uint64_t>(r.shard) * cfg.C_cap + r.local;
}

std::shared_ptr<const ckks::RingContext> make_ring(const ClusterConfig& cfg) {
  auto p = ckks::RingParams::standard(cfg.ring_degree(), cfg.depth, cfg.scale_bits);
  p.allow_insecure = cfg.allow_insecure;
  return std::make_shared<const ckks::RingContext>(std::move(p));
}

namespace {

he::SchemeParams exact_params(const ClusterConfig& cfg) {
  he::SchemeParams p;
  p.slot_count = cfg.S;
  p.depth = cfg.depth;
  p.scale_bits = cfg.scale_bits;
  p.backend = he::BackendId::kExact;
  return p;
}

}  // namespace

Digest params_digest(const ClusterConfig& cfg) {
  if (cfg.backend == he::BackendId::kExact) return he::ExactEngine(exact_params(cfg)).digest();
  auto p = ckks::RingParams::standard(cfg.ring_degree(), cfg.depth, cfg.scale_bits);
  p.allow_insecure = cfg.allow_insecure;
  p.validate();
  return p.digest();
}

ClientKeys generate_keys(const ClusterConfig& cfg, Prng& rng) {
  ClientKeys out;
  if (cfg.backend == he::BackendId::kExact) return out;
  out.ring = make_ring(cfg);
  const auto rots = core::rotation_set(cfg.layout(), {.matching = true, .enrollment = cfg.server_enrollment});
  out.keys = ckks::keygen(*out.ring, rots, rng);
  return out;
}

Bytes key_upload_payload(const ClusterConfig& cfg, const ClientKeys& keys) {
  ByteWriter w;
  w.put_bytes(params_digest(cfg));
  if (!keys.keys) {
    w.put_u32(0);
    return w.take();
  }
  const auto& ctx = *keys.ring;
  w.put_u32(3);
  w.put_blob(ckks::serialize_public_key(ctx, keys.keys->public_key));
  w.put_blob(ckks::serialize_relin_key(ctx, keys.keys->eval.relin));
  w.put_blob(ckks::serialize_galois_keys(ctx, keys.keys->eval.galois));
  return w.take();
}

namespace {

struct KeyUpload {
  Digest digest{};
  std::vector<Bytes> blobs;
};

KeyUpload parse_upload(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  KeyUpload u;
  auto d = r.take(32);
  std::copy(d.begin(), d.end(), u.digest.begin());
  const auto count = r.u32();
  if (count > 16) fail(ErrorCode::kFormatError, "too many key blobs");
  for (std::uint32_t i = 0; i < count; ++i) u.blobs.push_back(r.blob());
  if (!r.done()) fail(ErrorCode::kFormatError, "trailing bytes after key upload");
  return u;
}

}  // namespace

void screen_key_upload(const ClusterConfig& cfg, std::span<const std::uint8_t> payload) {
  const auto u = parse_upload(payload);
  const Digest want = params_digest(cfg);
  if (u.digest != want) fail(ErrorCode::kKeyRejected, "parameter digest does not match the server configuration");
  for (const auto& b : u.blobs) {
    const auto h = ckks::read_key_header(b);
    if (h.kind == ckks::KeyKind::kSecret) fail(ErrorCode::kKeyRejected, "secret key material is never accepted");
    if (h.params != want) fail(ErrorCode::kKeyRejected, "key blob digest does not match the server configuration");
  }
  if (cfg.backend == he::BackendId::kCkks && u.blobs.size() != 3) {
    fail(ErrorCode::kKeyRejected, "expected public, relinearisation and rotation keys");
  }
}

void save_client_keys(const ClusterConfig& cfg, const ClientKeys& keys, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_file((dir / "upload.bin").string(), key_upload_payload(cfg, keys));
  if (keys.keys && keys.keys->secret) {
    const auto path = (dir / "secret.key").string();
    const Bytes blob = ckks::serialize_secret_key(*keys.ring, *keys.keys->secret);
    const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0600);
    if (fd < 0) fail(ErrorCode::kIoError, "cannot create " + path);
    const auto n = ::write(fd, blob.data(), blob.size());
    ::close(fd);
    if (n != static_cast<ssize_t>(blob.size())) fail(ErrorCode::kIoError, "short write " + path);
  }
}

ClientKeys load_client_keys(const ClusterConfig& cfg, const std::filesystem::path& dir) {
  const Bytes upload = read_file((dir / "upload.bin").string());
  screen_key_upload(cfg, upload);
  ClientKeys out;
  if (cfg.backend == he::BackendId::kExact) return out;
  out.ring = make_ring(cfg);
  const auto u = parse_upload(upload);
  ckks::KeySet ks;
  ks.secret = ckks::deserialize_secret_key(*out.ring, read_file((dir / "secret.key").string()));
  ks.public_key = ckks::deserialize_public_key(*out.ring, u.blobs[0]);
  out.keys = std::move(ks);
  return out;
}

std::unique_ptr<he::Engine> make_client_engine(const ClusterConfig& cfg, const ClientKeys& keys,
                                               std::optional<std::uint64_t> seed) {
  if (cfg.backend == he::BackendId::kExact) return std::make_unique<he::ExactEngine>(exact_params(cfg));
  if (!keys.keys || !keys.ring) fail(ErrorCode::kMissingSecretKey, "ckks client needs generated keys");
  ckks::CkksOptions opt;
  opt.seed = seed;
  return std::make_unique<ckks::CkksEngine>(keys.ring, *keys.keys, opt);
}

std::unique_ptr<he::Engine> make_server_engine(const ClusterConfig& cfg, std::span<const std::uint8_t> key_payload) {
  screen_key_upload(cfg, key_payload);
  if (cfg.backend == he::BackendId::kExact) return std::make_unique<he::ExactEngine>(exact_params(cfg));
  const auto u = parse_upload(key_payload);
  auto ring = make_ring(cfg);
  ckks::KeySet ks;
  try {
    ks.public_key = ckks::deserialize_public_key(*ring, u.blobs[0]);
    ks.eval.relin = ckks::deserialize_relin_key(*ring, u.blobs[1]);
    ks.eval.galois = ckks::deserialize_galois_keys(*ring, u.blobs[2]);
  } catch (const Error& e) {
    fail(ErrorCode::kKeyRejected, e.what());
  }
  return std::make_unique<ckks::CkksEngine>(std::move(ring), std::move(ks));
}

}  // namespace bm::cluster
