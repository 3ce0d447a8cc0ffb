// SPDX-License-Identifier: Apache-2.0
//
// Deployment configuration shared by client, main server and shards, plus the
// engine/key plumbing every role builds from it.
#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "bm/ckks/ckks_backend.hpp"
#include "bm/ckks/keys.hpp"
#include "bm/core/layout.hpp"
#include "bm/he/engine.hpp"
#include "json.hpp"

namespace bm::cluster {

struct ClusterConfig {
  std::size_t S = 8192;
  std::size_t m = 128;
  std::size_t n_in = 4;
  int depth = 3;
  int scale_bits = 40;
  std::size_t K = 3;
  std::size_t C_cap = 2048;
  he::BackendId backend = he::BackendId::kCkks;
  std::chrono::milliseconds shard_timeout{10000};
  std::chrono::milliseconds connect_timeout{3000};
  std::chrono::milliseconds keys_timeout{300000};
  std::uint32_t max_payload = 1U << 30;
  // Small rings below the 128-bit table; tests only.
  bool allow_insecure = false;
  // Include the rotations for server-side rotate-and-add enrollment in the
  // uploaded key set.
  bool server_enrollment = true;

  core::PackingLayout layout() const { return core::PackingLayout::make(S, m, n_in); }
  std::size_t capacity() const { return K * C_cap; }
  std::size_t ring_degree() const { return 2 * S; }
  // InvalidArgument unless K >= 1 and C_cap is a positive multiple of B.
  void validate() const;

  static ClusterConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  static ClusterConfig load(const std::string& path);
};

// BM_CONFIG, when set, replaces whatever path the caller supplied.
std::string resolve_config_path(const std::string& path);

struct Route {
  std::size_t shard = 0;
  std::size_t local = 0;
};
// CapacityExceeded when g >= K * C_cap.
Route route(const ClusterConfig& cfg, std::uint64_t g);
std::uint64_t global_index(const ClusterConfig& cfg, Route r);

std::shared_ptr<const ckks::RingContext> make_ring(const ClusterConfig& cfg);
// Digest every key and ciphertext of this deployment must carry.
Digest params_digest(const ClusterConfig& cfg);

// Client-held material. For the exact backend there are no keys.
struct ClientKeys {
  std::shared_ptr<const ckks::RingContext> ring;  // null for exact
  std::optional<ckks::KeySet> keys;
};
ClientKeys generate_keys(const ClusterConfig& cfg, Prng& rng);

// The KEYS payload: digest (32) | u32 count | count key blobs. Never contains
// the secret key.
Bytes key_upload_payload(const ClusterConfig& cfg, const ClientKeys& keys);

// Header-level screening done by every server: KeyRejected on a digest
// mismatch or on any secret-key blob.
void screen_key_upload(const ClusterConfig& cfg, std::span<const std::uint8_t> payload);

// Client key directory: secret.key (owner-only permissions) and upload.bin
// (the KEYS payload). The exact backend writes only upload.bin.
void save_client_keys(const ClusterConfig& cfg, const ClientKeys& keys, const std::filesystem::path& dir);
// Loads what a client needs to encrypt and decrypt (no evaluation keys).
ClientKeys load_client_keys(const ClusterConfig& cfg, const std::filesystem::path& dir);

// Engine able to decrypt (client) or evaluation-only (built from an upload).
std::unique_ptr<he::Engine> make_client_engine(const ClusterConfig& cfg, const ClientKeys& keys,
                                               std::optional<std::uint64_t> seed = std::nullopt);
std::unique_ptr<he::Engine> make_server_engine(const ClusterConfig& cfg, std::span<const std::uint8_t> key_payload);

}  // namespace bm::cluster
