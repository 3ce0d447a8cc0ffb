// SPDX-License-Identifier: Apache-2.0
//
// Client side of the cluster protocol: one connection to the main server,
// synchronous request/reply. Encryption, decryption and the final decision
// happen here and nowhere else.
#pragma once

#include <map>

#include "bm/cluster/config.hpp"
#include "bm/cluster/messages.hpp"
#include "bm/cluster/net.hpp"
#include "bm/core/pipeline.hpp"

namespace bm::cluster {

class Client {
 public:
  Client(const Endpoint& server, const ClusterConfig& cfg);

  // Raw round trip; ERROR replies are rethrown with their carried code.
  Frame call(MsgType type, std::span<const std::uint8_t> payload);

  void upload_keys(std::span<const std::uint8_t> key_payload);
  // Fresh level-d encryption of one enrollee, packed on the server.
  nlohmann::json enroll(std::uint64_t g, const Bytes& ct_blob);
  // Client-packed set: N_in level d-1 ciphertexts holding `blocks`.
  nlohmann::json enroll_packed(std::uint64_t set, const std::vector<std::uint64_t>& blocks,
                               const std::vector<Bytes>& cts);
  MatchReply match(const Bytes& query_blob);
  nlohmann::json status();
  Socket& socket() { return sock_; }

 private:
  ClusterConfig cfg_;
  Socket sock_;
  std::uint64_t next_id_ = 1;
};

Bytes encrypt_enrollee(const he::Engine& engine, const core::PackingLayout& layout, std::span<const double> f);
Bytes encrypt_query(const he::Engine& engine, const core::PackingLayout& layout, std::span<const double> f);

// Client-side packing of many enrollees into whole sets, grouped by global
// set index g / B. Vectors are normalised here.
struct PackedSetUpload {
  std::uint64_t set = 0;
  std::vector<std::uint64_t> blocks;
  std::vector<Bytes> cts;
};
std::vector<PackedSetUpload> pack_enrollees(const he::Engine& engine, const core::PackingLayout& layout,
                                            const std::map<std::uint64_t, std::vector<double>>& features);

// Decrypt every packed blob, extract scores per shard descriptor, merge by
// global index and decide. DecryptionFailure when a blob cannot be opened.
core::MatchResult client_decide(const he::Engine& engine, const MatchReply& reply, double theta);

}  // namespace bm::cluster
