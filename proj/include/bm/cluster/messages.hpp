// SPDX-License-Identifier: Apache-2.0
//
// Payload codecs for the cluster protocol. The main server treats ciphertext
// blobs as opaque bytes; only shards and clients deserialize them.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bm/bytes.hpp"
#include "bm/core/pipeline.hpp"
#include "json.hpp"

namespace bm::cluster {

// ENROLL: either one fresh enrollee ciphertext for server-side packing, or a
// whole client-packed set. Indices are global on the client->main hop and
// local on the main->shard hop.
struct EnrollRequest {
  enum class Mode : std::uint8_t { kSingle = 0, kPackedSet = 1 };
  Mode mode = Mode::kSingle;
  std::uint64_t index = 0;  // enrollee index (single) or set index (packed)
  std::vector<std::uint64_t> blocks;  // packed: occupied blocks
  std::vector<Bytes> cts;             // single: 1 blob; packed: N_in blobs
};
Bytes encode(const EnrollRequest& req);
EnrollRequest decode_enroll(std::span<const std::uint8_t> payload);

enum class ShardStatus : std::uint8_t { kOk = 0, kEmpty = 1, kTimeout = 2, kError = 3 };
std::string_view to_string(ShardStatus s);

struct ShardResult {
  std::uint32_t shard = 0;
  ShardStatus status = ShardStatus::kOk;
  std::string detail;
  core::ResultDescriptor descriptor;
  std::vector<Bytes> packed;
  double compute_ms = 0.0;  // measured on the shard
};
Bytes encode(const ShardResult& r);
ShardResult decode_shard_result(std::span<const std::uint8_t> payload);

// RESULT from main to client: one entry per shard, in shard order.
struct MatchReply {
  bool partial = false;
  std::vector<ShardResult> shards;
  double gather_ms = 0.0;  // main: scatter to last reply
};
Bytes encode(const MatchReply& r);
MatchReply decode_match_reply(std::span<const std::uint8_t> payload);

struct ErrorReply {
  std::uint8_t code = 0;
  std::string message;
};
Bytes encode_error(ErrorCode code, const std::string& message);
ErrorReply decode_error(std::span<const std::uint8_t> payload);
// Rethrow an ERROR payload as the library error it carries.
[[noreturn]] void raise_error(std::span<const std::uint8_t> payload);

Bytes encode_json(const nlohmann::json& j);
nlohmann::json decode_json(std::span<const std::uint8_t> payload);

}  // namespace bm::cluster
