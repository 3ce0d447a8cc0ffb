// SPDX-License-Identifier: Apache-2.0
#include "bm/cluster/client.hpp"

#include "bm/core/features.hpp"

namespace bm::cluster {

Client::Client(const Endpoint& server, const ClusterConfig& cfg)
    : cfg_(cfg), sock_(Socket::connect(server, cfg.connect_timeout)) {}

Frame Client::call(MsgType type, std::span<const std::uint8_t> payload) {
  const auto id = next_id_++;
  sock_.send_frame(type, id, payload);
  auto f = sock_.recv_frame(cfg_.max_payload);
  if (!f) fail(ErrorCode::kIoError, "server closed the connection");
  if (f->request_id != id) fail(ErrorCode::kProtocolError, "reply for an unexpected request id");
  if (f->type == static_cast<std::uint8_t>(MsgType::kError)) raise_error(f->payload);
  return std::move(*f);
}

void Client::upload_keys(std::span<const std::uint8_t> key_payload) { call(MsgType::kKeys, key_payload); }

nlohmann::json Client::enroll(std::uint64_t g, const Bytes& ct_blob) {
  EnrollRequest req;
  req.index = g;
  req.cts.push_back(ct_blob);
  return decode_json(call(MsgType::kEnroll, encode(req)).payload);
}

nlohmann::json Client::enroll_packed(std::uint64_t set, const std::vector<std::uint64_t>& blocks,
                                     const std::vector<Bytes>& cts) {
  EnrollRequest req;
  req.mode = EnrollRequest::Mode::kPackedSet;
  req.index = set;
  req.blocks = blocks;
  req.cts = cts;
  return decode_json(call(MsgType::kEnroll, encode(req)).payload);
}

MatchReply Client::match(const Bytes& query_blob) {
  const auto f = call(MsgType::kMatch, query_blob);
  if (f.type != static_cast<std::uint8_t>(MsgType::kResult)) fail(ErrorCode::kProtocolError, "expected RESULT");
  return decode_match_reply(f.payload);
}

nlohmann::json Client::status() { return decode_json(call(MsgType::kStatus, {}).payload); }

Bytes encrypt_enrollee(const he::Engine& engine, const core::PackingLayout& layout, std::span<const double> f) {
  const auto pt = core::prepare_enroll_vector(f, layout);
  return he::serialize(engine, engine.encrypt(pt.span()));
}

Bytes encrypt_query(const he::Engine& engine, const core::PackingLayout& layout, std::span<const double> f) {
  const auto pt = core::prepare_query_vector(f, layout);
  return he::serialize(engine, engine.encrypt(pt.span()));
}

std::vector<PackedSetUpload> pack_enrollees(const he::Engine& engine, const core::PackingLayout& layout,
                                            const std::map<std::uint64_t, std::vector<double>>& features) {
  std::map<std::uint64_t, std::vector<std::pair<std::size_t, std::vector<double>>>> by_set;
  for (const auto& [g, f] : features) by_set[g / layout.B].emplace_back(g % layout.B, core::l2_normalize(f));
  std::vector<PackedSetUpload> out;
  for (const auto& [t, members] : by_set) {
    PackedSetUpload up;
    up.set = t;
    std::vector<const std::vector<double>*> units(layout.B, nullptr);
    for (const auto& [k, u] : members) {
      if (u.size() != layout.m) fail(ErrorCode::kInvalidDim, "feature dimension differs from m");
      units[k] = &u;
      up.blocks.push_back(k);
    }
    for (std::size_t i = 0; i < layout.n_in; ++i) {
      const auto pt = core::pack_set_plaintext(layout, i, units);
      up.cts.push_back(he::serialize(engine, engine.encrypt_at(pt.span(), engine.depth() - 1)));
    }
    out.push_back(std::move(up));
  }
  return out;
}

core::MatchResult client_decide(const he::Engine& engine, const MatchReply& reply, double theta) {
  std::map<std::uint64_t, double> merged;
  for (const auto& sr : reply.shards) {
    if (sr.status != ShardStatus::kOk) continue;
    std::vector<std::vector<double>> packed;
    try {
      for (const auto& blob : sr.packed) packed.push_back(engine.decrypt(he::deserialize(engine, blob)));
    } catch (const Error& e) {
      fail(ErrorCode::kDecryptionFailure, "shard " + std::to_string(sr.shard) + ": " + e.what());
    }
    for (const auto& [g, v] : core::extract_scores(packed, sr.descriptor)) merged.emplace(g, v);
  }
  return core::decide(std::move(merged), theta);
}

}  // namespace bm::cluster
