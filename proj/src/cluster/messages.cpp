// SPDX-License-Identifier: Apache-2.0
#include "bm/cluster/messages.hpp"

namespace bm::cluster {

namespace {

constexpr std::uint32_t kMaxItems = 1U << 24;

std::uint32_t checked_count(ByteReader& r) {
  const auto n = r.u32();
  if (n > kMaxItems || n > r.remaining()) fail(ErrorCode::kFormatError, "implausible element count");
  return n;
}

void put_descriptor(ByteWriter& w, const core::ResultDescriptor& d) {
  w.put_u64(d.layout.S);
  w.put_u64(d.layout.m);
  w.put_u64(d.layout.n_in);
  w.put_u64(d.index_offset);
  w.put_u32(static_cast<std::uint32_t>(d.set_ids.size()));
  for (std::size_t i = 0; i < d.set_ids.size(); ++i) {
    w.put_u64(d.set_ids[i]);
    const auto& occ = d.occupied[i];
    w.put_u32(static_cast<std::uint32_t>(occ.size()));
    Bytes bits((occ.size() + 7) / 8, 0);
    for (std::size_t k = 0; k < occ.size(); ++k) {
      if (occ[k]) bits[k / 8] |= static_cast<std::uint8_t>(1U << (k % 8));
    }
    w.put_bytes(bits);
  }
}

core::ResultDescriptor get_descriptor(ByteReader& r) {
  core::ResultDescriptor d;
  const auto S = r.u64();
  const auto m = r.u64();
  const auto n_in = r.u64();
  if (S == 0 && m == 0 && n_in == 0) {
    r.u64();
    if (r.u32() != 0) fail(ErrorCode::kFormatError, "sets without a layout");
    return d;
  }
  d.layout = core::PackingLayout::make(S, m, n_in);
  d.index_offset = r.u64();
  const auto sets = checked_count(r);
  for (std::uint32_t i = 0; i < sets; ++i) {
    d.set_ids.push_back(r.u64());
    const auto nb = r.u32();
    if (nb != d.layout.B) fail(ErrorCode::kFormatError, "occupancy length differs from B");
    auto bits = r.take((nb + 7) / 8);
    std::vector<bool> occ(nb);
    for (std::size_t k = 0; k < nb; ++k) occ[k] = (bits[k / 8] >> (k % 8)) & 1U;
    d.occupied.push_back(std::move(occ));
  }
  return d;
}

}  // namespace

Bytes encode(const EnrollRequest& req) {
  ByteWriter w;
  w.put_u8(static_cast<std::uint8_t>(req.mode));
  w.put_u64(req.index);
  w.put_u32(static_cast<std::uint32_t>(req.blocks.size()));
  for (auto b : req.blocks) w.put_u64(b);
  w.put_u32(static_cast<std::uint32_t>(req.cts.size()));
  for (const auto& c : req.cts) w.put_blob(c);
  return w.take();
}

EnrollRequest decode_enroll(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  EnrollRequest req;
  const auto mode = r.u8();
  if (mode > 1) fail(ErrorCode::kFormatError, "unknown enroll mode");
  req.mode = static_cast<EnrollRequest::Mode>(mode);
  req.index = r.u64();
  const auto nb = checked_count(r);
  for (std::uint32_t i = 0; i < nb; ++i) req.blocks.push_back(r.u64());
  const auto nc = checked_count(r);
  for (std::uint32_t i = 0; i < nc; ++i) req.cts.push_back(r.blob());
  if (!r.done()) fail(ErrorCode::kFormatError, "trailing bytes after enroll request");
  if (req.mode == EnrollRequest::Mode::kSingle && (req.cts.size() != 1 || !req.blocks.empty())) {
    fail(ErrorCode::kFormatError, "single enrollment carries exactly one ciphertext");
  }
  return req;
}

std::string_view to_string(ShardStatus s) {
  switch (s) {
    case ShardStatus::kOk: return "ok";
    case ShardStatus::kEmpty: return "empty";
    case ShardStatus::kTimeout: return "timeout";
    case ShardStatus::kError: return "error";
  }
  return "?";
}

namespace {

void put_shard_result(ByteWriter& w, const ShardResult& r) {
  w.put_u32(r.shard);
  w.put_u8(static_cast<std::uint8_t>(r.status));
  w.put_string(r.detail);
  w.put_f64(r.compute_ms);
  put_descriptor(w, r.descriptor);
  w.put_u32(static_cast<std::uint32_t>(r.packed.size()));
  for (const auto& b : r.packed) w.put_blob(b);
}

ShardResult get_shard_result(ByteReader& r) {
  ShardResult s;
  s.shard = r.u32();
  const auto st = r.u8();
  if (st > 3) fail(ErrorCode::kFormatError, "unknown shard status");
  s.status = static_cast<ShardStatus>(st);
  s.detail = r.string();
  s.compute_ms = r.f64();
  s.descriptor = get_descriptor(r);
  const auto n = checked_count(r);
  for (std::uint32_t i = 0; i < n; ++i) s.packed.push_back(r.blob());
  return s;
}

}  // namespace

Bytes encode(const ShardResult& r) {
  ByteWriter w;
  put_shard_result(w, r);
  return w.take();
}

ShardResult decode_shard_result(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  auto s = get_shard_result(r);
  if (!r.done()) fail(ErrorCode::kFormatError, "trailing bytes after shard result");
  return s;
}

Bytes encode(const MatchReply& m) {
  ByteWriter w;
  w.put_u8(m.partial ? 1 : 0);
  w.put_f64(m.gather_ms);
  w.put_u32(static_cast<std::uint32_t>(m.shards.size()));
  for (const auto& s : m.shards) put_shard_result(w, s);
  return w.take();
}

MatchReply decode_match_reply(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  MatchReply m;
  m.partial = r.u8() != 0;
  m.gather_ms = r.f64();
  const auto n = checked_count(r);
  for (std::uint32_t i = 0; i < n; ++i) m.shards.push_back(get_shard_result(r));
  if (!r.done()) fail(ErrorCode::kFormatError, "trailing bytes after match reply");
  return m;
}

Bytes encode_error(ErrorCode code, const std::string& message) {
  ByteWriter w;
  w.put_u8(static_cast<std::uint8_t>(code));
  w.put_string(message);
  return w.take();
}

ErrorReply decode_error(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  ErrorReply e;
  e.code = r.u8();
  e.message = r.string();
  return e;
}

void raise_error(std::span<const std::uint8_t> payload) {
  const auto e = decode_error(payload);
  if (e.code < 1 || e.code > static_cast<std::uint8_t>(ErrorCode::kProtocolError)) {
    fail(ErrorCode::kProtocolError, "remote error with unknown code: " + e.message);
  }
  // The message already carries the remote code prefix.
  throw Error(static_cast<ErrorCode>(e.code), "remote: " + e.message);
}

Bytes encode_json(const nlohmann::json& j) {
  const auto s = j.dump();
  return Bytes(s.begin(), s.end());
}

nlohmann::json decode_json(std::span<const std::uint8_t> payload) {
  try {
    return nlohmann::json::parse(payload.begin(), payload.end());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormatError, std::string("status payload: ") + e.what());
  }
}

}  // namespace bm::cluster
