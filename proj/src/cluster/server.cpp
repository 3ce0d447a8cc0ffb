// SPDX-License-Identifier: Apache-2.0
#include "bm/cluster/server.hpp"

#include <algorithm>
#include <chrono>

#include "bm/core/pipeline.hpp"

namespace bm::cluster {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// write_file already replaces by rename.
void write_atomic(const fs::path& path, std::span<const std::uint8_t> data) { write_file(path.string(), data); }

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

Bytes ack(nlohmann::json extra = nlohmann::json::object()) {
  extra["ok"] = true;
  return encode_json(extra);
}

}  // namespace

// ---- FrameServer ----------------------------------------------------------

FrameServer::FrameServer(std::uint32_t max_payload) : max_payload_(max_payload) {}

FrameServer::~FrameServer() { stop(); }

std::uint16_t FrameServer::start(const Endpoint& ep) {
  if (running_) fail(ErrorCode::kInvalidArgument, "server already running");
  listener_ = std::make_unique<Listener>(ep);
  port_ = listener_->port();
  stopping_ = false;
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
  return port_;
}

void FrameServer::stop() {
  if (!running_) return;
  {
    std::lock_guard lk(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  on_stop();
  listener_->shutdown();
  if (acceptor_.joinable()) acceptor_.join();
  {
    std::lock_guard lk(mu_);
    for (auto& w : conns_) {
      if (auto c = w.lock()) c->sock.shutdown();
    }
  }
  while (true) {
    std::vector<Worker> batch;
    {
      std::lock_guard lk(mu_);
      batch.swap(workers_);
    }
    if (batch.empty()) break;
    for (auto& w : batch) w.thread.join();
  }
  std::lock_guard lk(mu_);
  conns_.clear();
  listener_.reset();
  running_ = false;
}

bool FrameServer::sleep_unless_stopping(std::chrono::milliseconds d) {
  std::unique_lock lk(mu_);
  // system_clock keeps this on pthread_cond_timedwait, which sanitizers see.
  return !cv_.wait_until(lk, std::chrono::system_clock::now() + d, [this] { return stopping_.load(); });
}

void FrameServer::spawn(std::function<void()> fn) {
  auto done = std::make_shared<std::atomic<bool>>(false);
  std::lock_guard lk(mu_);
  // Reap finished workers; their threads have nothing left to run.
  std::erase_if(workers_, [](Worker& w) {
    if (!w.done->load()) return false;
    w.thread.join();
    return true;
  });
  workers_.push_back({std::thread([fn = std::move(fn), done] {
                        try {
                          fn();
                        } catch (...) {
                        }
                        done->store(true);
                      }),
                      done});
}

void FrameServer::accept_loop() {
  while (!stopping_) {
    Socket s = listener_->accept();
    if (!s.valid()) break;
    auto c = std::make_shared<Conn>();
    c->sock = std::move(s);
    {
      std::lock_guard lk(mu_);
      if (stopping_) break;
      std::erase_if(conns_, [](const auto& w) { return w.expired(); });
      conns_.push_back(c);
    }
    spawn([this, c] { serve(c); });
  }
}

void FrameServer::send(Conn& c, MsgType type, std::uint64_t id, std::span<const std::uint8_t> payload) {
  std::lock_guard lk(c.send_mu);
  c.sock.send_frame(type, id, payload);
}

void FrameServer::serve(std::shared_ptr<Conn> conn) {
  try {
    while (auto f = conn->sock.recv_frame(max_payload_)) {
      if (!known_msg_type(f->type)) {
        send(*conn, MsgType::kError, f->request_id,
             encode_error(ErrorCode::kProtocolError, "unknown msg_type " + std::to_string(f->type)));
        continue;
      }
      spawn([this, conn, frame = std::move(*f)]() mutable { dispatch(conn, std::move(frame)); });
    }
  } catch (const Error& e) {
    // Bad magic or an oversized frame: the stream cannot be resynchronised.
    if (e.code() == ErrorCode::kProtocolError || e.code() == ErrorCode::kFormatError) {
      try {
        send(*conn, MsgType::kError, 0, encode_error(ErrorCode::kProtocolError, e.what()));
      } catch (...) {
      }
    }
  }
  conn->sock.shutdown();
}

void FrameServer::dispatch(std::shared_ptr<Conn> conn, Frame frame) {
  Reply r;
  try {
    r = handle(static_cast<MsgType>(frame.type), frame);
  } catch (const Error& e) {
    r = {MsgType::kError, encode_error(e.code(), e.what())};
  } catch (const std::exception& e) {
    r = {MsgType::kError, encode_error(ErrorCode::kIoError, e.what())};
  }
  if (stopping_) return;  // a stopped server answers nothing
  try {
    send(*conn, r.type, frame.request_id, r.payload);
  } catch (...) {
  }
}

// ---- ShardServer ----------------------------------------------------------

ShardServer::ShardServer(ClusterConfig cfg, fs::path data_dir)
    : FrameServer(cfg.max_payload), cfg_(std::move(cfg)), dir_(std::move(data_dir)) {
  cfg_.validate();
  layout_ = cfg_.layout();
  if (!dir_.empty()) {
    fs::create_directories(dir_);
    recover();
  }
}

ShardServer::~ShardServer() { stop(); }

std::shared_ptr<ShardServer::State> ShardServer::state() const {
  std::lock_guard lk(state_mu_);
  return state_;
}

bool ShardServer::ready() const { return state() != nullptr; }

std::size_t ShardServer::enrolled() const {
  auto st = state();
  return st ? st->store->enrolled() : 0;
}

std::vector<std::uint8_t> ShardServer::occupancy() const {
  auto st = state();
  return st ? st->store->occupancy() : std::vector<std::uint8_t>(cfg_.C_cap, 0);
}

std::shared_ptr<ShardServer::State> ShardServer::build_state(std::span<const std::uint8_t> key_payload) const {
  auto st = std::make_shared<State>();
  st->engine = make_server_engine(cfg_, key_payload);
  st->store = std::make_unique<core::EnrollmentStore>(*st->engine, layout_, cfg_.C_cap);
  st->masks = core::make_masks(layout_);
  st->key_payload.assign(key_payload.begin(), key_payload.end());
  return st;
}

void ShardServer::apply_enroll(State& st, const EnrollRequest& req) const {
  if (req.mode == EnrollRequest::Mode::kSingle) {
    const auto ct = he::deserialize(*st.engine, req.cts[0]);
    st.store->enroll(static_cast<std::size_t>(req.index), ct, st.masks);
    return;
  }
  if (req.index >= st.store->set_count()) {
    fail(ErrorCode::kCapacityExceeded, "set " + std::to_string(req.index) + " beyond shard capacity");
  }
  std::vector<he::LeveledCiphertext> cts;
  for (const auto& b : req.cts) cts.push_back(he::deserialize(*st.engine, b));
  std::vector<std::size_t> blocks(req.blocks.begin(), req.blocks.end());
  st.store->put_packed_set(static_cast<std::size_t>(req.index), std::move(cts), blocks);
}

void ShardServer::persist_occupancy(const State& st) const {
  ByteWriter w;
  w.put_magic("BMO1");
  const auto occ = st.store->occupancy();
  w.put_u64(occ.size());
  w.put_bytes(occ);
  write_atomic(dir_ / "occupancy.bin", w.bytes());
}

void ShardServer::recover() {
  const auto keys = dir_ / "keys.bin";
  const auto log = dir_ / "store.log";
  if (!fs::exists(keys)) {
    if (fs::exists(log) && fs::file_size(log) > 0) fail(ErrorCode::kFormatError, "store log present without keys");
    return;
  }
  auto st = build_state(read_file(keys.string()));
  if (fs::exists(log)) {
    const Bytes raw = read_file(log.string());
    ByteReader r(raw);
    std::size_t good = 0;
    while (r.remaining() >= 4) {
      const auto len = r.u32();
      if (len > r.remaining()) break;  // torn tail from an interrupted append
      apply_enroll(*st, decode_enroll(r.take(len)));
      good = raw.size() - r.remaining();
    }
    if (good != raw.size()) write_atomic(log, std::span(raw).first(good));
  }
  const auto occ_path = dir_ / "occupancy.bin";
  if (fs::exists(occ_path)) {
    const Bytes raw = read_file(occ_path.string());
    ByteReader r(raw);
    r.expect_magic("BMO1");
    const auto n = r.u64();
    auto bytes = r.take(n);
    const auto replayed = st->store->occupancy();
    if (!std::equal(bytes.begin(), bytes.end(), replayed.begin(), replayed.end())) {
      fail(ErrorCode::kFormatError, "occupancy sidecar disagrees with the replayed store log");
    }
  }
  state_ = std::move(st);
}

ShardServer::Reply ShardServer::on_keys(const Frame& f) {
  auto fresh = build_state(f.payload);
  std::lock_guard wl(write_mu_);
  if (auto cur = state(); cur && cur->key_payload == fresh->key_payload) return {MsgType::kStatus, ack()};
  // New keys invalidate everything stored under the old ones.
  if (!dir_.empty()) {
    write_atomic(dir_ / "keys.bin", f.payload);
    fs::remove(dir_ / "store.log");
    persist_occupancy(*fresh);
  }
  {
    std::lock_guard lk(state_mu_);
    state_ = fresh;
  }
  return {MsgType::kStatus, ack()};
}

ShardServer::Reply ShardServer::on_enroll(const Frame& f) {
  auto st = state();
  if (!st) fail(ErrorCode::kNotReady, "shard has no evaluation keys");
  const auto req = decode_enroll(f.payload);
  std::lock_guard wl(write_mu_);
  apply_enroll(*st, req);
  if (!dir_.empty()) {
    ByteWriter rec;
    rec.put_blob(f.payload);
    append_file((dir_ / "store.log").string(), rec.bytes());
    persist_occupancy(*st);
  }
  return {MsgType::kStatus, ack({{"enrolled", st->store->enrolled()}})};
}

ShardServer::Reply ShardServer::on_match(const Frame& f) {
  auto st = state();
  if (!st) fail(ErrorCode::kNotReady, "shard has no evaluation keys");
  const auto t0 = Clock::now();
  const auto query = he::deserialize(*st->engine, f.payload);
  const auto snap = st->store->snapshot();
  ShardResult r;
  if (snap.sets.empty()) {
    r.status = ShardStatus::kEmpty;
  } else {
    auto pr = core::match_store(*st->engine, query, snap, st->masks);
    for (const auto& ct : pr.packed) r.packed.push_back(he::serialize(*st->engine, ct));
    r.descriptor = std::move(pr.descriptor);
  }
  r.compute_ms = ms_since(t0);
  if (const auto delay = match_delay_ms_.load(); delay > 0) {
    if (!sleep_unless_stopping(std::chrono::milliseconds(delay))) fail(ErrorCode::kIoError, "shard stopping");
  }
  return {MsgType::kResult, encode(r)};
}

nlohmann::json ShardServer::status_json() const {
  auto st = state();
  return {{"role", "shard"},
          {"ready", st != nullptr},
          {"enrolled", st ? st->store->enrolled() : 0},
          {"capacity", cfg_.C_cap},
          {"backend", std::string(he::to_string(cfg_.backend))}};
}

ShardServer::Reply ShardServer::handle(MsgType type, const Frame& frame) {
  switch (type) {
    case MsgType::kKeys: return on_keys(frame);
    case MsgType::kEnroll: return on_enroll(frame);
    case MsgType::kMatch: return on_match(frame);
    case MsgType::kStatus: return {MsgType::kStatus, encode_json(status_json())};
    default: fail(ErrorCode::kProtocolError, "message type not accepted by a shard");
  }
}

// ---- ShardLink ------------------------------------------------------------

ShardLink::ShardLink(Endpoint ep, std::chrono::milliseconds connect_timeout, std::uint32_t max_payload)
    : ep_(std::move(ep)), connect_timeout_(connect_timeout), max_payload_(max_payload) {}

ShardLink::~ShardLink() { close(); }

std::shared_ptr<ShardLink::Conn> ShardLink::ensure() {
  std::lock_guard lk(mu_);
  if (conn_) {
    std::lock_guard cl(conn_->mu);
    if (conn_->alive) return conn_;
  }
  auto c = std::make_shared<Conn>();
  c->sock = Socket::connect(ep_, connect_timeout_);
  conn_ = c;
  readers_.emplace_back(read_loop, c, max_payload_);
  return c;
}

void ShardLink::read_loop(std::shared_ptr<Conn> c, std::uint32_t max_payload) {
  try {
    while (auto f = c->sock.recv_frame(max_payload)) {
      std::lock_guard lk(c->mu);
      auto it = c->pending.find(f->request_id);
      if (it == c->pending.end()) continue;  // cancelled after a timeout
      it->second.set_value(std::move(*f));
      c->pending.erase(it);
    }
  } catch (...) {
  }
  std::lock_guard lk(c->mu);
  c->alive = false;
  for (auto& [id, p] : c->pending) {
    p.set_exception(std::make_exception_ptr(Error(ErrorCode::kIoError, "shard connection lost")));
  }
  c->pending.clear();
}

std::future<Frame> ShardLink::send(MsgType type, std::uint64_t id, std::span<const std::uint8_t> payload) {
  auto c = ensure();
  std::future<Frame> fut;
  {
    std::lock_guard lk(c->mu);
    if (!c->alive) fail(ErrorCode::kIoError, "shard connection lost");
    fut = c->pending[id].get_future();
  }
  try {
    std::lock_guard sl(c->send_mu);
    c->sock.send_frame(type, id, payload);
  } catch (...) {
    c->sock.shutdown();
    std::lock_guard lk(c->mu);
    c->pending.erase(id);
    throw;
  }
  return fut;
}

void ShardLink::cancel(std::uint64_t id) {
  std::shared_ptr<Conn> c;
  {
    std::lock_guard lk(mu_);
    c = conn_;
  }
  if (!c) return;
  std::lock_guard lk(c->mu);
  c->pending.erase(id);
}

void ShardLink::close() {
  std::vector<std::thread> readers;
  {
    std::lock_guard lk(mu_);
    if (conn_) conn_->sock.shutdown();
    conn_.reset();
    readers.swap(readers_);
  }
  for (auto& t : readers) t.join();
}

// ---- MainServer -----------------------------------------------------------

MainServer::MainServer(ClusterConfig cfg, std::vector<Endpoint> shards, fs::path data_dir)
    : FrameServer(cfg.max_payload), cfg_(std::move(cfg)), dir_(std::move(data_dir)) {
  cfg_.validate();
  if (shards.size() != cfg_.K) {
    fail(ErrorCode::kInvalidArgument,
         "config has K = " + std::to_string(cfg_.K) + " but " + std::to_string(shards.size()) + " shard addresses");
  }
  for (auto& ep : shards) {
    links_.push_back(std::make_unique<ShardLink>(std::move(ep), cfg_.connect_timeout, cfg_.max_payload));
  }
  if (!dir_.empty()) {
    fs::create_directories(dir_);
    if (const auto p = dir_ / "keys.bin"; fs::exists(p)) {
      Bytes k = read_file(p.string());
      screen_key_upload(cfg_, k);
      keys_ = std::move(k);
    }
  }
}

MainServer::~MainServer() { stop(); }

void MainServer::on_stop() {
  for (auto& l : links_) l->close();
}

bool MainServer::has_keys() const {
  std::lock_guard lk(keys_mu_);
  return keys_.has_value();
}

void MainServer::require_keys() const {
  if (!has_keys()) fail(ErrorCode::kNotReady, "no keys uploaded yet");
}

std::vector<MainServer::Outcome> MainServer::scatter(const std::vector<std::pair<std::size_t, Bytes>>& requests,
                                                     MsgType type, Clock::time_point deadline) {
  std::vector<Outcome> out(requests.size());
  std::vector<std::optional<std::future<Frame>>> futs(requests.size());
  std::vector<std::uint64_t> ids(requests.size());
  for (std::size_t i = 0; i < requests.size(); ++i) {
    ids[i] = next_id_++;
    try {
      futs[i] = links_[requests[i].first]->send(type, ids[i], requests[i].second);
    } catch (const std::exception& e) {
      out[i].detail = e.what();
    }
  }
  for (std::size_t i = 0; i < requests.size(); ++i) {
    if (!futs[i]) continue;
    if (futs[i]->wait_until(deadline) != std::future_status::ready) {
      out[i].timed_out = true;
      out[i].detail = "no reply within the shard deadline";
      links_[requests[i].first]->cancel(ids[i]);
      continue;
    }
    try {
      out[i].frame = futs[i]->get();
      out[i].ok = true;
    } catch (const std::exception& e) {
      out[i].detail = e.what();
    }
  }
  return out;
}

MainServer::Reply MainServer::on_keys(const Frame& f) {
  screen_key_upload(cfg_, f.payload);
  if (!dir_.empty()) write_atomic(dir_ / "keys.bin", f.payload);
  {
    std::lock_guard lk(keys_mu_);
    keys_ = f.payload;
  }
  std::vector<std::pair<std::size_t, Bytes>> reqs;
  for (std::size_t i = 0; i < links_.size(); ++i) reqs.emplace_back(i, f.payload);
  const auto outs = scatter(reqs, MsgType::kKeys, Clock::now() + cfg_.keys_timeout);
  for (std::size_t i = 0; i < outs.size(); ++i) {
    if (!outs[i].ok) fail(ErrorCode::kShardTimeout, "shard " + std::to_string(i) + ": " + outs[i].detail);
    if (outs[i].frame.type == static_cast<std::uint8_t>(MsgType::kError)) raise_error(outs[i].frame.payload);
  }
  return {MsgType::kStatus, ack({{"shards", links_.size()}})};
}

MainServer::Reply MainServer::on_enroll(const Frame& f) {
  require_keys();
  auto req = decode_enroll(f.payload);
  Route r;
  if (req.mode == EnrollRequest::Mode::kSingle) {
    r = route(cfg_, req.index);
    req.index = r.local;
  } else {
    const auto B = cfg_.layout().B;
    if (req.index >= cfg_.capacity() / B) {
      fail(ErrorCode::kCapacityExceeded, "set " + std::to_string(req.index) + " beyond cluster capacity");
    }
    r = route(cfg_, req.index * B);
    req.index = r.local / B;
  }
  const auto outs = scatter({{r.shard, encode(req)}}, MsgType::kEnroll, Clock::now() + cfg_.shard_timeout);
  if (!outs[0].ok) fail(ErrorCode::kShardTimeout, "shard " + std::to_string(r.shard) + ": " + outs[0].detail);
  if (outs[0].frame.type == static_cast<std::uint8_t>(MsgType::kError)) raise_error(outs[0].frame.payload);
  auto j = decode_json(outs[0].frame.payload);
  j["shard"] = r.shard;
  j["local"] = r.local;
  return {MsgType::kStatus, encode_json(j)};
}

MainServer::Reply MainServer::on_match(const Frame& f) {
  require_keys();
  const auto t0 = Clock::now();
  std::vector<std::pair<std::size_t, Bytes>> reqs;
  for (std::size_t i = 0; i < links_.size(); ++i) reqs.emplace_back(i, f.payload);
  const auto outs = scatter(reqs, MsgType::kMatch, t0 + cfg_.shard_timeout);
  MatchReply reply;
  for (std::size_t i = 0; i < outs.size(); ++i) {
    ShardResult sr;
    const auto& o = outs[i];
    if (o.ok && o.frame.type == static_cast<std::uint8_t>(MsgType::kResult)) {
      try {
        sr = decode_shard_result(o.frame.payload);
        sr.descriptor.index_offset = static_cast<std::uint64_t>(i) * cfg_.C_cap;
      } catch (const Error& e) {
        sr = {};
        sr.status = ShardStatus::kError;
        sr.detail = e.what();
      }
    } else if (o.ok) {
      sr.status = ShardStatus::kError;
      sr.detail = o.frame.type == static_cast<std::uint8_t>(MsgType::kError) ? decode_error(o.frame.payload).message
                                                                               : "unexpected reply type";
    } else {
      sr.status = ShardStatus::kTimeout;
      sr.detail = o.detail;
    }
    sr.shard = static_cast<std::uint32_t>(i);
    if (sr.status == ShardStatus::kTimeout || sr.status == ShardStatus::kError) reply.partial = true;
    reply.shards.push_back(std::move(sr));
  }
  reply.gather_ms = ms_since(t0);
  return {MsgType::kResult, encode(reply)};
}

MainServer::Reply MainServer::on_status() {
  std::vector<std::pair<std::size_t, Bytes>> reqs;
  for (std::size_t i = 0; i < links_.size(); ++i) reqs.emplace_back(i, Bytes{});
  const auto wait = std::min(cfg_.shard_timeout, std::chrono::milliseconds(2000));
  const auto outs = scatter(reqs, MsgType::kStatus, Clock::now() + wait);
  nlohmann::json shards = nlohmann::json::array();
  for (std::size_t i = 0; i < outs.size(); ++i) {
    nlohmann::json s = {{"id", i}, {"endpoint", links_[i]->endpoint().str()}, {"reachable", false}, {"ready", false}};
    if (outs[i].ok && outs[i].frame.type == static_cast<std::uint8_t>(MsgType::kStatus)) {
      const auto j = decode_json(outs[i].frame.payload);
      s["reachable"] = true;
      s["ready"] = j.value("ready", false);
      s["enrolled"] = j.value("enrolled", 0);
    } else {
      s["detail"] = outs[i].detail;
    }
    shards.push_back(std::move(s));
  }
  nlohmann::json j = {{"role", "main"}, {"keys", has_keys()}, {"K", cfg_.K}, {"C_cap", cfg_.C_cap}, {"shards", shards}};
  return {MsgType::kStatus, encode_json(j)};
}

MainServer::Reply MainServer::handle(MsgType type, const Frame& frame) {
  switch (type) {
    case MsgType::kKeys: return on_keys(frame);
    case MsgType::kEnroll: return on_enroll(frame);
    case MsgType::kMatch: return on_match(frame);
    case MsgType::kStatus: return on_status();
    default: fail(ErrorCode::kProtocolError, "message type not accepted by the main server");
  }
}

}  // namespace bm::cluster
