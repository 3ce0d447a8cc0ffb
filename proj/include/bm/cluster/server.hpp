// SPDX-License-Identifier: Apache-2.0
//
// Shard and main servers. Both answer every frame on its own worker thread,
// so one slow request never blocks the others on the same connection;
// replies carry the request_id of the frame they answer.
#pragma once

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "bm/cluster/config.hpp"
#include "bm/cluster/messages.hpp"
#include "bm/cluster/net.hpp"
#include "bm/core/store.hpp"

namespace bm::cluster {

class FrameServer {
 public:
  explicit FrameServer(std::uint32_t max_payload);
  virtual ~FrameServer();
  FrameServer(const FrameServer&) = delete;
  FrameServer& operator=(const FrameServer&) = delete;

  // Returns the bound port.
  std::uint16_t start(const Endpoint& ep);
  // Closes the listener and every connection, then waits for workers.
  // Derived destructors must call it.
  void stop();
  std::uint16_t port() const { return port_; }
  bool running() const { return running_; }

 protected:
  struct Reply {
    MsgType type = MsgType::kStatus;
    Bytes payload;
  };
  virtual Reply handle(MsgType type, const Frame& frame) = 0;
  // Called once stop() begins, before waiting for in-flight workers.
  virtual void on_stop() {}
  // Sleep that returns early (false) when the server is stopping.
  bool sleep_unless_stopping(std::chrono::milliseconds d);
  bool stopping() const { return stopping_; }

 private:
  struct Conn {
    Socket sock;
    std::mutex send_mu;
  };
  void accept_loop();
  void serve(std::shared_ptr<Conn> conn);
  void dispatch(std::shared_ptr<Conn> conn, Frame frame);
  void send(Conn& c, MsgType type, std::uint64_t id, std::span<const std::uint8_t> payload);
  void spawn(std::function<void()> fn);

  std::uint32_t max_payload_;
  std::unique_ptr<Listener> listener_;
  std::uint16_t port_ = 0;
  std::thread acceptor_;
  std::atomic<bool> running_{false};
  std::atomic<bool> stopping_{false};
  std::mutex mu_;
  std::condition_variable cv_;
  struct Worker {
    std::thread thread;
    std::shared_ptr<std::atomic<bool>> done;
  };
  std::vector<Worker> workers_;
  std::vector<std::weak_ptr<Conn>> conns_;
};

// One store of C_cap enrollees. With a data directory the uploaded keys, an
// append log of enrollments and an occupancy sidecar survive restarts.
class ShardServer final : public FrameServer {
 public:
  ShardServer(ClusterConfig cfg, std::filesystem::path data_dir = {});
  ~ShardServer() override;

  bool ready() const;
  std::size_t enrolled() const;
  std::vector<std::uint8_t> occupancy() const;
  // Fault injection: hold every MATCH reply for this long.
  void set_match_delay(std::chrono::milliseconds d) { match_delay_ms_ = d.count(); }

 protected:
  Reply handle(MsgType type, const Frame& frame) override;

 private:
  struct State {
    std::unique_ptr<he::Engine> engine;
    std::unique_ptr<core::EnrollmentStore> store;
    core::MaskSet masks;
    Bytes key_payload;
  };
  std::shared_ptr<State> state() const;
  std::shared_ptr<State> build_state(std::span<const std::uint8_t> key_payload) const;
  void apply_enroll(State& st, const EnrollRequest& req) const;
  void persist_occupancy(const State& st) const;
  void recover();
  Reply on_keys(const Frame& f);
  Reply on_enroll(const Frame& f);
  Reply on_match(const Frame& f);
  nlohmann::json status_json() const;

  ClusterConfig cfg_;
  core::PackingLayout layout_;
  std::filesystem::path dir_;
  mutable std::mutex state_mu_;
  std::shared_ptr<State> state_;
  std::mutex write_mu_;  // serializes enrollments and their log appends
  std::atomic<std::int64_t> match_delay_ms_{0};
};

// Persistent connection to one shard. A reader thread completes the promise
// registered under each request_id, so replies may arrive in any order.
class ShardLink {
 public:
  ShardLink(Endpoint ep, std::chrono::milliseconds connect_timeout, std::uint32_t max_payload);
  ~ShardLink();
  // IoError when the shard cannot be reached.
  std::future<Frame> send(MsgType type, std::uint64_t id, std::span<const std::uint8_t> payload);
  void cancel(std::uint64_t id);
  void close();
  const Endpoint& endpoint() const { return ep_; }

 private:
  struct Conn {
    Socket sock;
    std::mutex send_mu;
    std::mutex mu;
    std::map<std::uint64_t, std::promise<Frame>> pending;
    bool alive = true;
  };
  std::shared_ptr<Conn> ensure();
  static void read_loop(std::shared_ptr<Conn> c, std::uint32_t max_payload);

  Endpoint ep_;
  std::chrono::milliseconds connect_timeout_;
  std::uint32_t max_payload_;
  std::mutex mu_;
  std::shared_ptr<Conn> conn_;
  std::vector<std::thread> readers_;
};

// Routes enrollments, scatters matches to every shard and gathers one
// terminal entry per shard (result, empty, timeout or error).
class MainServer final : public FrameServer {
 public:
  MainServer(ClusterConfig cfg, std::vector<Endpoint> shards, std::filesystem::path data_dir = {});
  ~MainServer() override;

  bool has_keys() const;

 protected:
  Reply handle(MsgType type, const Frame& frame) override;
  void on_stop() override;

 private:
  struct Outcome {
    bool ok = false;
    bool timed_out = false;
    Frame frame;
    std::string detail;
  };
  // Send to the given shards concurrently and wait until `deadline`.
  std::vector<Outcome> scatter(const std::vector<std::pair<std::size_t, Bytes>>& requests, MsgType type,
                               std::chrono::steady_clock::time_point deadline);
  Reply on_keys(const Frame& f);
  Reply on_enroll(const Frame& f);
  Reply on_match(const Frame& f);
  Reply on_status();
  void require_keys() const;

  ClusterConfig cfg_;
  std::filesystem::path dir_;
  std::vector<std::unique_ptr<ShardLink>> links_;
  std::atomic<std::uint64_t> next_id_{1};
  mutable std::mutex keys_mu_;
  std::optional<Bytes> keys_;
};

}  // namespace bm::cluster
