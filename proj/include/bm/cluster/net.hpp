// SPDX-License-Identifier: Apache-2.0
//
// Blocking TCP sockets and the length-prefixed frame format:
// "BMW1" | msg_type u8 | request_id u64 | payload_len u32 | payload.
#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>

#include "bm/bytes.hpp"

namespace bm::cluster {

enum class MsgType : std::uint8_t { kKeys = 1, kEnroll = 2, kMatch = 3, kResult = 4, kError = 5, kStatus = 6 };

bool known_msg_type(std::uint8_t t);

inline constexpr std::uint32_t kDefaultMaxPayload = 1U << 30;
inline constexpr std::size_t kFrameHeader = 4 + 1 + 8 + 4;

struct Frame {
  std::uint8_t type = 0;  // raw, so unknown types can be answered
  std::uint64_t request_id = 0;
  Bytes payload;
};

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;
  std::string str() const { return host + ":" + std::to_string(port); }
};
// "host:port" or ":port"; InvalidArgument on malformed input.
Endpoint parse_endpoint(const std::string& text);

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket();
  Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
  Socket& operator=(Socket&& o) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  // IoError when the peer is unreachable within `timeout`.
  static Socket connect(const Endpoint& ep, std::chrono::milliseconds timeout = std::chrono::milliseconds(3000));

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }
  void send_frame(MsgType type, std::uint64_t request_id, std::span<const std::uint8_t> payload);
  void send_raw_frame(std::uint8_t type, std::uint64_t request_id, std::span<const std::uint8_t> payload);
  // nullopt on orderly EOF before a header; ProtocolError on bad magic or an
  // oversized payload; IoError on a broken connection.
  std::optional<Frame> recv_frame(std::uint32_t max_payload = kDefaultMaxPayload);
  // Unblock readers and writers on other threads without releasing the fd.
  void shutdown();
  void close();

 private:
  bool read_exact(std::uint8_t* p, std::size_t n, bool eof_ok);
  void write_all(const std::uint8_t* p, std::size_t n);
  int fd_ = -1;
};

class Listener {
 public:
  // Binds and listens; port 0 picks an ephemeral port.
  explicit Listener(const Endpoint& ep);
  ~Listener();
  std::uint16_t port() const { return port_; }
  // Invalid socket once shutdown() was called.
  Socket accept();
  void shutdown();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

}  // namespace bm::cluster
