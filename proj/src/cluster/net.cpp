// SPDX-License-Identifier: Apache-2.0
#include "bm/cluster/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace bm::cluster {

bool known_msg_type(std::uint8_t t) { return t >= 1 && t <= 6; }

Endpoint parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) fail(ErrorCode::kInvalidArgument, "endpoint must be host:port, got " + text);
  Endpoint ep;
  ep.host = text.substr(0, colon);
  if (ep.host.empty()) ep.host = "127.0.0.1";
  try {
    const int port = std::stoi(text.substr(colon + 1));
    if (port < 0 || port > 65535) throw std::out_of_range("port");
    ep.port = static_cast<std::uint16_t>(port);
  } catch (const std::exception&) {
    fail(ErrorCode::kInvalidArgument, "bad port in " + text);
  }
  return ep;
}

namespace {

sockaddr_in resolve(const Endpoint& ep) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(ep.port);
  if (inet_pton(AF_INET, ep.host.c_str(), &addr.sin_addr) == 1) return addr;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  addrinfo* res = nullptr;
  if (getaddrinfo(ep.host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
    fail(ErrorCode::kIoError, "cannot resolve " + ep.host);
  }
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  freeaddrinfo(res);
  return addr;
}

[[noreturn]] void sys_fail(const std::string& what) { fail(ErrorCode::kIoError, what + ": " + std::strerror(errno)); }

}  // namespace

Socket::~Socket() { close(); }

Socket& Socket::operator=(Socket&& o) noexcept {
  if (this != &o) {
    close();
    fd_ = o.fd_;
    o.fd_ = -1;
  }
  return *this;
}

Socket Socket::connect(const Endpoint& ep, std::chrono::milliseconds timeout) {
  const sockaddr_in addr = resolve(ep);
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s.valid()) sys_fail("socket");
  const int flags = fcntl(s.fd_, F_GETFL);
  fcntl(s.fd_, F_SETFL, flags | O_NONBLOCK);
  if (::connect(s.fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
    if (errno != EINPROGRESS) sys_fail("connect " + ep.str());
    pollfd p{s.fd_, POLLOUT, 0};
    const int r = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (r <= 0) fail(ErrorCode::kIoError, "connect " + ep.str() + " timed out");
    int err = 0;
    socklen_t len = sizeof err;
    getsockopt(s.fd_, SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) {
      errno = err;
      sys_fail("connect " + ep.str());
    }
  }
  fcntl(s.fd_, F_SETFL, flags);
  const int one = 1;
  setsockopt(s.fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return s;
}

bool Socket::read_exact(std::uint8_t* p, std::size_t n, bool eof_ok) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd_, p + got, n - got, 0);
    if (r == 0) {
      if (eof_ok && got == 0) return false;
      fail(ErrorCode::kIoError, "connection closed mid-frame");
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      sys_fail("recv");
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

void Socket::write_all(const std::uint8_t* p, std::size_t n) {
  std::size_t sent = 0;
  while (sent < n) {
    const ssize_t r = ::send(fd_, p + sent, n - sent, MSG_NOSIGNAL);
    if (r < 0) {
      if (errno == EINTR) continue;
      sys_fail("send");
    }
    sent += static_cast<std::size_t>(r);
  }
}

void Socket::send_frame(MsgType type, std::uint64_t request_id, std::span<const std::uint8_t> payload) {
  send_raw_frame(static_cast<std::uint8_t>(type), request_id, payload);
}

void Socket::send_raw_frame(std::uint8_t type, std::uint64_t request_id, std::span<const std::uint8_t> payload) {
  if (!valid()) fail(ErrorCode::kIoError, "send on a closed socket");
  ByteWriter w;
  w.put_magic("BMW1");
  w.put_u8(type);
  w.put_u64(request_id);
  w.put_u32(static_cast<std::uint32_t>(payload.size()));
  write_all(w.bytes().data(), w.bytes().size());
  if (!payload.empty()) write_all(payload.data(), payload.size());
}

std::optional<Frame> Socket::recv_frame(std::uint32_t max_payload) {
  if (!valid()) fail(ErrorCode::kIoError, "recv on a closed socket");
  std::uint8_t hdr[kFrameHeader];
  if (!read_exact(hdr, sizeof hdr, true)) return std::nullopt;
  ByteReader r(hdr);
  r.expect_magic("BMW1");
  Frame f;
  f.type = r.u8();
  f.request_id = r.u64();
  const std::uint32_t len = r.u32();
  if (len > max_payload) {
    fail(ErrorCode::kProtocolError, "payload of " + std::to_string(len) + " bytes exceeds limit " +
                                        std::to_string(max_payload));
  }
  f.payload.resize(len);
  if (len != 0) read_exact(f.payload.data(), len, false);
  return f;
}

void Socket::shutdown() {
  if (valid()) ::shutdown(fd_, SHUT_RDWR);
}

void Socket::close() {
  if (valid()) {
    ::close(fd_);
    fd_ = -1;
  }
}

Listener::Listener(const Endpoint& ep) {
  const sockaddr_in addr = resolve(ep);
  fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd_ < 0) sys_fail("socket");
  const int one = 1;
  setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
    const std::string msg = std::strerror(errno);
    ::close(fd_);
    fail(ErrorCode::kIoError, "bind " + ep.str() + ": " + msg);
  }
  if (::listen(fd_, 64) != 0) sys_fail("listen");
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
}

Listener::~Listener() {
  if (fd_ >= 0) ::close(fd_);
}

Socket Listener::accept() {
  while (true) {
    const int c = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (c >= 0) {
      const int one = 1;
      setsockopt(c, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      return Socket(c);
    }
    if (errno == EINTR || errno == ECONNABORTED) continue;
    return Socket();
  }
}

void Listener::shutdown() { ::shutdown(fd_, SHUT_RDWR); }

}  // namespace bm::cluster
