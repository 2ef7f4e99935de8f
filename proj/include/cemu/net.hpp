#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "cemu/config.hpp"

namespace cemu {

class NetError : public std::runtime_error {
 public:
  explicit NetError(const std::string& what) : std::runtime_error(what) {}
};

// Thin RAII wrapper over a TCP socket fd. Nagle is disabled on every
// connection; timestamps in this system are microsecond-granular and
// batching would dominate them.
class TcpSocket {
 public:
  TcpSocket() = default;
  explicit TcpSocket(int fd) : fd_(fd) {}
  ~TcpSocket();

  TcpSocket(TcpSocket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
  TcpSocket& operator=(TcpSocket&& o) noexcept;
  TcpSocket(const TcpSocket&) = delete;
  TcpSocket& operator=(const TcpSocket&) = delete;

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }

  // Blocking exact-length IO. write_all throws on failure; read_all returns
  // false on clean EOF at a frame boundary offset of 0, throws otherwise.
  void write_all(const uint8_t* data, size_t len);
  // Gathered write of header+payload as one syscall stream.
  void write_two(const uint8_t* a, size_t alen, const uint8_t* b,
                 size_t blen);
  bool read_all(uint8_t* data, size_t len);
  size_t read_some(uint8_t* data, size_t len);  // 0 on EOF

  // 0 clears the timeout; while set, blocked reads fail with NetError after
  // roughly `ms` milliseconds.
  void set_recv_timeout_ms(int ms);

  void shutdown_both();
  void close();

 private:
  int fd_ = -1;
};

class TcpListener {
 public:
  TcpListener() = default;
  explicit TcpListener(const Endpoint& ep) { bind_listen(ep); }

  void bind_listen(const Endpoint& ep);
  TcpSocket accept_conn();
  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }
  void close();
  ~TcpListener();

  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

 private:
  int fd_ = -1;
};

// Connect with retries spread over `timeout_ms` (the peer may not have bound
// its listener yet when processes start together).
TcpSocket tcp_connect(const Endpoint& ep, int timeout_ms = 10000);

// True when a fresh listener can bind the endpoint right now.
bool endpoint_bindable(const Endpoint& ep);

}  // namespace cemu
