#include "cemu/net.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <sys/uio.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <ctime>
#include <cstdio>
#include <cstring>
#include <thread>

namespace cemu {

namespace {

sockaddr_in resolve(const Endpoint& ep) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(ep.port);
  if (ep.host == "localhost") {
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  } else if (inet_pton(AF_INET, ep.host.c_str(), &addr.sin_addr) != 1) {
    throw NetError("cannot resolve host '" + ep.host +
                   "' (numeric IPv4 or 'localhost' expected)");
  }
  return addr;
}

void set_common_opts(int fd) {
  int one = 1;
  setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  // megabyte frames should fit the socket buffers outright; flow-control
  // round trips on this path are disproportionately expensive
  int buf = 8 * 1024 * 1024;
  if (const char* env = std::getenv("CEMU_SOCKBUF")) buf = std::atoi(env);
  if (buf > 0) {
    setsockopt(fd, SOL_SOCKET, SO_SNDBUF, &buf, sizeof buf);
    setsockopt(fd, SOL_SOCKET, SO_RCVBUF, &buf, sizeof buf);
  }
}

}  // namespace

TcpSocket::~TcpSocket() { close(); }

TcpSocket& TcpSocket::operator=(TcpSocket&& o) noexcept {
  if (this != &o) {
    close();
    fd_ = o.fd_;
    o.fd_ = -1;
  }
  return *this;
}

void TcpSocket::write_all(const uint8_t* data, size_t len) {
  size_t off = 0;
  while (off < len) {
    const ssize_t r = ::send(fd_, data + off, len - off, MSG_NOSIGNAL);
    if (r < 0) {
      if (errno == EINTR) continue;
      throw NetError(std::string("send: ") + std::strerror(errno));
    }
    off += static_cast<size_t>(r);
  }
}

void TcpSocket::write_two(const uint8_t* a, size_t alen, const uint8_t* b,
                          size_t blen) {
  iovec iov[2];
  iov[0].iov_base = const_cast<uint8_t*>(a);
  iov[0].iov_len = alen;
  iov[1].iov_base = const_cast<uint8_t*>(b);
  iov[1].iov_len = blen;
  msghdr msg{};
  msg.msg_iov = iov;
  msg.msg_iovlen = 2;
  size_t sent = 0;
  const size_t total = alen + blen;
  while (sent < total) {
    const ssize_t r = ::sendmsg(fd_, &msg, MSG_NOSIGNAL);
    if (r < 0) {
      if (errno == EINTR) continue;
      throw NetError(std::string("sendmsg: ") + std::strerror(errno));
    }
    sent += static_cast<size_t>(r);
    size_t skip = static_cast<size_t>(r);
    for (int i = 0; i < 2; ++i) {
      const size_t take = std::min(skip, iov[i].iov_len);
      iov[i].iov_base = static_cast<uint8_t*>(iov[i].iov_base) + take;
      iov[i].iov_len -= take;
      skip -= take;
    }
  }
}

bool TcpSocket::read_all(uint8_t* data, size_t len) {
  size_t off = 0;
  while (off < len) {
    const ssize_t r = ::recv(fd_, data + off, len - off, 0);
    if (r < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) {
        throw NetError("recv: timed out");
      }
      throw NetError(std::string("recv: ") + std::strerror(errno));
    }
    if (r == 0) {
      if (off == 0) return false;
      throw NetError("connection closed mid-read");
    }
    off += static_cast<size_t>(r);
  }
  return true;
}

size_t TcpSocket::read_some(uint8_t* data, size_t len) {
  while (true) {
    const ssize_t r = ::recv(fd_, data, len, 0);
    if (r < 0) {
      if (errno == EINTR) continue;
      if (errno == ECONNRESET) return 0;
      if (errno == EAGAIN || errno == EWOULDBLOCK) {
        throw NetError("recv: timed out");
      }
      throw NetError(std::string("recv: ") + std::strerror(errno));
    }
    return static_cast<size_t>(r);
  }
}

void TcpSocket::set_recv_timeout_ms(int ms) {
  timeval tv{};
  tv.tv_sec = ms / 1000;
  tv.tv_usec = (ms % 1000) * 1000;
  setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
}

void TcpSocket::shutdown_both() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void TcpSocket::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void TcpListener::bind_listen(const Endpoint& ep) {
  close();
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw NetError(std::string("socket: ") + std::strerror(errno));
  int one = 1;
  setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr = resolve(ep);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    const std::string msg = std::string("bind ") + ep.str() + ": " +
                            std::strerror(errno);
    ::close(fd_);
    fd_ = -1;
    throw NetError(msg);
  }
  if (::listen(fd_, 16) != 0) {
    const std::string msg = std::string("listen: ") + std::strerror(errno);
    ::close(fd_);
    fd_ = -1;
    throw NetError(msg);
  }
}

TcpSocket TcpListener::accept_conn() {
  while (true) {
    const int c = ::accept(fd_, nullptr, nullptr);
    if (c < 0) {
      if (errno == EINTR) continue;
      throw NetError(std::string("accept: ") + std::strerror(errno));
    }
    set_common_opts(c);
    return TcpSocket(c);
  }
}

void TcpListener::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

TcpListener::~TcpListener() { close(); }

TcpSocket tcp_connect(const Endpoint& ep, int timeout_ms) {
  const sockaddr_in addr = resolve(ep);
  const auto deadline =
      std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
  int last_errno = 0;
  while (std::chrono::steady_clock::now() < deadline) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw NetError(std::string("socket: ") + std::strerror(errno));
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr),
                  sizeof addr) == 0) {
      set_common_opts(fd);
      return TcpSocket(fd);
    }
    last_errno = errno;
    ::close(fd);
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  throw NetError("connect " + ep.str() + ": " + std::strerror(last_errno));
}

bool endpoint_bindable(const Endpoint& ep) {
  try {
    TcpListener l(ep);
    return true;
  } catch (const NetError&) {
    return false;
  }
}

}  // namespace cemu
