#pragma once

// Blocking IPv4 TCP client used by the modem emulator to reach the channel service.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <string>
#include <string_view>
#include <vector>

#include "atlink.hpp"

namespace wcsim {

class SocketTcpLink final : public at::TcpLink {
 public:
  explicit SocketTcpLink(int timeout_ms = 5000) : timeout_ms_(timeout_ms) {}
  ~SocketTcpLink() override { close(); }

  SocketTcpLink(const SocketTcpLink&) = delete;
  SocketTcpLink& operator=(const SocketTcpLink&) = delete;

  bool connect(const std::string& host, int port) override {
    close();
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<uint16_t>(port));
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) return false;  // literals only
    fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd_ < 0) return false;
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
      close();
      return false;
    }
    return true;
  }

  bool send(std::string_view bytes) override {
    if (fd_ < 0) return false;
    while (!bytes.empty()) {
      const ssize_t n = ::send(fd_, bytes.data(), bytes.size(), MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        return false;
      }
      bytes.remove_prefix(static_cast<std::size_t>(n));
    }
    return true;
  }

  // Reads to EOF and delivers everything as one chunk, so +IPD framing does
  // not depend on how the kernel segmented the response.
  std::vector<std::string> receive() override {
    std::string data;
    if (fd_ < 0) return {};
    char buf[4096];
    for (;;) {
      pollfd p{fd_, POLLIN, 0};
      const int ready = ::poll(&p, 1, timeout_ms_);
      if (ready < 0 && errno == EINTR) continue;
      if (ready <= 0) break;
      const ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) break;
      data.append(buf, static_cast<std::size_t>(n));
    }
    if (data.empty()) return {};
    return {std::move(data)};
  }

  void close() override {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

 private:
  int fd_ = -1;
  int timeout_ms_;
};

}  // namespace wcsim
