// Thin RAII wrapper over blocking POSIX TCP sockets.

#pragma once

#include <chrono>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace paveh::net {

class NetError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  /// Accepts "host:port", ":port" or "port".
  static Endpoint parse(std::string_view text);
  std::string str() const;
};

class Socket {
public:
  Socket() = default;
  explicit Socket(int fd) noexcept : fd_(fd) {}
  ~Socket();
  Socket(Socket&& other) noexcept;
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  static Socket connect(const Endpoint& endpoint);
  static Socket listen(const Endpoint& endpoint, int backlog = 128);

  Socket accept() const;
  std::uint16_t local_port() const;

  /// Returns bytes read; 0 on orderly close. Throws NetError.
  std::size_t read_some(char* buffer, std::size_t size) const;
  void write_all(std::string_view bytes) const;

  /// Waits for readability. Returns false on timeout.
  bool wait_readable(std::chrono::milliseconds timeout) const;

  /// Unblocks any thread sitting in read/accept on this socket.
  void shutdown() const noexcept;
  void close() noexcept;

  bool valid() const noexcept { return fd_ >= 0; }
  int fd() const noexcept { return fd_; }

private:
  int fd_ = -1;
};

}  // namespace paveh::net
