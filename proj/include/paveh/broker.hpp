// Subject router, TCP broker and client.
//
// Delivery is at-most-once with no persistence. Messages from one publishing
// session reach each subscriber in publish order.

#pragma once

#include <atomic>
#include <chrono>
#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "paveh/net.hpp"
#include "paveh/wire.hpp"

namespace paveh::broker {

struct Delivery {
  std::uint64_t session = 0;
  std::uint64_t sid = 0;

  friend auto operator<=>(const Delivery&, const Delivery&) = default;
};

/// Token trie of subscription patterns. Thread safe: subscribe/unsubscribe
/// take an exclusive lock, route a shared one.
class Router {
public:
  Router();
  ~Router();
  Router(const Router&) = delete;
  Router& operator=(const Router&) = delete;

  /// False if `sid` is already in use by `session`.
  bool subscribe(std::uint64_t session, std::uint64_t sid,
                 const wire::Subject& pattern);
  bool unsubscribe(std::uint64_t session, std::uint64_t sid);
  void remove_session(std::uint64_t session);

  /// Appends one delivery per matching subscription to `out`.
  void route(const wire::Subject& subject, std::vector<Delivery>& out) const;
  std::vector<Delivery> route(const wire::Subject& subject) const;

  std::size_t size() const;

private:
  struct Node;
  void erase_locked(std::uint64_t session, std::uint64_t sid,
                    const wire::Subject& pattern);

  mutable std::shared_mutex mu_;
  std::unique_ptr<Node> root_;
  std::map<std::pair<std::uint64_t, std::uint64_t>, wire::Subject> index_;
};

struct BrokerOptions {
  net::Endpoint listen{"127.0.0.1", 4222};
  std::size_t max_payload = wire::kDefaultMaxPayload;
  std::size_t queue_frames = 8192;
  std::chrono::milliseconds keepalive{30'000};
};

struct BrokerStats {
  std::uint64_t sessions_accepted = 0;
  std::uint64_t sessions_active = 0;
  std::uint64_t published = 0;
  std::uint64_t delivered = 0;
  std::uint64_t slow_consumers = 0;
  std::uint64_t protocol_errors = 0;
  std::uint64_t stale_sessions = 0;
};

/// A running broker. Binds and starts accepting in the constructor; stops
/// on destruction.
class Broker {
public:
  explicit Broker(BrokerOptions options);
  ~Broker();
  Broker(Broker&&) noexcept;
  Broker& operator=(Broker&&) noexcept;

  net::Endpoint endpoint() const;
  std::uint16_t port() const;
  BrokerStats stats() const;
  void stop();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

inline Broker serve(BrokerOptions options) { return Broker(std::move(options)); }

class ClientError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Blocking client with a background reader thread. Answers server PINGs.
class Client {
public:
  using MessageHandler = std::function<void(
      const wire::Subject& subject, std::uint64_t sid, std::string_view payload)>;
  using ErrorHandler = std::function<void(const std::string& message)>;

  explicit Client(const net::Endpoint& endpoint, MessageHandler on_message = {},
                  ErrorHandler on_error = {},
                  std::size_t max_payload = wire::kDefaultMaxPayload);
  ~Client();
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  std::uint64_t subscribe(const wire::Subject& pattern);
  void unsubscribe(std::uint64_t sid);
  void publish(const wire::Subject& subject, std::string_view payload);
  /// Writes pre-encoded frames as one send.
  void send_raw(std::string_view bytes);

  /// Round trip PING/PONG. Everything sent before it has been processed by
  /// the broker when this returns true.
  bool flush(std::chrono::milliseconds timeout = std::chrono::seconds(5));

  bool connected() const noexcept;
  std::string last_error() const;
  void close();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace paveh::broker
