// Bridge from the broker into the store: wildcard subscription, strict
// payload transform, bounded queue, batched inserts, ingest metrics.
#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "paveh/net.hpp"
#include "paveh/tsstore.hpp"
#include "paveh/wire.hpp"

namespace paveh::connector {

enum class Reject : std::size_t { Malformed, NonFinite, BadSubject, Overflow, Store };
inline constexpr std::size_t kRejectReasons = 5;

std::string_view to_string(Reject reason) noexcept;

class TransformError : public std::runtime_error {
public:
  TransformError(Reject reason, const std::string& what)
      : std::runtime_error(what), reason_(reason) {}
  Reject reason() const noexcept { return reason_; }

private:
  Reject reason_;
};

struct StoreRecord {
  std::string sensor;
  std::int64_t ts = 0;
  double v = 0.0;
  std::uint64_t seq = 0;
  std::int64_t received_us = 0;

  friend bool operator==(const StoreRecord&, const StoreRecord&) = default;
};

/// `site.<s>.daq.<d>.sensor.<id>` -> `<s>/<d>/<id>`. Throws TransformError.
std::string sensor_key(const wire::Subject& subject);

StoreRecord transform(const wire::Subject& subject, std::string_view payload,
                      std::int64_t received_us = 0);

/// Fixed log-spaced buckets over publish-to-insert latency.
struct LatencyHistogram {
  // Upper bounds in microseconds; the last bucket is unbounded.
  static constexpr std::array<std::int64_t, 14> kBounds{
      1'000,   2'000,   5'000,     10'000,    20'000,    50'000,     100'000,
      200'000, 500'000, 1'000'000, 2'000'000, 5'000'000, 10'000'000, 60'000'000};
  std::array<std::uint64_t, kBounds.size() + 1> counts{};

  void add(std::int64_t latency_us);
  std::uint64_t total() const;
  /// Upper bound of the bucket holding quantile q; -1 for the open bucket.
  std::int64_t quantile_bound(double q) const;
};

struct IngestMetrics {
  std::uint64_t received = 0;  // resolved: accepted or rejected
  std::uint64_t accepted = 0;
  std::array<std::uint64_t, kRejectReasons> rejected{};
  std::uint64_t pending = 0;  // delivered but not yet resolved
  std::uint64_t duplicate_seq = 0;
  std::uint64_t seq_gaps = 0;
  std::uint64_t clock_skew = 0;
  std::uint64_t batches = 0;
  std::uint64_t reconnects = 0;
  bool connected = false;
  LatencyHistogram latency;
  double rate_per_s = 0.0;  // accepted per second over the last 10 s

  std::uint64_t rejected_total() const;
};

using MetricPairs = std::vector<std::pair<std::string, std::string>>;

MetricPairs metric_pairs(const IngestMetrics& m);
/// `name value` lines.
std::string format_metrics_text(const MetricPairs& pairs);
/// `metric,value` header plus one row per metric.
std::string format_metrics_csv(const MetricPairs& pairs);
MetricPairs parse_metrics_text(std::string_view body);

/// Per-sensor seq continuity. Counts one gap per jump, however wide.
class SeqTracker {
public:
  enum class Result { First, InOrder, Gap, Duplicate };
  Result observe(const std::string& sensor, std::uint64_t seq);

private:
  std::unordered_map<std::string, std::uint64_t> last_;
};

/// Called once per record after its insert resolves.
using InsertObserver =
    std::function<void(const StoreRecord&, std::int64_t insert_us, bool accepted)>;

struct ConnectorOptions {
  net::Endpoint broker;
  std::string subject = "site.>";
  std::size_t batch_size = 500;
  std::chrono::milliseconds batch_age{200};
  std::size_t queue_capacity = 10'000;
  std::chrono::milliseconds backoff_base{1'000};
  std::chrono::milliseconds backoff_cap{30'000};
  InsertObserver observer;
};

/// Reconnect delays: base, 2*base, ... capped.
std::chrono::milliseconds backoff_delay(std::uint32_t attempt, std::chrono::milliseconds base,
                                        std::chrono::milliseconds cap);

class Connector {
public:
  Connector(tsstore::Store& store, ConnectorOptions options);
  ~Connector();
  Connector(const Connector&) = delete;
  Connector& operator=(const Connector&) = delete;

  IngestMetrics metrics_snapshot() const;

  /// Blocks until subscribed or the timeout passes.
  bool wait_connected(std::chrono::milliseconds timeout) const;

  /// Blocks until `received` reaches `count` or the timeout passes.
  bool wait_received(std::uint64_t count, std::chrono::milliseconds timeout) const;

  /// Unsubscribes, drains the queue into the store, joins all threads.
  void stop();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Serves `GET /metrics` until destroyed.
class MetricsServer {
public:
  MetricsServer(std::function<IngestMetrics()> source, const net::Endpoint& listen);
  ~MetricsServer();
  MetricsServer(const MetricsServer&) = delete;
  MetricsServer& operator=(const MetricsServer&) = delete;

  std::uint16_t port() const noexcept;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Fetches `/metrics` and returns the body. Throws net::NetError.
std::string fetch_metrics(const net::Endpoint& endpoint);

}  // namespace paveh::connector
