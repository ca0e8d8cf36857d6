#include "paveh/connector.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "paveh/broker.hpp"
#include "paveh/timeutil.hpp"

namespace paveh::connector {

std::string_view to_string(Reject reason) noexcept {
  switch (reason) {
    case Reject::Malformed: return "malformed";
    case Reject::NonFinite: return "non_finite";
    case Reject::BadSubject: return "bad_subject";
    case Reject::Overflow: return "overflow";
    case Reject::Store: return "store";
  }
  return "?";
}

std::string sensor_key(const wire::Subject& subject) {
  const auto& t = subject.tokens();
  if (t.size() != 6 || t[0] != "site" || t[2] != "daq" || t[4] != "sensor" ||
      subject.has_wildcards())
    throw TransformError(Reject::BadSubject,
                         fmt::format("subject '{}' is not site.<s>.daq.<d>.sensor.<id>",
                                     subject.str()));
  return fmt::format("{}/{}/{}", t[1], t[3], t[5]);
}

StoreRecord transform(const wire::Subject& subject, std::string_view payload,
                      std::int64_t received_us) {
  auto key = sensor_key(subject);
  wire::SamplePayload p;
  try {
    p = wire::decode_payload(payload);
  } catch (const wire::MalformedPayload& e) {
    throw TransformError(Reject::Malformed, e.what());
  }
  if (!std::isfinite(p.v))
    throw TransformError(Reject::NonFinite, fmt::format("non-finite reading on {}", key));
  return StoreRecord{std::move(key), p.ts, p.v, p.seq, received_us};
}

void LatencyHistogram::add(std::int64_t latency_us) {
  const auto it = std::lower_bound(kBounds.begin(), kBounds.end(), latency_us);
  ++counts[static_cast<std::size_t>(it - kBounds.begin())];
}

std::uint64_t LatencyHistogram::total() const {
  std::uint64_t n = 0;
  for (auto c : counts) n += c;
  return n;
}

std::int64_t LatencyHistogram::quantile_bound(double q) const {
  const auto n = total();
  if (n == 0) return 0;
  const auto rank = static_cast<std::uint64_t>(std::ceil(q * static_cast<double>(n)));
  std::uint64_t seen = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    seen += counts[i];
    if (seen >= std::max<std::uint64_t>(rank, 1)) return i < kBounds.size() ? kBounds[i] : -1;
  }
  return -1;
}

std::uint64_t IngestMetrics::rejected_total() const {
  std::uint64_t n = 0;
  for (auto c : rejected) n += c;
  return n;
}

MetricPairs metric_pairs(const IngestMetrics& m) {
  MetricPairs out;
  auto add = [&](std::string name, auto value) {
    out.emplace_back(std::move(name), fmt::format("{}", value));
  };
  add("ingest_received", m.received);
  add("ingest_accepted", m.accepted);
  add("ingest_pending", m.pending);
  for (std::size_t i = 0; i < kRejectReasons; ++i)
    add(fmt::format("ingest_rejected_{}", to_string(static_cast<Reject>(i))), m.rejected[i]);
  add("ingest_rejected_total", m.rejected_total());
  add("ingest_duplicate_seq", m.duplicate_seq);
  add("ingest_seq_gaps", m.seq_gaps);
  add("ingest_clock_skew", m.clock_skew);
  add("ingest_batches", m.batches);
  add("ingest_reconnects", m.reconnects);
  add("ingest_connected", m.connected ? 1 : 0);
  out.emplace_back("ingest_rate_per_s", fmt::format("{:.3f}", m.rate_per_s));
  for (std::size_t i = 0; i < m.latency.counts.size(); ++i) {
    const auto le = i < LatencyHistogram::kBounds.size()
                        ? std::to_string(LatencyHistogram::kBounds[i])
                        : std::string("inf");
    add(fmt::format("ingest_latency_us_le_{}", le), m.latency.counts[i]);
  }
  add("ingest_latency_count", m.latency.total());
  return out;
}

std::string format_metrics_text(const MetricPairs& pairs) {
  std::string out;
  for (const auto& [k, v] : pairs) out += fmt::format("{} {}\n", k, v);
  return out;
}

std::string format_metrics_csv(const MetricPairs& pairs) {
  std::string out = "metric,value\n";
  for (const auto& [k, v] : pairs) out += fmt::format("{},{}\n", k, v);
  return out;
}

MetricPairs parse_metrics_text(std::string_view body) {
  MetricPairs out;
  while (!body.empty()) {
    auto eol = body.find('\n');
    auto line = body.substr(0, eol);
    body = eol == std::string_view::npos ? std::string_view{} : body.substr(eol + 1);
    if (line.empty() || line.front() == '#') continue;
    const auto sp = line.find(' ');
    if (sp == std::string_view::npos) continue;
    out.emplace_back(std::string(line.substr(0, sp)), std::string(line.substr(sp + 1)));
  }
  return out;
}

SeqTracker::Result SeqTracker::observe(const std::string& sensor, std::uint64_t seq) {
  auto [it, inserted] = last_.try_emplace(sensor, seq);
  if (inserted) return Result::First;
  const auto last = it->second;
  if (seq <= last) return Result::Duplicate;
  it->second = seq;
  return seq == last + 1 ? Result::InOrder : Result::Gap;
}

std::chrono::milliseconds backoff_delay(std::uint32_t attempt, std::chrono::milliseconds base,
                                        std::chrono::milliseconds cap) {
  auto d = base;
  for (std::uint32_t i = 0; i < attempt && d < cap; ++i) d *= 2;
  return std::min(d, cap);
}

namespace {

// Accepted-per-second over the last complete seconds.
class RateMeter {
public:
  void add(std::int64_t now_s, std::uint64_t n) {
    auto& slot = slots_[static_cast<std::size_t>(now_s) % slots_.size()];
    if (slot.first != now_s) slot = {now_s, 0};
    slot.second += n;
  }
  double rate(std::int64_t now_s) const {
    std::uint64_t sum = 0;
    for (const auto& [sec, n] : slots_)
      if (sec >= now_s - kWindow && sec < now_s) sum += n;
    return static_cast<double>(sum) / kWindow;
  }

private:
  static constexpr std::int64_t kWindow = 10;
  std::array<std::pair<std::int64_t, std::uint64_t>, 16> slots_{};
};

struct Queued {
  StoreRecord record;
  std::chrono::steady_clock::time_point enqueued;
};

}  // namespace

struct Connector::Impl {
  tsstore::Store& store;
  ConnectorOptions opt;
  wire::Subject pattern;

  std::mutex q_mu;
  std::condition_variable q_cv;
  std::deque<Queued> queue;
  bool draining = false;

  mutable std::mutex m_mu;
  mutable std::condition_variable m_cv;
  IngestMetrics metrics;
  SeqTracker seqs;
  RateMeter rate;
  std::atomic<std::uint64_t> delivered{0};

  std::mutex sup_mu;
  std::condition_variable sup_cv;
  bool stopping = false;

  std::thread writer;
  std::thread supervisor;

  Impl(tsstore::Store& s, ConnectorOptions o)
      : store(s), opt(std::move(o)), pattern(wire::Subject::pattern(opt.subject)) {}

  void reject(Reject reason, std::uint64_t n = 1) {
    std::lock_guard lock(m_mu);
    metrics.rejected[static_cast<std::size_t>(reason)] += n;
    metrics.received += n;
    m_cv.notify_all();
  }

  void on_message(const wire::Subject& subject, std::string_view payload) {
    ++delivered;
    StoreRecord rec;
    try {
      rec = transform(subject, payload, now_us());
    } catch (const TransformError& e) {
      spdlog::debug("rejected {}: {}", to_string(e.reason()), e.what());
      reject(e.reason());
      return;
    }
    {
      std::lock_guard lock(q_mu);
      if (queue.size() >= opt.queue_capacity) {
        // Fall through to the overflow count outside the queue lock.
      } else {
        queue.push_back({std::move(rec), std::chrono::steady_clock::now()});
        if (queue.size() == 1 || queue.size() >= opt.batch_size) q_cv.notify_one();
        return;
      }
    }
    reject(Reject::Overflow);
  }

  void write_loop() {
    std::vector<StoreRecord> batch;
    std::vector<tsstore::Sample> samples;
    for (;;) {
      {
        std::unique_lock lock(q_mu);
        for (;;) {
          if (queue.size() >= opt.batch_size || (draining && !queue.empty())) break;
          if (draining) return;
          if (queue.empty()) {
            q_cv.wait(lock);
            continue;
          }
          const auto due = queue.front().enqueued + opt.batch_age;
          if (std::chrono::steady_clock::now() >= due) break;
          q_cv.wait_until(lock, due);
        }
        const auto n = std::min(queue.size(), opt.batch_size);
        batch.clear();
        for (std::size_t i = 0; i < n; ++i) {
          batch.push_back(std::move(queue.front().record));
          queue.pop_front();
        }
      }
      write_batch(batch, samples);
    }
  }

  void write_batch(const std::vector<StoreRecord>& batch, std::vector<tsstore::Sample>& samples) {
    samples.clear();
    for (const auto& r : batch) samples.push_back({r.sensor, r.ts, r.v});
    tsstore::InsertReport report;
    try {
      report = store.insert(samples);
    } catch (const std::exception& e) {
      spdlog::error("store insert failed: {}", e.what());
      report.outcomes.assign(samples.size(), {tsstore::InsertStatus::Error, e.what()});
    }
    const auto insert_us = now_us();
    {
      std::lock_guard lock(m_mu);
      ++metrics.batches;
      std::uint64_t accepted = 0;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& r = batch[i];
        ++metrics.received;
        if (report.outcomes[i].status == tsstore::InsertStatus::Error) {
          ++metrics.rejected[static_cast<std::size_t>(Reject::Store)];
          continue;
        }
        ++accepted;
        switch (seqs.observe(r.sensor, r.seq)) {
          case SeqTracker::Result::Gap: ++metrics.seq_gaps; break;
          case SeqTracker::Result::Duplicate: ++metrics.duplicate_seq; break;
          default: break;
        }
        auto latency = insert_us - r.ts;
        if (latency < 0) {
          ++metrics.clock_skew;
          latency = 0;
        }
        metrics.latency.add(latency);
      }
      metrics.accepted += accepted;
      rate.add(floor_div(insert_us, kMicrosPerSecond), accepted);
      m_cv.notify_all();
    }
    if (opt.observer)
      for (std::size_t i = 0; i < batch.size(); ++i)
        opt.observer(batch[i], insert_us,
                     report.outcomes[i].status != tsstore::InsertStatus::Error);
  }

  void set_connected(bool up) {
    std::lock_guard lock(m_mu);
    metrics.connected = up;
    m_cv.notify_all();
  }

  // Returns false when stopping interrupted the wait.
  bool pause(std::chrono::milliseconds d) {
    std::unique_lock lock(sup_mu);
    return !sup_cv.wait_for(lock, d, [&] { return stopping; });
  }

  void supervise() {
    std::uint32_t attempt = 0;
    bool ever_connected = false;
    for (;;) {
      {
        std::lock_guard lock(sup_mu);
        if (stopping) return;
      }
      std::unique_ptr<broker::Client> client;
      try {
        client = std::make_unique<broker::Client>(
            opt.broker,
            [this](const wire::Subject& s, std::uint64_t, std::string_view p) { on_message(s, p); },
            [](const std::string& err) { spdlog::warn("broker error: {}", err); });
        client->subscribe(pattern);
        if (!client->flush()) throw broker::ClientError("subscription not confirmed");
      } catch (const std::exception& e) {
        const auto delay = backoff_delay(attempt++, opt.backoff_base, opt.backoff_cap);
        spdlog::warn("connect to {} failed ({}); retrying in {} ms", opt.broker.str(), e.what(),
                     delay.count());
        client.reset();
        if (!pause(delay)) return;
        continue;
      }
      if (ever_connected) {
        std::lock_guard lock(m_mu);
        ++metrics.reconnects;
      }
      ever_connected = true;
      attempt = 0;
      set_connected(true);
      spdlog::info("subscribed to '{}' on {}", opt.subject, opt.broker.str());

      while (client->connected())
        if (!pause(std::chrono::milliseconds(50))) break;
      set_connected(false);
      const bool lost = client->connected() == false;
      client->close();
      client.reset();
      if (lost) {
        const auto delay = backoff_delay(attempt++, opt.backoff_base, opt.backoff_cap);
        spdlog::warn("lost broker connection; reconnecting in {} ms", delay.count());
        if (!pause(delay)) return;
      }
    }
  }
};

Connector::Connector(tsstore::Store& store, ConnectorOptions options)
    : impl_(std::make_unique<Impl>(store, std::move(options))) {
  impl_->writer = std::thread([this] { impl_->write_loop(); });
  impl_->supervisor = std::thread([this] { impl_->supervise(); });
}

Connector::~Connector() { stop(); }

IngestMetrics Connector::metrics_snapshot() const {
  std::lock_guard lock(impl_->m_mu);
  auto m = impl_->metrics;
  const auto delivered = impl_->delivered.load();
  m.pending = delivered > m.received ? delivered - m.received : 0;
  m.rate_per_s = impl_->rate.rate(floor_div(now_us(), kMicrosPerSecond));
  return m;
}

bool Connector::wait_connected(std::chrono::milliseconds timeout) const {
  std::unique_lock lock(impl_->m_mu);
  return impl_->m_cv.wait_for(lock, timeout, [&] { return impl_->metrics.connected; });
}

bool Connector::wait_received(std::uint64_t count, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(impl_->m_mu);
  return impl_->m_cv.wait_for(lock, timeout, [&] { return impl_->metrics.received >= count; });
}

void Connector::stop() {
  if (!impl_) return;
  {
    std::lock_guard lock(impl_->sup_mu);
    impl_->stopping = true;
  }
  impl_->sup_cv.notify_all();
  if (impl_->supervisor.joinable()) impl_->supervisor.join();
  {
    std::lock_guard lock(impl_->q_mu);
    impl_->draining = true;
  }
  impl_->q_cv.notify_all();
  if (impl_->writer.joinable()) impl_->writer.join();
}

}  // namespace paveh::connector
