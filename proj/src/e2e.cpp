#include "paveh/e2e.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <random>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include <fmt/format.h>

#include "json.hpp"
#include "paveh/broker.hpp"
#include "paveh/connector.hpp"
#include "paveh/timeutil.hpp"
#include "paveh/tsstore.hpp"

namespace paveh::e2e {

void PipelineConfig::validate() const {
  const auto duration = duration_s.value_or(scenario.duration_s);
  if (duration <= 0) throw std::invalid_argument("duration must be > 0");
  if (!(speedup >= 1)) throw std::invalid_argument("speedup must be >= 1");
  if (store_root.empty()) throw std::invalid_argument("store root is required");
  scenario.validate();
}

void ReplayConfig::validate() const {
  if (!(rate_per_s > 0)) throw std::invalid_argument("replay rate must be > 0");
  if (seconds <= 0) throw std::invalid_argument("replay duration must be > 0");
  if (sensors == 0 || sensors > 1000) throw std::invalid_argument("replay sensors must be in [1, 1000]");
  if (static_cast<double>(sensors) < std::ceil(rate_per_s))
    throw std::invalid_argument("replay needs at least ceil(rate) sensors to keep ts unique");
  if (max_in_flight == 0) throw std::invalid_argument("max in-flight must be > 0");
  if (store_root.empty()) throw std::invalid_argument("store root is required");
}

std::uint64_t replay_count(double rate_per_s, std::int64_t k) {
  // Micro-units keep the cumulative count exact for decimal rates.
  const auto micro = std::llround(rate_per_s * 1e6);
  const auto upto = [micro](std::int64_t s) { return s * micro / 1'000'000; };
  return static_cast<std::uint64_t>(upto(k + 1) - upto(k));
}

bool E2EReport::conserved() const {
  return received == accepted + rejected && stored + rejected == published;
}

std::int64_t quantile(std::vector<std::int64_t> values, double q) {
  if (values.empty()) return 0;
  const auto n = values.size();
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank - 1), values.end());
  return values[rank - 1];
}

std::string to_json(const E2EReport& r) {
  nlohmann::ordered_json j;
  j["published"] = r.published;
  j["publish_failures"] = r.publish_failures;
  j["received"] = r.received;
  j["accepted"] = r.accepted;
  j["rejected"] = r.rejected;
  j["stored"] = r.stored;
  j["seq_gaps"] = r.seq_gaps;
  j["duplicate_seq"] = r.duplicate_seq;
  j["latency_samples"] = r.latency_samples;
  j["latency_p50_us"] = r.latency_p50_us;
  j["latency_p99_us"] = r.latency_p99_us;
  j["latency_max_us"] = r.latency_max_us;
  j["simulated_seconds"] = r.simulated_seconds;
  j["wall_seconds"] = r.wall_seconds;
  j["drained"] = r.drained;
  j["conserved"] = r.conserved();
  j["errors"] = r.errors;
  return j.dump(2) + "\n";
}

std::string to_text(const E2EReport& r) {
  std::string out = fmt::format(
      "published   {}\nstored      {}\nrejected    {}\nseq gaps    {}\n"
      "latency p50 {:.3f} ms\nlatency p99 {:.3f} ms\nsimulated   {} s in {:.2f} s wall\n",
      r.published, r.stored, r.rejected, r.seq_gaps, r.latency_p50_us / 1e3,
      r.latency_p99_us / 1e3, r.simulated_seconds, r.wall_seconds);
  if (!r.conserved()) out += "WARNING conservation violated\n";
  if (!r.drained) out += "WARNING pipeline did not drain\n";
  for (const auto& e : r.errors) out += "error: " + e + "\n";
  return out;
}

daqsim::Scenario default_scenario() {
  daqsim::Scenario s;
  s.site = "65";
  s.daq = "1";
  s.seed = 65;
  s.duration_s = 60;
  for (int i = 1; i <= 3; ++i) {
    daqsim::SensorSpec spec;
    spec.id = fmt::format("epc{}", i);
    spec.kind = daqsim::SensorKind::EPC;
    spec.unit = "kPa";
    spec.sigma = 0.5;
    spec.baseline = 20.0 * i;
    spec.amplitude = 150.0;
    s.sensors.push_back(std::move(spec));
  }
  return s;
}

namespace {

// Matches publish wall times with insert acknowledgements by (sensor, seq).
class LatencyJoin {
public:
  void published(const std::string& sensor, std::uint64_t seq, std::int64_t wall_us) {
    std::lock_guard lock(mu_);
    pending_[key(sensor, seq)] = wall_us;
  }

  void inserted(const connector::StoreRecord& r, std::int64_t insert_us, bool accepted) {
    std::lock_guard lock(mu_);
    const auto it = pending_.find(key(r.sensor, r.seq));
    if (it == pending_.end()) return;
    if (accepted) samples_.push_back(std::max<std::int64_t>(0, insert_us - it->second));
    pending_.erase(it);
  }

  std::vector<std::int64_t> samples() const {
    std::lock_guard lock(mu_);
    return samples_;
  }

private:
  static std::string key(const std::string& sensor, std::uint64_t seq) {
    return fmt::format("{}#{}", sensor, seq);
  }

  mutable std::mutex mu_;
  std::unordered_map<std::string, std::int64_t> pending_;
  std::vector<std::int64_t> samples_;
};

struct Pipeline {
  tsstore::Store store;
  broker::Broker hub;
  LatencyJoin latency;
  connector::Connector conn;
  std::optional<connector::MetricsServer> metrics;

  Pipeline(const std::filesystem::path& root, const net::Endpoint& listen, std::size_t queue)
      : store(root),
        hub(broker::BrokerOptions{listen}),
        conn(store, options(hub.endpoint(), latency, queue)) {}

  static connector::ConnectorOptions options(net::Endpoint ep, LatencyJoin& latency,
                                             std::size_t queue) {
    connector::ConnectorOptions o;
    o.broker = std::move(ep);
    o.queue_capacity = queue;
    o.observer = [&latency](const connector::StoreRecord& r, std::int64_t at, bool ok) {
      latency.inserted(r, at, ok);
    };
    return o;
  }
};

void finish(Pipeline& p, E2EReport& report, std::chrono::milliseconds drain_timeout,
            const std::vector<std::string>& sensors, std::int64_t t0, std::int64_t t1) {
  report.drained = p.conn.wait_received(report.published, drain_timeout);
  if (!report.drained) report.errors.push_back("connector did not receive every published message");
  p.conn.stop();
  const auto m = p.conn.metrics_snapshot();
  report.received = m.received;
  report.accepted = m.accepted;
  report.rejected = m.rejected_total();
  report.seq_gaps = m.seq_gaps;
  report.duplicate_seq = m.duplicate_seq;
  for (const auto& s : sensors) report.stored += p.store.query_range(s, t0, t1).size();
  const auto lat = p.latency.samples();
  report.latency_samples = lat.size();
  report.latency_p50_us = quantile(lat, 0.50);
  report.latency_p99_us = quantile(lat, 0.99);
  report.latency_max_us = lat.empty() ? 0 : *std::max_element(lat.begin(), lat.end());
  p.store.close();
}

}  // namespace

E2EReport run_e2e(const PipelineConfig& config, const std::function<bool()>& stop) {
  config.validate();
  const auto wall_start = std::chrono::steady_clock::now();
  auto scenario = config.scenario;
  if (config.duration_s) scenario.duration_s = *config.duration_s;
  if (scenario.start_us == 0) scenario.start_us = floor_div(now_us(), kMicrosPerSecond) * kMicrosPerSecond;

  E2EReport report;
  Pipeline p(config.store_root, config.broker, 10'000);
  if (config.metrics)
    p.metrics.emplace([&p] { return p.conn.metrics_snapshot(); }, *config.metrics);
  if (!p.conn.wait_connected(std::chrono::seconds(10)))
    throw std::runtime_error("connector failed to subscribe to the broker");

  std::vector<std::string> sensors;
  for (const auto& spec : scenario.sensors)
    sensors.push_back(connector::sensor_key(daqsim::sensor_subject(scenario, spec)));

  broker::Client pub(p.hub.endpoint());
  daqsim::Daq daq(scenario);
  const auto publish = [&](const wire::Subject& subject, const wire::SamplePayload& payload) {
    try {
      p.latency.published(connector::sensor_key(subject), payload.seq, now_us());
      pub.publish(subject, wire::encode_payload(payload));
      return true;
    } catch (const std::exception& e) {
      if (report.errors.empty()) report.errors.push_back(fmt::format("publish failed: {}", e.what()));
      return false;
    }
  };
  const auto stats = daqsim::run(daq, publish, daqsim::RunOptions{config.speedup, std::nullopt}, stop);
  report.published = stats.published;
  report.publish_failures = stats.failed;
  report.simulated_seconds = stats.seconds;
  if (!pub.flush()) report.errors.push_back("broker did not answer the final flush");
  pub.close();

  finish(p, report, config.drain_timeout, sensors, scenario.start_us,
         scenario.start_us + (scenario.duration_s + 1) * kMicrosPerSecond);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  return report;
}

E2EReport run_replay(const ReplayConfig& config, const std::function<bool()>& stop) {
  config.validate();
  const auto wall_start = std::chrono::steady_clock::now();
  E2EReport report;
  Pipeline p(config.store_root, net::Endpoint{"127.0.0.1", 0}, 10'000);
  if (!p.conn.wait_connected(std::chrono::seconds(10)))
    throw std::runtime_error("connector failed to subscribe to the broker");

  std::vector<wire::Subject> subjects;
  std::vector<std::string> sensors;
  for (std::size_t i = 0; i < config.sensors; ++i) {
    subjects.push_back(wire::Subject::parse(fmt::format("site.replay.daq.1.sensor.s{}", i)));
    sensors.push_back(connector::sensor_key(subjects.back()));
  }
  std::vector<std::uint64_t> seq(config.sensors, 0);
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  broker::Client pub(p.hub.endpoint());
  std::uint64_t next = 0;
  for (std::int64_t k = 0; k < config.seconds && !(stop && stop()); ++k) {
    const auto due = replay_count(config.rate_per_s, k);
    for (std::uint64_t j = 0; j < due; ++j, ++next) {
      if (next % 256 == 0) {
        auto last = p.conn.metrics_snapshot().received;
        auto progress = std::chrono::steady_clock::now();
        while (report.published - last > config.max_in_flight) {
          std::this_thread::sleep_for(std::chrono::microseconds(500));
          const auto now = p.conn.metrics_snapshot().received;
          if (now != last) {
            last = now;
            progress = std::chrono::steady_clock::now();
          } else if (std::chrono::steady_clock::now() - progress > config.drain_timeout) {
            throw std::runtime_error("replay stalled: connector stopped making progress");
          }
        }
      }
      const auto idx = static_cast<std::size_t>(next % config.sensors);
      const wire::SamplePayload payload{
          config.start_us + k * kMicrosPerSecond + static_cast<std::int64_t>(idx) * 1000,
          100.0 + noise(rng), ++seq[idx], "kPa"};
      p.latency.published(sensors[idx], payload.seq, now_us());
      pub.publish(subjects[idx], wire::encode_payload(payload));
      ++report.published;
    }
    ++report.simulated_seconds;
  }
  if (!pub.flush()) report.errors.push_back("broker did not answer the final flush");
  pub.close();

  finish(p, report, config.drain_timeout, sensors, config.start_us,
         config.start_us + (config.seconds + 1) * kMicrosPerSecond);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  return report;
}

}  // namespace paveh::e2e
