#include <cmath>
#include <random>
#include <set>
#include <thread>

#include "doctest.h"
#include "paveh/broker.hpp"
#include "paveh/connector.hpp"
#include "paveh/daqsim.hpp"
#include "paveh/timeutil.hpp"
#include "test_util.hpp"

using namespace paveh;
using namespace paveh::connector;
using namespace std::chrono_literals;

namespace {

broker::BrokerOptions local_broker(std::uint16_t port = 0) {
  broker::BrokerOptions o;
  o.listen = net::Endpoint{"127.0.0.1", port};
  return o;
}

ConnectorOptions fast_options(const net::Endpoint& ep) {
  ConnectorOptions o;
  o.broker = ep;
  o.batch_age = 20ms;
  o.backoff_base = 20ms;
  o.backoff_cap = 100ms;
  return o;
}

const auto kSubject = wire::Subject::parse("site.65.daq.1.sensor.epc3");

}  // namespace

TEST_CASE("transform maps subject and payload") {
  const auto r = transform(kSubject, R"({"ts":1700000000000000,"v":12.5,"seq":9,"unit":"kPa"})", 77);
  CHECK(r == StoreRecord{"65/1/epc3", 1700000000000000, 12.5, 9, 77});

  auto reason = [](const wire::Subject& s, std::string_view p) {
    try {
      transform(s, p);
    } catch (const TransformError& e) {
      return e.reason();
    }
    FAIL("expected a rejection");
    return Reject::Store;
  };
  CHECK(reason(kSubject, "{}") == Reject::Malformed);
  CHECK(reason(kSubject, "not json") == Reject::Malformed);
  CHECK(reason(kSubject, R"({"ts":1,"v":NaN,"seq":1,"unit":"kPa"})") == Reject::NonFinite);
  CHECK(reason(kSubject, R"({"ts":1,"v":-Infinity,"seq":1,"unit":"kPa"})") == Reject::NonFinite);
  const std::string ok = R"({"ts":1,"v":1,"seq":1,"unit":"kPa"})";
  CHECK(reason(wire::Subject::parse("site.65.daq.1.sensor"), ok) == Reject::BadSubject);
  CHECK(reason(wire::Subject::parse("site.65.daq.1.sensor.a.b"), ok) == Reject::BadSubject);
  CHECK(reason(wire::Subject::parse("site.65.dac.1.sensor.a"), ok) == Reject::BadSubject);
}

TEST_CASE("sensor keys are injective over well-formed subjects") {
  std::mt19937 rng(11);
  const std::string alphabet = "ab1_-";
  auto token = [&] {
    std::string t;
    const int n = 1 + static_cast<int>(rng() % 3);
    for (int i = 0; i < n; ++i) t += alphabet[rng() % alphabet.size()];
    return t;
  };
  std::map<std::string, std::string> seen;  // key -> subject
  for (int i = 0; i < 5000; ++i) {
    const auto s = wire::Subject::from_tokens({"site", token(), "daq", token(), "sensor", token()});
    const auto key = sensor_key(s);
    CHECK(sensor_key(s) == key);
    auto [it, inserted] = seen.emplace(key, s.str());
    if (!inserted) CHECK(it->second == s.str());
  }
}

TEST_CASE("seq tracking") {
  SeqTracker t;
  CHECK(t.observe("a", 1) == SeqTracker::Result::First);
  CHECK(t.observe("a", 2) == SeqTracker::Result::InOrder);
  CHECK(t.observe("a", 4) == SeqTracker::Result::Gap);
  CHECK(t.observe("a", 4) == SeqTracker::Result::Duplicate);
  CHECK(t.observe("b", 7) == SeqTracker::Result::First);
}

TEST_CASE("backoff doubles to the cap") {
  std::vector<long> got;
  for (std::uint32_t a = 0; a < 8; ++a) got.push_back(backoff_delay(a, 1000ms, 30000ms).count());
  CHECK(got == std::vector<long>{1000, 2000, 4000, 8000, 16000, 30000, 30000, 30000});
}

TEST_CASE("latency histogram conserves counts") {
  LatencyHistogram h;
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::int64_t> d(0, 100'000'000);
  for (int i = 0; i < 1000; ++i) h.add(d(rng));
  CHECK(h.total() == 1000);
  h = {};
  for (int i = 0; i < 99; ++i) h.add(1500);
  h.add(700'000);
  CHECK(h.quantile_bound(0.5) == 2'000);
  CHECK(h.quantile_bound(0.99) == 2'000);
  CHECK(h.quantile_bound(1.0) == 1'000'000);
}

TEST_CASE("metrics text and CSV") {
  IngestMetrics m;
  m.received = 12;
  m.accepted = 10;
  m.rejected[static_cast<std::size_t>(Reject::Malformed)] = 2;
  const auto pairs = metric_pairs(m);
  CHECK(parse_metrics_text(format_metrics_text(pairs)) == pairs);
  const auto csv = format_metrics_csv(pairs);
  CHECK(csv.rfind("metric,value\ningest_received,12\ningest_accepted,10\n", 0) == 0);
  CHECK(csv.find("ingest_rejected_malformed,2\n") != std::string::npos);
}

TEST_CASE("idle connector reports zeros") {
  broker::Broker b(local_broker());
  test::TempDir dir;
  tsstore::Store store(dir.path());
  Connector c(store, fast_options(b.endpoint()));
  REQUIRE(c.wait_connected(2s));
  const auto m = c.metrics_snapshot();
  CHECK(m.received == 0);
  CHECK(m.accepted == 0);
  CHECK(m.rejected_total() == 0);
  CHECK(m.latency.total() == 0);
  CHECK(m.seq_gaps == 0);
}

TEST_CASE("valid and malformed messages are counted") {
  broker::Broker b(local_broker());
  test::TempDir dir;
  tsstore::Store store(dir.path());
  Connector c(store, fast_options(b.endpoint()));
  REQUIRE(c.wait_connected(2s));

  broker::Client pub(b.endpoint());
  const auto t0 = now_us();
  for (int i = 1; i <= 10; ++i)
    pub.publish(kSubject, wire::encode_payload({t0 + i, 1.0 * i, static_cast<std::uint64_t>(i), "kPa"}));
  pub.publish(kSubject, "{}");
  pub.publish(wire::Subject::parse("site.65.sensor.x"), wire::encode_payload({t0, 1.0, 1, "kPa"}));
  REQUIRE(pub.flush());
  REQUIRE(c.wait_received(12, 5s));
  const auto m = c.metrics_snapshot();
  CHECK(m.accepted == 10);
  CHECK(m.rejected[static_cast<std::size_t>(Reject::Malformed)] == 1);
  CHECK(m.rejected[static_cast<std::size_t>(Reject::BadSubject)] == 1);
  CHECK(m.received == m.accepted + m.rejected_total());
  CHECK(m.latency.total() == m.accepted);
  CHECK(m.seq_gaps == 0);
  c.stop();
  CHECK(store.query_range("65/1/epc3", 0, t0 + 100).size() == 10);
}

TEST_CASE("seq gaps surface in metrics") {
  broker::Broker b(local_broker());
  test::TempDir dir;
  tsstore::Store store(dir.path());
  Connector c(store, fast_options(b.endpoint()));
  REQUIRE(c.wait_connected(2s));
  broker::Client pub(b.endpoint());
  const auto t0 = now_us();
  for (std::uint64_t seq : {1, 2, 4})
    pub.publish(kSubject, wire::encode_payload({t0 + static_cast<std::int64_t>(seq), 0.0, seq, "kPa"}));
  REQUIRE(pub.flush());
  REQUIRE(c.wait_received(3, 5s));
  CHECK(c.metrics_snapshot().seq_gaps == 1);
}

TEST_CASE("simulated DAQ traffic lands in the store") {
  broker::Broker b(local_broker());
  test::TempDir dir;
  tsstore::Store store(dir.path());
  Connector c(store, fast_options(b.endpoint()));
  REQUIRE(c.wait_connected(2s));

  daqsim::Scenario sc;
  sc.site = "65";
  sc.start_us = parse_rfc3339("2024-05-01T00:00:00Z");
  sc.duration_s = 60;
  for (const char* id : {"epc1", "epc2", "epc3"}) {
    daqsim::SensorSpec s;
    s.id = id;
    s.sigma = 1.0;
    sc.sensors.push_back(s);
  }
  daqsim::Daq daq(sc);
  broker::Client pub(b.endpoint());
  std::uint64_t published = 0;
  for (std::int64_t k = 0; k < 60; ++k)
    daq.tick(k, [&](const wire::Subject& s, const wire::SamplePayload& p) {
      pub.publish(s, wire::encode_payload(p));
      ++published;
      return true;
    });
  REQUIRE(pub.flush());
  REQUIRE(c.wait_received(published, 5s));
  const auto m = c.metrics_snapshot();
  CHECK(published == 180);
  CHECK(m.accepted == 180);
  CHECK(m.seq_gaps == 0);
  CHECK(m.clock_skew == 0);
  c.stop();
  std::size_t stored = 0;
  for (const auto& sensor : store.sensors()) stored += store.query_range(sensor, 0, 1LL << 62).size();
  CHECK(stored == 180);
}

TEST_CASE("queue overflow is counted, not lost") {
  broker::Broker b(local_broker());
  test::TempDir dir;
  tsstore::Store store(dir.path());
  auto opts = fast_options(b.endpoint());
  opts.queue_capacity = 5;
  opts.batch_size = 1000;
  opts.batch_age = 2s;
  Connector c(store, opts);
  REQUIRE(c.wait_connected(2s));
  broker::Client pub(b.endpoint());
  for (std::uint64_t i = 1; i <= 20; ++i)
    pub.publish(kSubject, wire::encode_payload({static_cast<std::int64_t>(i), 0.0, i, "kPa"}));
  REQUIRE(pub.flush());
  // Overflow rejections resolve immediately; the queued five wait for the batch.
  REQUIRE(c.wait_received(15, 5s));
  c.stop();
  const auto m = c.metrics_snapshot();
  CHECK(m.received == 20);
  CHECK(m.accepted == 5);
  CHECK(m.rejected[static_cast<std::size_t>(Reject::Overflow)] == 15);
}

TEST_CASE("store failures are rejected without retry") {
  broker::Broker b(local_broker());
  test::TempDir dir;
  tsstore::Store store(dir.path(), tsstore::StoreOptions{tsstore::kDefaultChunkSpan, 40});
  Connector c(store, fast_options(b.endpoint()));
  REQUIRE(c.wait_connected(2s));
  broker::Client pub(b.endpoint());
  pub.publish(kSubject, wire::encode_payload({5, 0.0, 1, "kPa"}));
  REQUIRE(pub.flush());
  REQUIRE(c.wait_received(1, 5s));
  const auto m = c.metrics_snapshot();
  CHECK(m.rejected[static_cast<std::size_t>(Reject::Store)] == 1);
  CHECK(m.accepted == 0);
}

TEST_CASE("reconnects after the broker restarts") {
  auto first = std::make_unique<broker::Broker>(local_broker());
  const auto port = first->port();
  test::TempDir dir;
  tsstore::Store store(dir.path());
  Connector c(store, fast_options(first->endpoint()));
  REQUIRE(c.wait_connected(2s));
  first.reset();
  for (int i = 0; i < 100 && c.metrics_snapshot().connected; ++i) std::this_thread::sleep_for(10ms);
  CHECK_FALSE(c.metrics_snapshot().connected);

  broker::Broker second(local_broker(port));
  REQUIRE(c.wait_connected(5s));
  broker::Client pub(second.endpoint());
  pub.publish(kSubject, wire::encode_payload({now_us(), 1.0, 1, "kPa"}));
  REQUIRE(pub.flush());
  REQUIRE(c.wait_received(1, 5s));
  const auto m = c.metrics_snapshot();
  CHECK(m.accepted == 1);
  CHECK(m.reconnects == 1);
}

TEST_CASE("replaying a stream leaves the store unchanged") {
  test::TempDir dir;
  std::vector<std::string> payloads;
  for (std::uint64_t i = 1; i <= 50; ++i)
    payloads.push_back(wire::encode_payload({1'000'000 * static_cast<std::int64_t>(i), 0.5 * i, i, "kPa"}));

  auto run_once = [&] {
    broker::Broker b(local_broker());
    tsstore::Store store(dir.path());
    Connector c(store, fast_options(b.endpoint()));
    REQUIRE(c.wait_connected(2s));
    broker::Client pub(b.endpoint());
    for (const auto& p : payloads) pub.publish(kSubject, p);
    REQUIRE(pub.flush());
    REQUIRE(c.wait_received(payloads.size(), 5s));
    c.stop();
    return store.query_range("65/1/epc3", 0, 1LL << 62);
  };
  const auto once = run_once();
  const auto twice = run_once();
  CHECK(once.size() == 50);
  CHECK(once == twice);
}

TEST_CASE("metrics over HTTP") {
  IngestMetrics m;
  m.received = m.accepted = 42;
  MetricsServer server([&] { return m; }, net::Endpoint{"127.0.0.1", 0});
  const auto body = fetch_metrics(net::Endpoint{"127.0.0.1", server.port()});
  const auto pairs = parse_metrics_text(body);
  REQUIRE(pairs.size() >= 2);
  CHECK(pairs[1] == std::pair<std::string, std::string>{"ingest_accepted", "42"});
  CHECK_THROWS_AS(fetch_metrics(net::Endpoint{"127.0.0.1", 1}), net::NetError);
}
