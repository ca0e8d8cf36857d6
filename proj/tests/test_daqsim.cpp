#include <cmath>
#include <map>

#include "doctest.h"
#include "paveh/daqsim.hpp"
#include "paveh/timeutil.hpp"

using namespace paveh;
using namespace paveh::daqsim;

namespace {

SensorSpec epc(std::string id, double sigma = 0) {
  SensorSpec s;
  s.id = std::move(id);
  s.kind = SensorKind::EPC;
  s.unit = "kPa";
  s.sigma = sigma;
  s.baseline = 20;
  s.amplitude = 80;
  s.period_s = 10;
  s.pulse_width_s = 2;
  s.phase_s = 5;
  return s;
}

Scenario three_sensors(double sigma = 0) {
  Scenario sc;
  sc.site = "65";
  sc.daq = "1";
  sc.seed = 9;
  sc.start_us = parse_rfc3339("2024-05-01T00:00:00Z");
  sc.duration_s = 60;
  sc.sensors = {epc("epc1", sigma), epc("epc2", sigma), epc("epc3", sigma)};
  sc.sensors[1].kind = SensorKind::SCG;
  return sc;
}

const PublishFn accept_all = [](const wire::Subject&, const wire::SamplePayload&) { return true; };

}  // namespace

TEST_CASE("constant temperature with no noise") {
  SensorSpec t;
  t.id = "t1";
  t.kind = SensorKind::TEMPERATURE;
  t.baseline = 70;
  std::mt19937_64 rng(1);
  for (double s : {0.0, 1.5, 3600.0, 43200.25}) CHECK(synth_value(t, s, rng) == 70.0);
}

TEST_CASE("load pass maxima are spaced by the period") {
  const auto spec = epc("e");
  std::mt19937_64 rng(1);
  std::vector<double> xs;
  for (int i = 0; i < 100 * 100; ++i) xs.push_back(synth_value(spec, i / 100.0, rng));
  std::vector<int> peaks;
  for (std::size_t i = 1; i + 1 < xs.size(); ++i)
    if (xs[i] > xs[i - 1] && xs[i] > xs[i + 1]) peaks.push_back(static_cast<int>(i));
  REQUIRE(peaks.size() == 10);
  CHECK(peaks.front() == 500);
  for (std::size_t i = 1; i < peaks.size(); ++i) CHECK(peaks[i] - peaks[i - 1] == 1000);
  CHECK(xs[500] == doctest::Approx(100.0));
}

TEST_CASE("one-second mean of the internal samples") {
  Scenario sc;
  sc.sensors = {epc("a")};
  Daq daq(sc, [](const SensorSpec&, double t) {
    return static_cast<double>(std::lround((t - std::floor(t)) * 100) + 1);
  });
  const auto pubs = daq.tick(0, accept_all);
  REQUIRE(pubs.size() == 1);
  CHECK(pubs[0].payload.v == 50.5);
  CHECK(pubs[0].payload.ts == kMicrosPerSecond);

  Daq constant(sc, [](const SensorSpec&, double) { return 3.25; });
  CHECK(constant.tick(0, accept_all)[0].payload.v == 3.25);
}

TEST_CASE("three sensors for sixty ticks") {
  const auto sc = three_sensors(0.5);
  Daq daq(sc);
  std::map<std::string, std::vector<wire::SamplePayload>> seen;
  for (std::int64_t k = 0; k < 60; ++k)
    daq.tick(k, [&](const wire::Subject& subj, const wire::SamplePayload& p) {
      seen[subject_to_mqtt_topic(subj)].push_back(p);
      return true;
    });
  std::size_t total = 0;
  for (const auto& [topic, payloads] : seen) {
    total += payloads.size();
    for (std::size_t i = 0; i < payloads.size(); ++i) {
      CHECK(payloads[i].seq == i + 1);
      CHECK(payloads[i].ts == sc.start_us + static_cast<std::int64_t>(i + 1) * kMicrosPerSecond);
    }
  }
  CHECK(total == 180);
  CHECK(seen.count("site/65/daq/1/sensor/epc3") == 1);
  CHECK(seen.count("site/65/daq/1/sensor/epc1") == 1);
}

TEST_CASE("scaling the signal scales every average") {
  auto base = three_sensors();
  auto scaled = base;
  const double k = 3.5;
  for (auto& s : scaled.sensors) {
    s.baseline *= k;
    s.amplitude *= k;
  }
  Daq a(base), b(scaled);
  for (std::int64_t t = 0; t < 60; ++t) {
    const auto pa = a.tick(t, accept_all);
    const auto pb = b.tick(t, accept_all);
    for (std::size_t i = 0; i < pa.size(); ++i)
      CHECK(pb[i].payload.v == doctest::Approx(k * pa[i].payload.v).epsilon(1e-12));
  }
}

TEST_CASE("replay with the same seed is identical") {
  const auto sc = three_sensors(2.0);
  Daq a(sc), b(sc);
  auto other = sc;
  other.seed += 1;
  Daq c(other);
  bool differs = false;
  for (std::int64_t t = 0; t < 30; ++t) {
    const auto pa = a.tick(t, accept_all);
    const auto pb = b.tick(t, accept_all);
    const auto pc = c.tick(t, accept_all);
    for (std::size_t i = 0; i < pa.size(); ++i) {
      CHECK(pa[i].payload == pb[i].payload);
      differs = differs || pa[i].payload.v != pc[i].payload.v;
    }
  }
  CHECK(differs);
}

TEST_CASE("a failed publish keeps the seq") {
  Scenario sc;
  sc.sensors = {epc("a")};
  Daq daq(sc);
  daq.tick(0, accept_all);
  const auto failed = daq.tick(1, [](const wire::Subject&, const wire::SamplePayload&) { return false; });
  CHECK_FALSE(failed[0].delivered);
  CHECK(failed[0].payload.seq == 2);
  const auto retried = daq.tick(2, accept_all);
  CHECK(retried[0].payload.seq == 2);
  CHECK(retried[0].payload.ts == 3 * kMicrosPerSecond);
  CHECK_THROWS_AS(daq.tick(7, accept_all), std::logic_error);
}

TEST_CASE("scenario JSON") {
  const auto sc = scenario_from_json(R"({
    "site": "65", "daq": "1", "seed": 4, "start": "2024-05-01T00:00:00Z",
    "duration_s": 120,
    "sensors": [
      {"id": "epc3", "kind": "EPC", "amplitude": 50, "sigma": 0.2},
      {"id": "temp1", "kind": "TEMPERATURE", "baseline": 70, "diurnal_amplitude": 12}
    ]})");
  CHECK(sc.sensors.size() == 2);
  CHECK(sc.sensors[0].unit == "kPa");
  CHECK(sc.sensors[0].rate_hz == 100);
  CHECK(sc.sensors[1].unit == "degF");
  CHECK(sc.start_us == parse_rfc3339("2024-05-01T00:00:00Z"));
  const auto again = scenario_from_json(scenario_to_json(sc));
  CHECK(again.sensors[1].diurnal_amplitude == 12);
  CHECK(again.start_us == sc.start_us);

  CHECK_THROWS_AS(scenario_from_json(R"({"sensors":[{"id":"a.b","kind":"EPC"}]})"), ScenarioError);
  CHECK_THROWS_AS(scenario_from_json(R"({"sensors":[{"id":"a","kind":"LIDAR"}]})"), ScenarioError);
  CHECK_THROWS_AS(scenario_from_json(R"({"sensors":[{"id":"a","kind":"EPC","rate_hz":0}]})"), ScenarioError);
  CHECK_THROWS_AS(scenario_from_json(R"({"sensors":[{"id":"a","kind":"EPC","sigma":-1}]})"), ScenarioError);
  CHECK_THROWS_AS(scenario_from_json(R"({"sensors":[{"id":"a","kind":"EPC"},{"id":"a","kind":"SCG"}]})"), ScenarioError);
  CHECK_THROWS_AS(scenario_from_json(R"({"color":"red"})"), ScenarioError);
  CHECK(scenario_from_json("{}").sensors.empty());
}

TEST_CASE("paced run honours the duration") {
  Scenario sc;
  sc.duration_s = 5;
  sc.sensors = {epc("a"), epc("b")};
  Daq daq(sc);
  std::size_t count = 0;
  const auto stats = run(daq, [&](const wire::Subject&, const wire::SamplePayload&) { return ++count, true; },
                         RunOptions{100.0, std::nullopt});
  CHECK(stats.published == 10);
  CHECK(stats.seconds == 5);
  CHECK(count == 10);
}
