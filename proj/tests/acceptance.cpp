// Acceptance suite: one PASS/FAIL line per criterion. With no arguments every
// criterion runs; `acceptance N` runs criterion N alone.
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>

#include "etl_fixtures.hpp"
#include "paveh/broker.hpp"
#include "paveh/dsp.hpp"
#include "paveh/e2e.hpp"
#include "paveh/etl.hpp"
#include "paveh/timeutil.hpp"
#include "paveh/tsstore.hpp"
#include "sg_oracle.hpp"
#include "test_util.hpp"

using namespace paveh;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

// ---- 1 -------------------------------------------------------------------

Verdict savgol_oracle() {
  Verdict v;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> d(0.0, 1.0);
  double worst_rel = 0, worst_poly = 0;
  std::size_t points = 0;
  for (int window : {51, 101, 1001}) {
    for (int order : {2, 3}) {
      for (int series = 0; series < 10; ++series) {
        std::vector<double> y(5000);
        double walk = 0;
        for (auto& x : y) x = (walk += d(rng)) + 5 * d(rng);
        const auto s = dsp::smooth(y, window, order);
        const auto half = static_cast<std::size_t>(window / 2);
        for (std::size_t i = half; i + half < y.size(); ++i) {
          const double ref = test::sg_oracle_point(y, i, window, order);
          worst_rel = std::max(worst_rel, std::abs(s[i] - ref) / std::max(1.0, std::abs(ref)));
          ++points;
        }
      }
      for (int degree = 0; degree <= order; ++degree) {
        std::vector<double> y(5000);
        for (std::size_t i = 0; i < y.size(); ++i) {
          const double x = static_cast<double>(i) / 1000.0;
          y[i] = 2.0 + (degree >= 1 ? -0.5 * x : 0) + (degree >= 2 ? 0.75 * x * x : 0) +
                 (degree >= 3 ? -0.1 * x * x * x : 0);
        }
        const auto s = dsp::smooth(y, window, order);
        for (std::size_t i = 0; i < y.size(); ++i)
          worst_poly = std::max(worst_poly, std::abs(s[i] - y[i]) / std::max(1.0, std::abs(y[i])));
      }
    }
  }
  v.require(worst_rel <= 1e-9, fmt::format("oracle relative error {:.3e} > 1e-9", worst_rel));
  v.require(worst_poly <= 1e-12, fmt::format("polynomial error {:.3e} > 1e-12", worst_poly));
  if (v.pass)
    v.detail = fmt::format("{} interior points, max rel err {:.2e}; polynomial max err {:.2e}", points,
                           worst_rel, worst_poly);
  return v;
}

// ---- 2 -------------------------------------------------------------------

Verdict apt_counts() {
  Verdict v;
  test::TempDir dir;
  test::TrafficFixture fx;
  fx.passes = 1000;
  fx.noise = 0.0;
  const auto path = dir.path() / "Traffic D1 F20 07-07-22.txt";
  std::ofstream(path) << test::asg_traffic_log(fx);
  const auto res = etl::process_file(path);

  std::size_t first = 0, last = 0, envelope = 0;
  for (const auto& r : res.rows) {
    if (r.extrema == "maxima" && r.captured_instance == "first20") ++first;
    if (r.extrema == "maxima" && r.captured_instance == "last20") ++last;
    if (r.extrema == "envelope") ++envelope;
  }
  v.require(first == 20 && last == 20, fmt::format("first20={} last20={}", first, last));
  v.require(envelope == 200, fmt::format("{} envelope rows", envelope));
  v.require(res.rows.size() == 240, fmt::format("{} rows in total", res.rows.size()));
  if (v.pass) v.detail = fmt::format("40 peak rows (20+20), 200 envelope rows from 1000 passes");
  return v;
}

// ---- 3 -------------------------------------------------------------------

Verdict laser_mapping() {
  Verdict v;
  test::TempDir dir;
  const auto path = dir.path() / "laser_pass1.txt";
  std::ofstream(path) << test::laser_log(4000);
  const auto res = etl::process_file(path);
  const auto info = etl::build_file_info({res.meta});
  const auto csv = etl::emit_laser_csv(res.laser_rows, info);
  const auto back = etl::join_laser_by_filename_id(csv, etl::file_info_csv(info));
  v.require(back.size() == 4000, fmt::format("{} laser rows after round trip", back.size()));
  if (!v.pass) return v;
  v.require(back[0].sample_number == 1 && std::abs(back[0].horiz_mm - 0.171117705) <= 1e-9,
            fmt::format("sample {} -> {}", back[0].sample_number, back[0].horiz_mm));
  v.require(back[3].sample_number == 4 && std::abs(back[3].horiz_mm - 0.684470821) <= 1e-9,
            fmt::format("sample {} -> {}", back[3].sample_number, back[3].horiz_mm));
  for (std::size_t i = 0; i < back.size() && v.pass; ++i)
    v.require(std::abs(back[i].horiz_mm - static_cast<double>(i + 1) * 1384.0 / 8088.0) <= 1e-9,
              fmt::format("sample {} horizontal {}", i + 1, back[i].horiz_mm));
  if (v.pass)
    v.detail = fmt::format("sample 1 -> {:.9f} mm, sample 4 -> {:.9f} mm, 4000 rows", back[0].horiz_mm,
                           back[3].horiz_mm);
  return v;
}

// ---- 4 -------------------------------------------------------------------

Verdict normalization_round_trip() {
  Verdict v;
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> nfiles(1, 12), nrows(0, 400);
  for (int set = 0; set < 100 && v.pass; ++set) {
    std::vector<std::string> files;
    const int n = nfiles(rng);
    for (int i = 0; i < n; ++i)
      files.push_back(i % 3 == 0 ? fmt::format("{} I-69_TSI_STRAIN GAGE_{}_23-Nov-2020.mat", 200 + i, 100 + i)
                                 : i % 3 == 1 ? fmt::format("Traffic D{} F20 07-0{}-22.txt", i, 1 + i % 9)
                                              : fmt::format("odd, \"file\" {}.txt", i));
    const auto rows = test::random_data_rows(rng, files, static_cast<std::size_t>(nrows(rng)));
    std::vector<etl::FileMeta> metas;
    for (const auto& r : rows) metas.push_back(etl::parse_filename(r.filename));
    const auto info = etl::build_file_info(metas);
    const auto tables = etl::emit_normalized(rows, info);
    const auto joined = etl::join_by_filename_id(tables.data, tables.file_info);
    v.require(etl::joined_csv(joined) == etl::joined_csv(rows), fmt::format("set {}: joined CSV differs", set));
    v.require(joined == rows, fmt::format("set {}: joined rows differ", set));

    std::set<std::string> distinct;
    for (const auto& r : rows) distinct.insert(r.filename);
    v.require(info.size() == distinct.size(),
              fmt::format("set {}: {} FILE_INFO rows for {} files", set, info.size(), distinct.size()));
    const auto parsed = etl::parse_file_info_csv(tables.file_info);
    std::set<std::string> listed;
    for (const auto& f : parsed) listed.insert(f.meta.filename);
    v.require(listed.size() == parsed.size() && listed == distinct,
              fmt::format("set {}: FILE_INFO does not list each file once", set));
  }
  if (v.pass) v.detail = "100 row sets round-tripped byte-for-byte; FILE_INFO unique per filename";
  return v;
}

// ---- 5 -------------------------------------------------------------------

Verdict live_pipeline() {
  Verdict v;
  test::TempDir dir;
  e2e::PipelineConfig c;
  c.store_root = dir.path() / "store";
  c.scenario = e2e::default_scenario();
  c.duration_s = 60;
  c.speedup = 10;
  const auto r = e2e::run_e2e(c);
  v.require(r.published == 180, fmt::format("published {}", r.published));
  v.require(r.stored == 180, fmt::format("stored {}", r.stored));
  v.require(r.seq_gaps == 0, fmt::format("{} seq gaps", r.seq_gaps));
  v.require(r.latency_samples == 180, fmt::format("{} latency samples", r.latency_samples));
  v.require(r.latency_p99_us < 1'000'000, fmt::format("p99 {} us", r.latency_p99_us));
  if (v.pass)
    v.detail = fmt::format("stored 180/180, 0 gaps, p50 {:.1f} ms, p99 {:.1f} ms", r.latency_p50_us / 1e3,
                           r.latency_p99_us / 1e3);
  return v;
}

// ---- 6 -------------------------------------------------------------------

Verdict daily_volume() {
  Verdict v;
  test::TempDir dir;
  e2e::ReplayConfig c;
  c.store_root = dir.path() / "store";
  const auto r = e2e::run_replay(c);
  v.require(r.stored >= 2'000'000, fmt::format("stored {}", r.stored));
  v.require(r.received == r.accepted + r.rejected,
            fmt::format("received {} != accepted {} + rejected {}", r.received, r.accepted, r.rejected));
  v.require(r.stored + r.rejected == r.published,
            fmt::format("stored {} + rejected {} != published {}", r.stored, r.rejected, r.published));
  v.require(r.drained, "pipeline did not drain");
  if (v.pass)
    v.detail = fmt::format("{} samples over {} simulated s at 23.15/s; received {} = accepted {} + rejected {}",
                           r.stored, r.simulated_seconds, r.received, r.accepted, r.rejected);
  return v;
}

// ---- 7 -------------------------------------------------------------------

// Token-by-token reference matcher, written independently of the router.
bool reference_match(const std::vector<std::string>& pattern, const std::vector<std::string>& subject) {
  std::size_t i = 0;
  for (; i < pattern.size(); ++i) {
    if (pattern[i] == ">") return subject.size() > i;
    if (i >= subject.size()) return false;
    if (pattern[i] != "*" && pattern[i] != subject[i]) return false;
  }
  return i == subject.size();
}

Verdict broker_routing() {
  Verdict v;
  std::mt19937 rng(7);
  const char* vocab[] = {"site", "65", "69", "daq", "1", "sensor", "epc3"};
  std::uniform_int_distribution<int> len(1, 5), tok(0, 6), coin(0, 3);
  auto concrete = [&] {
    std::vector<std::string> t(static_cast<std::size_t>(len(rng)));
    for (auto& x : t) x = vocab[tok(rng)];
    return t;
  };

  broker::Router router;
  std::vector<std::vector<std::string>> patterns;
  for (std::uint64_t sid = 1; sid <= 100; ++sid) {
    auto t = concrete();
    for (auto& x : t)
      if (coin(rng) == 0) x = "*";
    if (coin(rng) == 0) t.back() = ">";
    patterns.push_back(t);
    router.subscribe(sid % 7, sid, wire::Subject::from_tokens(t, true));
  }
  std::size_t deliveries = 0;
  for (int p = 0; p < 100 && v.pass; ++p) {
    const auto s = concrete();
    auto got = router.route(wire::Subject::from_tokens(s));
    std::vector<broker::Delivery> want;
    for (std::uint64_t sid = 1; sid <= 100; ++sid)
      if (reference_match(patterns[sid - 1], s)) want.push_back({sid % 7, sid});
    std::sort(got.begin(), got.end());
    std::sort(want.begin(), want.end());
    v.require(got == want, fmt::format("publish {} routed {} vs reference {}", p, got.size(), want.size()));
    deliveries += want.size();
  }
  if (!v.pass) return v;

  // 50 publishing sessions, one subscriber; order per publisher must hold.
  constexpr int kSessions = 50, kEach = 1000;
  broker::BrokerOptions opts;
  opts.listen = net::Endpoint{"127.0.0.1", 0};
  broker::Broker hub(opts);
  std::mutex mu;
  std::vector<std::vector<int>> seen(kSessions);
  std::atomic<std::size_t> received{0};
  broker::Client sub(hub.endpoint(), [&](const wire::Subject& s, std::uint64_t, std::string_view p) {
    std::lock_guard lock(mu);
    seen[static_cast<std::size_t>(std::stoi(s.tokens()[1]))].push_back(std::stoi(std::string(p)));
    ++received;
  });
  sub.subscribe(wire::Subject::pattern("pub.>"));
  sub.flush();
  std::vector<std::thread> threads;
  for (int i = 0; i < kSessions; ++i)
    threads.emplace_back([&, i] {
      broker::Client c(hub.endpoint());
      const auto subject = wire::Subject::parse(fmt::format("pub.{}", i));
      for (int k = 0; k < kEach; ++k) {
        c.publish(subject, std::to_string(k));
        if (k % 100 == 99) c.flush();
      }
      c.flush();
    });
  for (auto& t : threads) t.join();
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(30);
  while (received < kSessions * kEach && std::chrono::steady_clock::now() < deadline)
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  sub.flush();

  std::lock_guard lock(mu);
  v.require(received == kSessions * kEach, fmt::format("received {} of {}", received.load(), kSessions * kEach));
  for (int i = 0; i < kSessions && v.pass; ++i) {
    bool ordered = seen[i].size() == kEach;
    for (int k = 0; ordered && k < kEach; ++k) ordered = seen[i][k] == k;
    v.require(ordered, fmt::format("session {} out of order or incomplete", i));
  }
  v.require(hub.stats().slow_consumers == 0, "subscriber dropped as slow consumer");
  if (v.pass)
    v.detail = fmt::format("100x100 routing matches reference ({} deliveries); {} messages from {} sessions in order",
                           deliveries, kSessions * kEach, kSessions);
  return v;
}

// ---- 8 -------------------------------------------------------------------

Verdict store_correctness() {
  Verdict v;
  test::TempDir dir;
  using Ref = std::map<std::int64_t, double>;
  std::map<std::string, Ref> ref;
  const std::int64_t base = parse_rfc3339("2024-05-01T00:00:00Z");
  const std::int64_t span = 2 * 86'400 * kMicrosPerSecond;
  std::mt19937_64 rng(8);
  // A 10 ms grid makes some (sensor, ts) pairs repeat; the later value wins.
  std::uniform_int_distribution<std::int64_t> tick(0, span / 10'000 - 1);
  auto ts = [&](auto& g) { return base + tick(g) * 10'000; };
  std::uniform_int_distribution<int> sensor(0, 9);
  std::normal_distribution<double> value(50.0, 20.0);

  {
    tsstore::Store store(dir.path());
    std::vector<tsstore::Sample> batch;
    for (int i = 0; i < 1'000'000; ++i) {
      tsstore::Sample s{fmt::format("65/1/s{}", sensor(rng)), ts(rng), value(rng)};
      ref[s.sensor][s.ts] = s.v;
      batch.push_back(std::move(s));
      if (batch.size() == 10'000) {
        const auto rep = store.insert(batch);
        v.require(rep.errors == 0, "insert errors");
        batch.clear();
      }
    }
    store.close();
  }

  auto ref_range = [&](const std::string& s, std::int64_t t0, std::int64_t t1) {
    std::vector<tsstore::Record> out;
    const auto& m = ref[s];
    for (auto it = m.lower_bound(t0); it != m.end() && it->first < t1; ++it) out.push_back({it->first, it->second});
    return out;
  };
  auto check_downsample = [&](const tsstore::Store& store, const std::string& s, std::int64_t t0,
                              std::int64_t t1, std::int64_t bucket) {
    struct Acc {
      double sum = 0, mn = 0, mx = 0;
      std::uint64_t n = 0;
    };
    std::map<std::int64_t, Acc> acc;
    for (const auto& r : ref_range(s, t0, t1)) {
      auto& a = acc[floor_div(r.ts, bucket) * bucket];
      a.mn = a.n ? std::min(a.mn, r.v) : r.v;
      a.mx = a.n ? std::max(a.mx, r.v) : r.v;
      a.sum += r.v;
      ++a.n;
    }
    for (auto agg : {tsstore::Agg::Avg, tsstore::Agg::Min, tsstore::Agg::Max, tsstore::Agg::Count}) {
      const auto got = store.downsample(s, t0, t1, bucket, agg);
      if (got.size() != acc.size()) {
        v.require(false, fmt::format("{} {}: {} buckets vs {}", s, to_string(agg), got.size(), acc.size()));
        return;
      }
      auto it = acc.begin();
      for (const auto& b : got) {
        const auto& a = (it++)->second;
        bool ok = b.start == std::prev(it)->first;
        switch (agg) {
          case tsstore::Agg::Avg: {
            const double want = a.sum / static_cast<double>(a.n);
            ok = ok && std::abs(b.value - want) <= 1e-12 * std::max(1.0, std::abs(want));
            break;
          }
          case tsstore::Agg::Min: ok = ok && b.value == a.mn; break;
          case tsstore::Agg::Max: ok = ok && b.value == a.mx; break;
          case tsstore::Agg::Count: ok = ok && b.value == static_cast<double>(a.n); break;
        }
        if (!ok) {
          v.require(false, fmt::format("{} {} bucket at {} differs", s, to_string(agg), b.start));
          return;
        }
      }
    }
  };

  std::map<std::string, std::vector<tsstore::Record>> first_pass;
  {
    tsstore::Store store(dir.path());
    std::uniform_int_distribution<std::int64_t> cut(base - kMicrosPerSecond * 3600, base + span + 3600 * kMicrosPerSecond);
    for (const auto& [s, m] : ref) {
      const auto all = store.query_range(s, base - 1, base + span + 1);
      v.require(all == ref_range(s, base - 1, base + span + 1), fmt::format("{} full range differs", s));
      first_pass[s] = all;
      for (int q = 0; q < 10 && v.pass; ++q) {
        auto a = cut(rng), b = cut(rng);
        if (a > b) std::swap(a, b);
        v.require(store.query_range(s, a, b) == ref_range(s, a, b), fmt::format("{} range query differs", s));
      }
      for (std::int64_t bucket : {60 * kMicrosPerSecond, 3600 * kMicrosPerSecond, 7 * kMicrosPerSecond + 123})
        if (v.pass) check_downsample(store, s, base + 1234, base + span / 3, bucket);
    }
    store.close();
  }
  {
    tsstore::Store reopened(dir.path());
    for (const auto& [s, records] : first_pass)
      v.require(reopened.query_range(s, base - 1, base + span + 1) == records, fmt::format("{} differs after reopen", s));
  }
  std::size_t unique = 0;
  for (const auto& [s, m] : ref) unique += m.size();
  if (v.pass)
    v.detail = fmt::format("1000000 inserts ({} unique) over 10 sensors match the reference; reopen identical", unique);
  return v;
}

struct Criterion {
  int id;
  const char* name;
  std::function<Verdict()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "Savitzky-Golay oracle equivalence", savgol_oracle},
      {2, "APT feature counts", apt_counts},
      {3, "laser mapping", laser_mapping},
      {4, "normalization round trip", normalization_round_trip},
      {5, "end-to-end live pipeline", live_pipeline},
      {6, "daily volume at scaled rate", daily_volume},
      {7, "broker routing oracle", broker_routing},
      {8, "store correctness", store_correctness},
  };
  const int only = argc > 1 ? std::atoi(argv[1]) : 0;
  bool ok = true;
  for (const auto& c : all) {
    if (only && c.id != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, fmt::format("exception: {}", e.what())};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    fmt::print("{} [{}] {}: {} ({:.2f} s)\n", v.pass ? "PASS" : "FAIL", c.id, c.name, v.detail, secs);
    std::fflush(stdout);
    ok = ok && v.pass;
  }
  return ok ? 0 : 1;
}
