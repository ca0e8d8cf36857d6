#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "paveh/cli.hpp"
#include "test_util.hpp"

using namespace paveh;
using namespace paveh::cli;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

// Sets an environment variable for the lifetime of the guard.
class EnvGuard {
public:
  EnvGuard(const char* name, const char* value) : name_(name) { ::setenv(name, value, 1); }
  ~EnvGuard() { ::unsetenv(name_); }
  EnvGuard(const EnvGuard&) = delete;
  EnvGuard& operator=(const EnvGuard&) = delete;

private:
  const char* name_;
};

void write(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("store query parses into a command") {
  const auto inv = parse_args({"store", "query", "--store", "/data", "--from", "2020-01-01T00:00:00Z",
                               "--to", "2020-01-02T00:00:00Z", "--sensor", "65/1/epc3"});
  const auto* q = std::get_if<StoreQuery>(&inv.command);
  REQUIRE(q != nullptr);
  CHECK(q->sensor == "65/1/epc3");
  CHECK(q->to_us - q->from_us == 86'400'000'000LL);
  CHECK_FALSE(q->bucket_us.has_value());

  const auto ds = parse_args({"store", "query", "--store", "/d", "--sensor", "a", "--from",
                              "2020-01-01T00:00:00Z", "--to", "2020-01-01T01:00:00Z", "--bucket",
                              "1m", "--agg", "max"});
  const auto& d = std::get<StoreQuery>(ds.command);
  CHECK(d.bucket_us == 60'000'000);
  CHECK(d.agg == tsstore::Agg::Max);
}

TEST_CASE("usage errors") {
  CHECK_THROWS_AS(parse_args({"store", "query", "--store", "/d", "--sensor", "a", "--from",
                              "2020-01-02T00:00:00Z", "--to", "2020-01-01T00:00:00Z"}),
                  UsageError);
  CHECK_THROWS_AS(parse_args({"store", "query", "--store", "/d", "--sensor", "a", "--from",
                              "2020-01-01T00:00:00Z", "--to", "2020-01-02T00:00:00Z", "--agg", "avg"}),
                  UsageError);
  CHECK_THROWS_AS(parse_args({"store", "query", "--sensor", "a", "--from", "2020-01-01T00:00:00Z",
                              "--to", "2020-01-02T00:00:00Z"}),
                  UsageError);
  CHECK_THROWS_AS(parse_args({"dsp", "inspect", "--in", "x.csv", "--window", "10"}), UsageError);
  CHECK_THROWS_AS(parse_args({"etl", "process", "--in", "a", "--out", "b", "--kind", "quartz"}), UsageError);
  CHECK_THROWS_AS(parse_args({"e2e", "--speedup", "0.5"}), UsageError);

  const auto none = invoke({});
  CHECK(none.code == kUsage);
  CHECK(none.err.find("Usage") != std::string::npos);
  CHECK(none.out.empty());
  CHECK(invoke({"store", "query", "--nope"}).code == kUsage);
  const auto help = invoke({"etl", "process", "--help"});
  CHECK(help.code == kOk);
  CHECK(help.out.find("--kind") != std::string::npos);
}

TEST_CASE("flags beat environment beats config file") {
  test::TempDir dir;
  const auto cfg = dir.path() / "cfg.json";
  write(cfg, R"({"broker": "10.0.0.1:1000", "daqsim": {"run": {"speedup": 4}}, "scenario": "s.json"})");

  auto run_cmd = [&](std::vector<std::string> extra) {
    std::vector<std::string> args{"--config", cfg.string(), "daqsim", "run"};
    args.insert(args.end(), extra.begin(), extra.end());
    return std::get<DaqsimRun>(parse_args(args).command);
  };
  auto c = run_cmd({});
  CHECK(c.broker.str() == "10.0.0.1:1000");
  CHECK(c.speedup == 4.0);
  CHECK(c.scenario == "s.json");
  {
    EnvGuard env("PAVEH_BROKER", "10.0.0.2:2000");
    CHECK(run_cmd({}).broker.str() == "10.0.0.2:2000");
    CHECK(run_cmd({"--broker", "10.0.0.3:3000"}).broker.str() == "10.0.0.3:3000");
  }
  {
    EnvGuard env("PAVEH_CONFIG", cfg.string().c_str());
    CHECK(std::get<DaqsimRun>(parse_args({"daqsim", "run"}).command).speedup == 4.0);
  }
  write(cfg, "not json");
  CHECK_THROWS_AS(run_cmd({}), UsageError);
}

TEST_CASE("etl commands and exit codes") {
  test::TempDir dir;
  const auto in = dir.path() / "in";
  std::filesystem::create_directories(in);
  std::string tc = "# kind: TC\n# gage: T1\n";
  for (int i = 0; i < 3000; ++i)
    tc += std::to_string(i / 10.0) + "," + std::to_string(70 + 10 * std::sin(2 * 3.141592653589793 * i / 1000.0)) + "\n";
  write(in / "a.txt", tc);
  const auto out = dir.path() / "out";

  const auto ok = invoke({"etl", "process", "--in", in.string(), "--out", out.string()});
  CHECK(ok.code == kOk);
  CHECK(ok.out.find("\"rows\": 6") != std::string::npos);
  CHECK(std::filesystem::exists(out / "data.csv"));
  CHECK(std::filesystem::exists(out / "laser.csv"));

  const auto joined = invoke({"etl", "join", "--data", (out / "data.csv").string(), "--fileinfo",
                              (out / "file_info.csv").string()});
  CHECK(joined.code == kOk);
  CHECK(joined.out.rfind("filename,captured_instance", 0) == 0);
  CHECK(joined.out.find("a.txt,first20,T1") != std::string::npos);

  write(dir.path() / "empty_info.csv", "id,filename,project_name,test_section,sensor_type,location,gage_id,survey_date,description\n");
  CHECK(invoke({"etl", "join", "--data", (out / "data.csv").string(), "--fileinfo",
                (dir.path() / "empty_info.csv").string()})
            .code == kIntegrity);

  write(in / "b.txt", "# kind: TC\n");
  const auto bad = invoke({"etl", "process", "--in", in.string(), "--out", out.string()});
  CHECK(bad.code == kIntegrity);
  CHECK(bad.err.find("b.txt") != std::string::npos);
  CHECK(bad.err.find("line 2") != std::string::npos);

  CHECK(invoke({"etl", "process", "--in", (dir.path() / "missing").string(), "--out", out.string()}).code ==
        kRuntime);
}

TEST_CASE("dsp inspect prints the smoothed column") {
  test::TempDir dir;
  std::string csv = "t,y\n";
  for (int i = 0; i < 20; ++i) csv += std::to_string(i) + "," + std::to_string(2 * i + 1) + "\n";
  write(dir.path() / "in.csv", csv);
  const auto r = invoke({"dsp", "inspect", "--in", (dir.path() / "in.csv").string(), "--window", "5"});
  REQUIRE(r.code == kOk);
  std::istringstream lines(r.out);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "t,y,y_smoothed");
  int n = 0;
  while (std::getline(lines, line)) {
    const auto a = line.find(','), b = line.rfind(',');
    CHECK(std::abs(std::stod(line.substr(b + 1)) - std::stod(line.substr(a + 1, b - a - 1))) < 1e-9);
    ++n;
  }
  CHECK(n == 20);
  const auto shortfile = invoke({"dsp", "inspect", "--in", (dir.path() / "in.csv").string(), "--window", "51"});
  CHECK(shortfile.code == kIntegrity);
}

TEST_CASE("store commands") {
  test::TempDir dir;
  const auto root = dir.path() / "store";
  const auto e = invoke({"e2e", "--duration", "3", "--store", root.string(), "--format", "json"});
  REQUIRE(e.code == kOk);
  CHECK(e.out.find("\"stored\": 9") != std::string::npos);

  const auto q = invoke({"store", "query", "--store", root.string(), "--sensor", "65/1/epc2", "--from",
                         "2000-01-01T00:00:00Z", "--to", "2100-01-01T00:00:00Z"});
  CHECK(q.code == kOk);
  CHECK(std::count(q.out.begin(), q.out.end(), '\n') == 4);
  CHECK(q.out.rfind("ts_rfc3339,value\n", 0) == 0);

  CHECK(invoke({"store", "check", "--store", root.string()}).code == kOk);
  CHECK(invoke({"store", "check", "--store", (dir.path() / "nowhere").string()}).code == kRuntime);
}
