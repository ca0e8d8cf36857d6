#include "paveh/cli.hpp"

#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "paveh/broker.hpp"
#include "paveh/connector.hpp"
#include "paveh/daqsim.hpp"
#include "paveh/dsp.hpp"
#include "paveh/e2e.hpp"
#include "paveh/timeutil.hpp"

namespace paveh::cli {

namespace {

using nlohmann::json;

// Data problems in the inputs, as opposed to environment failures.
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

void install_signal_handlers() {
  g_stop.store(false);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
}

bool stop_requested() { return g_stop.load(); }

std::string env_name(std::string name) {
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) {
    return c == '-' ? '_' : static_cast<char>(std::toupper(c));
  });
  return "PAVEH_" + name;
}

std::optional<std::string> config_path(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--") break;
    if (args[i] == "--config") {
      if (i + 1 == args.size()) throw UsageError("--config needs a path");
      return args[i + 1];
    }
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  if (const char* env = std::getenv("PAVEH_CONFIG"); env && *env) return std::string(env);
  return std::nullopt;
}

json load_config(const std::optional<std::string>& path) {
  if (!path) return json::object();
  std::ifstream in(*path);
  if (!in) throw UsageError(fmt::format("cannot read config file '{}'", *path));
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError(fmt::format("config file '{}': {}", *path, e.what()));
  }
  if (!j.is_object()) throw UsageError("config file must hold a JSON object");
  return j;
}

std::optional<std::string> scalar(const json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_boolean()) return j.get<bool>() ? "true" : "false";
  if (j.is_number_integer()) return std::to_string(j.get<std::int64_t>());
  if (j.is_number()) return fmt::format("{}", j.get<double>());
  return std::nullopt;
}

// Config lookup, most specific section first: {"store": {"query": {"sensor": ...}}}
// beats {"store": {"sensor": ...}} beats {"sensor": ...}.
std::optional<std::string> config_value(const json& cfg, const std::vector<std::string>& path,
                                        const std::string& key) {
  std::vector<const json*> scopes{&cfg};
  for (const auto& p : path) {
    const auto* top = scopes.back();
    const auto it = top->find(p);
    if (it == top->end() || !it->is_object()) break;
    scopes.push_back(&*it);
  }
  for (auto s = scopes.rbegin(); s != scopes.rend(); ++s) {
    const auto it = (*s)->find(key);
    if (it != (*s)->end() && !it->is_object()) {
      auto v = scalar(*it);
      if (!v) throw UsageError(fmt::format("config value for '{}' must be a scalar", key));
      return v;
    }
  }
  return std::nullopt;
}

void layer_sources(CLI::App& app, const json& cfg, std::vector<std::string> path) {
  for (auto* opt : app.get_options()) {
    const auto& names = opt->get_lnames();
    if (names.empty() || names[0].rfind("help", 0) == 0 || names[0] == "config") continue;
    opt->envname(env_name(names[0]));
    if (auto v = config_value(cfg, path, names[0])) opt->default_val(*v);
  }
  for (auto* sub : app.get_subcommands({})) {
    auto p = path;
    p.push_back(sub->get_name());
    layer_sources(*sub, cfg, p);
  }
}

template <class T>
T convert(const std::string& flag, const std::string& text, T (*fn)(std::string_view)) {
  try {
    return fn(text);
  } catch (const std::exception& e) {
    throw UsageError(fmt::format("{}: {}", flag, e.what()));
  }
}

net::Endpoint endpoint(const std::string& flag, const std::string& text) {
  return convert<net::Endpoint>(flag, text, [](std::string_view s) { return net::Endpoint::parse(s); });
}

std::int64_t duration(const std::string& flag, const std::string& text) {
  const auto us = convert<std::int64_t>(flag, text, [](std::string_view s) { return parse_duration_us(s); });
  if (us <= 0) throw UsageError(fmt::format("{} must be positive", flag));
  return us;
}

std::int64_t timestamp(const std::string& flag, const std::string& text) {
  return convert<std::int64_t>(flag, text, [](std::string_view s) { return parse_rfc3339(s); });
}

const std::string& need(const std::string& flag, const std::string& value) {
  if (value.empty()) throw UsageError(fmt::format("{} is required", flag));
  return value;
}

// Raw strings as CLI11 sees them; conversion happens after all layers apply.
struct Raw {
  std::string log_level = "info";
  std::string listen = "127.0.0.1:4222", broker = "127.0.0.1:4222", store, subject = "site.>",
              metrics_listen = "127.0.0.1:9464", endpoint = "127.0.0.1:9464", format, scenario,
              site, daq, sensor, from, to, bucket, agg, in, out, kind = "auto", data, fileinfo,
              keepalive = "30s", e2e_broker = "127.0.0.1:0";
  std::size_t max_payload = wire::kDefaultMaxPayload, queue = 8192, batch = 500,
              connector_queue = 10'000, first = 20, last = 20, replay_sensors = 24;
  double speedup = 1.0, e2e_speedup = 10.0, replay_rate = 0;
  std::int64_t duration_s = 0, replay_seconds = 86'400;
  int window = 0, order = 0, metrics_port = -1;
};

}  // namespace

Invocation parse_args(const std::vector<std::string>& args) {
  const auto cfg = load_config(config_path(args));
  Raw r;

  CLI::App app{"Pavement sensor data toolkit: live ingestion and static ETL", "paveh"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  std::string config_flag;
  app.add_option("--config", config_flag, "JSON config file (also PAVEH_CONFIG)");
  app.add_option("--log-level", r.log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  auto* broker_cmd = app.add_subcommand("broker", "Subject router")->require_subcommand(1);
  auto* serve = broker_cmd->add_subcommand("serve", "Run the broker until interrupted");
  serve->add_option("--listen", r.listen, "Listen address host:port");
  serve->add_option("--max-payload", r.max_payload, "Largest accepted payload in bytes")
      ->check(CLI::PositiveNumber);
  serve->add_option("--queue", r.queue, "Per-session outbound queue in frames")->check(CLI::PositiveNumber);
  serve->add_option("--keepalive", r.keepalive, "PING interval, e.g. 30s");

  auto* daq_cmd = app.add_subcommand("daqsim", "DAQ simulator")->require_subcommand(1);
  auto* daq_run = daq_cmd->add_subcommand("run", "Publish one-second averages for a scenario");
  daq_run->add_option("--broker", r.broker, "Broker address");
  daq_run->add_option("--scenario", r.scenario, "Scenario JSON file (required)");
  daq_run->add_option("--site", r.site, "Override the scenario site id");
  daq_run->add_option("--daq", r.daq, "Override the scenario DAQ id");
  daq_run->add_option("--speedup", r.speedup, "Simulated seconds per wall second")->check(CLI::Range(1.0, 1e9));
  daq_run->add_option("--duration", r.duration_s, "Override the scenario duration in seconds");

  auto* conn_cmd = app.add_subcommand("connector", "Broker-to-store connector")->require_subcommand(1);
  auto* conn_run = conn_cmd->add_subcommand("run", "Ingest until interrupted");
  conn_run->add_option("--broker", r.broker, "Broker address");
  conn_run->add_option("--store", r.store, "Store root directory (required)");
  conn_run->add_option("--subject", r.subject, "Subscription pattern");
  conn_run->add_option("--metrics-listen", r.metrics_listen, "Address for GET /metrics");
  conn_run->add_option("--batch", r.batch, "Insert batch size")->check(CLI::PositiveNumber);
  conn_run->add_option("--queue", r.connector_queue, "Bounded queue capacity")->check(CLI::PositiveNumber);
  auto* conn_metrics = conn_cmd->add_subcommand("metrics", "Fetch metrics from a running connector");
  conn_metrics->add_option("--endpoint", r.endpoint, "Metrics address");
  r.format = "";
  conn_metrics->add_option("--format", r.format, "text or csv")->check(CLI::IsMember({"text", "csv"}));

  auto* store_cmd = app.add_subcommand("store", "Time-series store")->require_subcommand(1);
  auto* query = store_cmd->add_subcommand("query", "Range query or downsample as CSV");
  query->add_option("--store", r.store, "Store root (required)");
  query->add_option("--sensor", r.sensor, "Sensor key, e.g. 65/1/epc3 (required)");
  query->add_option("--from", r.from, "Inclusive RFC 3339 start (required)");
  query->add_option("--to", r.to, "Exclusive RFC 3339 end (required)");
  query->add_option("--bucket", r.bucket, "Downsample bucket, e.g. 1m");
  query->add_option("--agg", r.agg, "avg, min, max or count")->check(CLI::IsMember({"avg", "min", "max", "count"}));
  query->add_option("--format", r.format, "csv")->check(CLI::IsMember({"csv"}));
  auto* check = store_cmd->add_subcommand("check", "Verify every segment");
  check->add_option("--store", r.store, "Store root (required)");

  auto* etl_cmd = app.add_subcommand("etl", "Static-path ETL")->require_subcommand(1);
  auto* process = etl_cmd->add_subcommand("process", "Raw logs to normalized CSV tables");
  process->add_option("--in", r.in, "Raw log file or directory (required)");
  process->add_option("--kind", r.kind, "auto or a sensor kind");
  process->add_option("--out", r.out, "Output directory (required)");
  process->add_option("--window", r.window, "Override the smoothing window");
  process->add_option("--order", r.order, "Override the polynomial order");
  process->add_option("--first", r.first, "Leading passes kept");
  process->add_option("--last", r.last, "Trailing passes kept");
  auto* join = etl_cmd->add_subcommand("join", "Denormalize a data table through FILE_INFO");
  join->add_option("--data", r.data, "Data or laser CSV (required)");
  join->add_option("--fileinfo", r.fileinfo, "File-info CSV (required)");
  join->add_option("--out", r.out, "Output CSV, - for stdout");

  auto* dsp_cmd = app.add_subcommand("dsp", "Signal tools")->require_subcommand(1);
  auto* inspect = dsp_cmd->add_subcommand("inspect", "Smooth a t,y CSV and print t,y,y_smoothed");
  inspect->add_option("--in", r.in, "CSV with t,y columns or a raw log (required)");
  inspect->add_option("--window", r.window, "Odd window length");
  inspect->add_option("--order", r.order, "Polynomial order");
  inspect->add_option("--out", r.out, "Output CSV, - for stdout");

  auto* e2e_cmd = app.add_subcommand("e2e", "Run broker, connector and simulator together");
  e2e_cmd->add_option("--scenario", r.scenario, "Scenario JSON (default: 3 EPC sensors for 60 s)");
  e2e_cmd->add_option("--store", r.store, "Store root (default: a temporary directory)");
  e2e_cmd->add_option("--broker", r.e2e_broker, "Embedded broker listen address");
  e2e_cmd->add_option("--duration", r.duration_s, "Override the scenario duration in seconds");
  e2e_cmd->add_option("--speedup", r.e2e_speedup, "Simulated seconds per wall second")->check(CLI::Range(1.0, 1e9));
  e2e_cmd->add_option("--metrics-port", r.metrics_port, "Serve /metrics on this port")->check(CLI::Range(0, 65535));
  e2e_cmd->add_option("--format", r.format, "json or text")->check(CLI::IsMember({"json", "text"}));
  e2e_cmd->add_option("--replay-rate", r.replay_rate, "Replay at this aggregate rate instead of the simulator")
      ->check(CLI::PositiveNumber);
  e2e_cmd->add_option("--replay-seconds", r.replay_seconds, "Simulated seconds to replay")->check(CLI::PositiveNumber);
  e2e_cmd->add_option("--replay-sensors", r.replay_sensors, "Sensors sharing the replay rate")->check(CLI::PositiveNumber);

  layer_sources(app, cfg, {});

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  // Help for the deepest subcommand reached.
  const auto leaf = [&app]() -> const CLI::App* {
    const CLI::App* a = &app;
    while (!a->get_subcommands().empty()) a = a->get_subcommands().front();
    return a;
  };
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    throw HelpRequested{leaf()->help()};
  } catch (const CLI::CallForAllHelp&) {
    throw HelpRequested{app.help("", CLI::AppFormatMode::All)};
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what(), leaf()->help());
  }

  Invocation inv;
  inv.log_level = r.log_level;
  const auto opt_string = [](const std::string& s) -> std::optional<std::string> {
    if (s.empty()) return std::nullopt;
    return s;
  };

  if (serve->parsed()) {
    inv.command = BrokerServe{endpoint("--listen", r.listen), r.max_payload, r.queue,
                              std::chrono::milliseconds(duration("--keepalive", r.keepalive) / 1000)};
  } else if (daq_run->parsed()) {
    DaqsimRun c;
    c.broker = endpoint("--broker", r.broker);
    c.scenario = need("--scenario", r.scenario);
    c.site = opt_string(r.site);
    c.daq = opt_string(r.daq);
    c.speedup = r.speedup;
    if (r.duration_s < 0) throw UsageError("--duration must be positive");
    if (r.duration_s > 0) c.duration_s = r.duration_s;
    inv.command = c;
  } else if (conn_run->parsed()) {
    ConnectorRun c;
    c.broker = endpoint("--broker", r.broker);
    c.store = need("--store", r.store);
    c.subject = r.subject;
    try {
      wire::Subject::pattern(r.subject);
    } catch (const std::exception& e) {
      throw UsageError(fmt::format("--subject: {}", e.what()));
    }
    c.metrics_listen = endpoint("--metrics-listen", r.metrics_listen);
    c.batch = r.batch;
    c.queue = r.connector_queue;
    inv.command = c;
  } else if (conn_metrics->parsed()) {
    inv.command = ConnectorMetrics{endpoint("--endpoint", r.endpoint), r.format.empty() ? "text" : r.format};
  } else if (query->parsed()) {
    StoreQuery c;
    c.store = need("--store", r.store);
    c.sensor = need("--sensor", r.sensor);
    c.from_us = timestamp("--from", need("--from", r.from));
    c.to_us = timestamp("--to", need("--to", r.to));
    if (c.from_us > c.to_us) throw UsageError("--from must not be later than --to");
    if (!r.bucket.empty()) c.bucket_us = duration("--bucket", r.bucket);
    if (!r.agg.empty()) {
      if (!c.bucket_us) throw UsageError("--agg needs --bucket");
      c.agg = tsstore::parse_agg(r.agg);
    }
    inv.command = c;
  } else if (check->parsed()) {
    inv.command = StoreCheck{need("--store", r.store)};
  } else if (process->parsed()) {
    EtlProcess c;
    c.in = need("--in", r.in);
    c.out = need("--out", r.out);
    if (r.kind != "auto") {
      c.kind = parse_sensor_kind(r.kind);
      if (!c.kind) throw UsageError(fmt::format("--kind: unknown sensor kind '{}'", r.kind));
    }
    if (r.window) c.options.window = r.window;
    if (r.order) c.options.polyorder = r.order;
    c.options.first_n = r.first;
    c.options.last_n = r.last;
    dsp::DspConfig probe;
    if (c.options.window) probe.window = *c.options.window;
    if (c.options.polyorder) probe.polyorder = *c.options.polyorder;
    try {
      probe.validate();
    } catch (const dsp::DspError& e) {
      throw UsageError(e.what());
    }
    inv.command = c;
  } else if (join->parsed()) {
    inv.command = EtlJoin{need("--data", r.data), need("--fileinfo", r.fileinfo), r.out.empty() ? "-" : r.out};
  } else if (inspect->parsed()) {
    DspInspect c;
    c.in = need("--in", r.in);
    if (r.window) c.window = r.window;
    if (r.order) c.order = r.order;
    c.out = r.out.empty() ? "-" : r.out;
    try {
      dsp::DspConfig{c.window, c.order}.validate();
    } catch (const dsp::DspError& e) {
      throw UsageError(e.what());
    }
    inv.command = c;
  } else if (e2e_cmd->parsed()) {
    E2E c;
    if (!r.scenario.empty()) c.scenario = r.scenario;
    if (!r.store.empty()) c.store = r.store;
    c.broker = endpoint("--broker", r.e2e_broker);
    if (r.duration_s < 0) throw UsageError("--duration must be positive");
    if (r.duration_s > 0) c.duration_s = r.duration_s;
    c.speedup = r.e2e_speedup;
    if (r.metrics_port >= 0) c.metrics_port = static_cast<std::uint16_t>(r.metrics_port);
    c.format = r.format.empty() ? "json" : r.format;
    if (r.replay_rate > 0) c.replay_rate = r.replay_rate;
    c.replay_seconds = r.replay_seconds;
    c.replay_sensors = r.replay_sensors;
    inv.command = c;
  }
  return inv;
}

namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot open '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  out << text;
  if (!out.flush()) throw std::runtime_error(fmt::format("write to '{}' failed", path.string()));
}

void emit(const std::string& target, std::string_view text, std::ostream& out) {
  if (target == "-")
    out << text;
  else
    write_text(target, text);
}

void wait_for_signal() {
  while (!stop_requested()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

int exec(const BrokerServe& c, std::ostream&) {
  install_signal_handlers();
  broker::Broker b(broker::BrokerOptions{c.listen, c.max_payload, c.queue, c.keepalive});
  spdlog::info("broker listening on {}", b.endpoint().str());
  wait_for_signal();
  b.stop();
  const auto s = b.stats();
  spdlog::info("broker stopped: {} published, {} delivered, {} sessions", s.published, s.delivered,
               s.sessions_accepted);
  return kOk;
}

int exec(const DaqsimRun& c, std::ostream& out) {
  install_signal_handlers();
  daqsim::Scenario sc;
  try {
    sc = daqsim::load_scenario(c.scenario);
    if (c.site) sc.site = *c.site;
    if (c.daq) sc.daq = *c.daq;
    if (c.duration_s) sc.duration_s = *c.duration_s;
    if (sc.start_us == 0) sc.start_us = floor_div(now_us(), kMicrosPerSecond) * kMicrosPerSecond;
    sc.validate();
  } catch (const daqsim::ScenarioError& e) {
    throw DataError(e.what());
  }
  broker::Client client(c.broker);
  daqsim::Daq daq(sc);
  const auto publish = [&client](const wire::Subject& s, const wire::SamplePayload& p) {
    try {
      client.publish(s, wire::encode_payload(p));
      return true;
    } catch (const std::exception& e) {
      spdlog::warn("publish failed: {}", e.what());
      return false;
    }
  };
  spdlog::info("publishing {} sensors for {} s at speedup {}", sc.sensors.size(), sc.duration_s, c.speedup);
  const auto stats = daqsim::run(daq, publish, {c.speedup, std::nullopt}, stop_requested);
  client.flush();
  client.close();
  json j{{"published", stats.published}, {"failed", stats.failed}, {"seconds", stats.seconds}};
  out << j.dump() << "\n";
  return stats.failed ? kRuntime : kOk;
}

int exec(const ConnectorRun& c, std::ostream& out) {
  install_signal_handlers();
  tsstore::Store store(c.store);
  connector::ConnectorOptions opt;
  opt.broker = c.broker;
  opt.subject = c.subject;
  opt.batch_size = c.batch;
  opt.queue_capacity = c.queue;
  connector::Connector conn(store, opt);
  connector::MetricsServer metrics([&conn] { return conn.metrics_snapshot(); }, c.metrics_listen);
  spdlog::info("connector: {} -> {}, metrics on port {}", c.broker.str(), c.store.string(), metrics.port());
  wait_for_signal();
  conn.stop();
  store.close();
  out << connector::format_metrics_text(connector::metric_pairs(conn.metrics_snapshot()));
  return kOk;
}

int exec(const ConnectorMetrics& c, std::ostream& out) {
  const auto body = connector::fetch_metrics(c.endpoint);
  if (c.format == "csv")
    out << connector::format_metrics_csv(connector::parse_metrics_text(body));
  else
    out << body;
  return kOk;
}

int exec(const StoreQuery& c, std::ostream& out) {
  if (!std::filesystem::is_directory(c.store))
    throw std::runtime_error(fmt::format("no store at '{}'", c.store.string()));
  tsstore::Store store(c.store);
  std::string csv = "ts_rfc3339,value\n";
  if (c.bucket_us) {
    for (const auto& b : store.downsample(c.sensor, c.from_us, c.to_us, *c.bucket_us, c.agg))
      csv += fmt::format("{},{}\n", format_rfc3339(b.start), b.value);
  } else {
    for (const auto& r : store.query_range(c.sensor, c.from_us, c.to_us))
      csv += fmt::format("{},{}\n", format_rfc3339(r.ts), r.v);
  }
  out << csv;
  return kOk;
}

int exec(const StoreCheck& c, std::ostream& out) {
  if (!std::filesystem::is_directory(c.store))
    throw std::runtime_error(fmt::format("no store at '{}'", c.store.string()));
  const auto issues = tsstore::verify_segments(c.store);
  json j = json::array();
  for (const auto& i : issues) j.push_back({{"segment", i.segment.string()}, {"problem", i.problem}});
  out << j.dump(2) << "\n";
  if (!issues.empty()) {
    spdlog::error("{} segment problems", issues.size());
    return kIntegrity;
  }
  return kOk;
}

int exec(const EtlProcess& c, std::ostream& out) {
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(c.in)) {
    for (const auto& e : std::filesystem::directory_iterator(c.in))
      if (e.is_regular_file() && e.path().filename().string().front() != '.') files.push_back(e.path());
    std::sort(files.begin(), files.end());
  } else if (std::filesystem::is_regular_file(c.in)) {
    files.push_back(c.in);
  } else {
    throw std::runtime_error(fmt::format("no such input '{}'", c.in.string()));
  }

  std::vector<etl::DataRow> rows;
  std::vector<etl::LaserRow> laser;
  std::vector<etl::FileMeta> metas;
  json summary = json::array();
  for (const auto& f : files) {
    etl::ProcessResult res;
    try {
      res = etl::process_file(f, c.kind, c.options);
    } catch (const etl::FormatError& e) {
      throw DataError(fmt::format("{}: {}", f.string(), e.what()));
    } catch (const dsp::DspError& e) {
      throw DataError(fmt::format("{}: {}", f.string(), e.what()));
    }
    for (const auto& w : res.warnings) spdlog::warn("{}: {}", f.filename().string(), w);
    summary.push_back({{"file", f.filename().string()},
                       {"kind", std::string(to_string(res.kind))},
                       {"rows", res.rows.size()},
                       {"laser_rows", res.laser_rows.size()},
                       {"peak_rows", res.peak_rows},
                       {"envelope_rows", res.envelope_rows},
                       {"warnings", res.warnings}});
    metas.push_back(res.meta);
    rows.insert(rows.end(), res.rows.begin(), res.rows.end());
    laser.insert(laser.end(), res.laser_rows.begin(), res.laser_rows.end());
  }
  const auto info = etl::build_file_info(metas);
  const auto tables = etl::emit_normalized(rows, info);
  std::filesystem::create_directories(c.out);
  write_text(c.out / "data.csv", tables.data);
  write_text(c.out / "file_info.csv", tables.file_info);
  write_text(c.out / "laser.csv", etl::emit_laser_csv(laser, info));
  out << summary.dump(2) << "\n";
  return kOk;
}

int exec(const EtlJoin& c, std::ostream& out) {
  const auto data = read_text(c.data);
  const auto info = read_text(c.fileinfo);
  if (data.rfind(etl::kLaserHeader, 0) == 0)
    emit(c.out, etl::joined_laser_csv(etl::join_laser_by_filename_id(data, info)), out);
  else
    emit(c.out, etl::joined_csv(etl::join_by_filename_id(data, info)), out);
  return kOk;
}

int exec(const DspInspect& c, std::ostream& out) {
  const auto text = read_text(c.in);
  dsp::Series s;
  if (!text.empty() && text.front() == '#') {
    s = etl::parse_raw_log_text(text).channels.at(0).series;
  } else {
    const auto records = etl::parse_csv(text);
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& rec = records[i];
      if (rec.size() < 2) throw DataError(fmt::format("line {}: expected t,y", i + 1));
      double t = 0, y = 0;
      try {
        std::size_t a = 0, b = 0;
        t = std::stod(rec[0], &a);
        y = std::stod(rec[1], &b);
        if (a != rec[0].size() || b != rec[1].size()) throw std::invalid_argument("trailing text");
      } catch (const std::exception&) {
        if (i == 0) continue;  // header
        throw DataError(fmt::format("line {}: unparsable number", i + 1));
      }
      s.t.push_back(t);
      s.y.push_back(y);
    }
  }
  dsp::Series sm;
  try {
    sm = dsp::smooth(s, dsp::DspConfig{c.window, c.order});
  } catch (const dsp::DspError& e) {
    throw DataError(e.what());
  }
  std::string csv = "t,y,y_smoothed\n";
  for (std::size_t i = 0; i < s.t.size(); ++i)
    csv += fmt::format("{},{},{}\n", s.t[i], s.y[i], sm.y[i]);
  emit(c.out, csv, out);
  return kOk;
}

// Scratch store for e2e runs without --store.
class ScratchDir {
public:
  ScratchDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / fmt::format("paveh-e2e-{:x}{:x}", rd(), rd());
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

private:
  std::filesystem::path path_;
};

int exec(const E2E& c, std::ostream& out) {
  install_signal_handlers();
  std::optional<ScratchDir> scratch;
  if (!c.store) scratch.emplace();
  const auto root = c.store ? *c.store : scratch->path();

  e2e::E2EReport report;
  try {
    if (c.replay_rate) {
      e2e::ReplayConfig rc;
      rc.store_root = root;
      rc.rate_per_s = *c.replay_rate;
      rc.seconds = c.duration_s.value_or(c.replay_seconds);
      rc.sensors = c.replay_sensors;
      report = e2e::run_replay(rc, stop_requested);
    } else {
      e2e::PipelineConfig pc;
      pc.broker = c.broker;
      pc.store_root = root;
      try {
        pc.scenario = c.scenario ? daqsim::load_scenario(*c.scenario) : e2e::default_scenario();
      } catch (const daqsim::ScenarioError& e) {
        throw DataError(e.what());
      }
      pc.duration_s = c.duration_s;
      pc.speedup = c.speedup;
      if (c.metrics_port) pc.metrics = net::Endpoint{"127.0.0.1", *c.metrics_port};
      report = e2e::run_e2e(pc, stop_requested);
    }
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  out << (c.format == "text" ? e2e::to_text(report) : e2e::to_json(report));
  if (!report.conserved()) {
    spdlog::error("stored {} != published {} - rejected {}", report.stored, report.published,
                  report.rejected);
    return kIntegrity;
  }
  return report.errors.empty() ? kOk : kRuntime;
}

void configure_logging(const std::string& level) {
  static auto logger = [] {
    auto l = spdlog::stderr_color_mt("paveh");
    spdlog::set_default_logger(l);
    return l;
  }();
  spdlog::set_level(spdlog::level::from_str(level));
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  configure_logging("info");
  Invocation inv;
  try {
    inv = parse_args(args);
  } catch (const HelpRequested& h) {
    out << h.text;
    return kOk;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    if (!e.help().empty()) err << "\n" << e.help();
    return kUsage;
  }
  configure_logging(inv.log_level);
  try {
    return std::visit([&out](const auto& c) { return exec(c, out); }, inv.command);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kIntegrity;
  } catch (const etl::FormatError& e) {
    err << "data error: " << e.what() << "\n";
    return kIntegrity;
  } catch (const etl::DanglingReference& e) {
    err << "integrity error: " << e.what() << "\n";
    return kIntegrity;
  } catch (const etl::IntegrityError& e) {
    err << "integrity error: " << e.what() << "\n";
    return kIntegrity;
  } catch (const tsstore::CorruptSegment& e) {
    err << "integrity error: " << e.what() << "\n";
    return kIntegrity;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
}

}  // namespace paveh::cli
