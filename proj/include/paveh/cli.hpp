// Command-line front end. Settings resolve as flag > PAVEH_<OPTION> env var
// > config file (JSON named by --config or PAVEH_CONFIG) > built-in default.
#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "paveh/etl.hpp"
#include "paveh/gauge.hpp"
#include "paveh/net.hpp"
#include "paveh/tsstore.hpp"

namespace paveh::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kRuntime = 3, kIntegrity = 4 };

class UsageError : public std::runtime_error {
public:
  UsageError(const std::string& what, std::string help = {})
      : std::runtime_error(what), help_(std::move(help)) {}
  const std::string& help() const noexcept { return help_; }

private:
  std::string help_;
};

/// --help was given; carries the text to print.
struct HelpRequested {
  std::string text;
};

struct BrokerServe {
  net::Endpoint listen;
  std::size_t max_payload = 0;
  std::size_t queue = 0;
  std::chrono::milliseconds keepalive{0};
};

struct DaqsimRun {
  net::Endpoint broker;
  std::filesystem::path scenario;
  std::optional<std::string> site;
  std::optional<std::string> daq;
  double speedup = 1.0;
  std::optional<std::int64_t> duration_s;
};

struct ConnectorRun {
  net::Endpoint broker;
  std::filesystem::path store;
  std::string subject;
  net::Endpoint metrics_listen;
  std::size_t batch = 0;
  std::size_t queue = 0;
};

struct ConnectorMetrics {
  net::Endpoint endpoint;
  std::string format;  // text | csv
};

struct StoreQuery {
  std::filesystem::path store;
  std::string sensor;
  std::int64_t from_us = 0;
  std::int64_t to_us = 0;
  std::optional<std::int64_t> bucket_us;
  tsstore::Agg agg = tsstore::Agg::Avg;
};

struct StoreCheck {
  std::filesystem::path store;
};

struct EtlProcess {
  std::filesystem::path in;
  std::filesystem::path out;
  std::optional<SensorKind> kind;  // nullopt = auto
  etl::ProcessOptions options;
};

struct EtlJoin {
  std::filesystem::path data;
  std::filesystem::path fileinfo;
  std::string out;  // "-" = stdout
};

struct DspInspect {
  std::filesystem::path in;
  int window = 1001;
  int order = 2;
  std::string out;
};

struct E2E {
  std::optional<std::filesystem::path> scenario;
  std::optional<std::filesystem::path> store;
  net::Endpoint broker;
  std::optional<std::int64_t> duration_s;
  double speedup = 10.0;
  std::optional<std::uint16_t> metrics_port;
  std::string format;  // json | text
  std::optional<double> replay_rate;
  std::int64_t replay_seconds = 86'400;
  std::size_t replay_sensors = 24;
};

using Command = std::variant<BrokerServe, DaqsimRun, ConnectorRun, ConnectorMetrics, StoreQuery,
                             StoreCheck, EtlProcess, EtlJoin, DspInspect, E2E>;

struct Invocation {
  Command command;
  std::string log_level = "info";
};

/// `args` excludes the program name. Throws UsageError or HelpRequested.
Invocation parse_args(const std::vector<std::string>& args);

/// Parses and executes; returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace paveh::cli
