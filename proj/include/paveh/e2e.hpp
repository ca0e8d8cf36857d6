// In-process live pipeline: broker, connector and store wired together and
// driven either by the DAQ simulator or by a fixed-rate replay.
#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "paveh/daqsim.hpp"
#include "paveh/net.hpp"

namespace paveh::e2e {

struct PipelineConfig {
  net::Endpoint broker{"127.0.0.1", 0};  // port 0 picks a free port
  std::filesystem::path store_root;
  daqsim::Scenario scenario;
  std::optional<std::int64_t> duration_s;  // overrides scenario.duration_s
  double speedup = 1.0;
  std::optional<net::Endpoint> metrics;
  std::chrono::milliseconds drain_timeout{30'000};

  void validate() const;  // throws std::invalid_argument
};

/// Fixed aggregate rate spread round-robin over `sensors` subjects; the
/// simulated clock is compressed as far as the pipeline allows.
struct ReplayConfig {
  std::filesystem::path store_root;
  double rate_per_s = 23.15;
  std::int64_t seconds = 86'400;
  std::size_t sensors = 24;
  std::size_t max_in_flight = 4'000;
  std::int64_t start_us = 1'600'000'000'000'000;
  std::uint64_t seed = 1;
  std::chrono::milliseconds drain_timeout{60'000};

  void validate() const;
};

/// Messages due in second k so that the first k seconds carry
/// floor(rate * k) messages in total.
std::uint64_t replay_count(double rate_per_s, std::int64_t k);

struct E2EReport {
  std::uint64_t published = 0;
  std::uint64_t publish_failures = 0;
  std::uint64_t received = 0;
  std::uint64_t accepted = 0;
  std::uint64_t rejected = 0;
  std::uint64_t stored = 0;
  std::uint64_t seq_gaps = 0;
  std::uint64_t duplicate_seq = 0;
  std::uint64_t latency_samples = 0;
  std::int64_t latency_p50_us = 0;  // wall time, publish call to store ack
  std::int64_t latency_p99_us = 0;
  std::int64_t latency_max_us = 0;
  std::int64_t simulated_seconds = 0;
  double wall_seconds = 0.0;
  bool drained = false;
  std::vector<std::string> errors;

  /// stored == published - rejected and received == accepted + rejected.
  bool conserved() const;
};

std::string to_json(const E2EReport& report);
std::string to_text(const E2EReport& report);

/// Nearest-rank quantile of unsorted values; 0 for an empty input.
std::int64_t quantile(std::vector<std::int64_t> values, double q);

E2EReport run_e2e(const PipelineConfig& config, const std::function<bool()>& stop = {});
E2EReport run_replay(const ReplayConfig& config, const std::function<bool()>& stop = {});

/// Three EPC sensors at 1 Hz publication, used when no scenario is given.
daqsim::Scenario default_scenario();

}  // namespace paveh::e2e
