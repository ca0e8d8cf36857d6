// Roadside DAQ simulator. Each sensor is sampled internally at an integer
// rate and published once per simulated second as the mean of the samples
// in [t, t+1), stamped with the closing boundary t+1.
#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "paveh/wire.hpp"

namespace paveh::daqsim {

class ScenarioError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class SensorKind { EPC, SCG, MOISTURE, TEMPERATURE };

SensorKind parse_sensor_kind(std::string_view name);  // throws ScenarioError
std::string_view to_string(SensorKind kind) noexcept;

struct SensorSpec {
  std::string id;
  SensorKind kind = SensorKind::EPC;
  std::string unit;
  int rate_hz = 100;
  double sigma = 0.0;

  double baseline = 0.0;  // EPC/SCG resting level, MOISTURE starting level, TEMPERATURE mean

  // EPC/SCG load passes: raised-cosine pulses of `pulse_width_s`, one per
  // `period_s`, peaking at `phase_s` within each period.
  double amplitude = 0.0;
  double period_s = 10.0;
  double pulse_width_s = 1.0;
  double phase_s = 5.0;

  double diurnal_amplitude = 0.0;  // TEMPERATURE, 24 h sinusoid
  double drift_per_hour = 0.0;     // MOISTURE

  void validate() const;  // throws ScenarioError
};

struct Scenario {
  std::string site = "1";
  std::string daq = "1";
  std::uint64_t seed = 1;
  std::int64_t start_us = 0;  // simulated time of second 0; 0 = caller decides
  std::int64_t duration_s = 60;
  std::vector<SensorSpec> sensors;

  void validate() const;
};

Scenario scenario_from_json(std::string_view text);
Scenario load_scenario(const std::filesystem::path& path);
std::string scenario_to_json(const Scenario& scenario);

/// Noise-free signal at simulated second `t` >= 0.
double clean_value(const SensorSpec& spec, double t);

/// clean_value plus N(0, sigma) drawn from `rng`.
double synth_value(const SensorSpec& spec, double t, std::mt19937_64& rng);

/// Subject for `site/<site>/daq/<daq>/sensor/<id>`.
wire::Subject sensor_subject(const Scenario& scenario, const SensorSpec& spec);
std::string sensor_topic(const Scenario& scenario, const SensorSpec& spec);

struct Publication {
  std::size_t sensor = 0;  // index into Scenario::sensors
  wire::Subject subject;
  wire::SamplePayload payload;
  bool delivered = false;
};

/// Returns false when the message could not be handed to the transport.
using PublishFn = std::function<bool(const wire::Subject&, const wire::SamplePayload&)>;

/// Override for the internal signal, used to inject known sample streams.
using SignalFn = std::function<double(const SensorSpec&, double t)>;

class Daq {
public:
  explicit Daq(Scenario scenario, SignalFn signal = {});

  /// Averages simulated second `second` for every sensor and publishes it.
  /// Must be called with consecutive seconds starting at 0. A failed publish
  /// keeps the sensor's seq for the next tick.
  std::vector<Publication> tick(std::int64_t second, const PublishFn& publish);

  const Scenario& scenario() const noexcept { return scenario_; }
  std::int64_t next_second() const noexcept { return next_second_; }

private:
  struct SensorState {
    std::mt19937_64 rng;
    std::uint64_t next_seq = 1;
    wire::Subject subject;
  };

  Scenario scenario_;
  SignalFn signal_;
  std::vector<SensorState> state_;
  std::int64_t next_second_ = 0;
};

std::mt19937_64 sensor_rng(std::uint64_t seed, std::size_t sensor_index);

struct RunOptions {
  double speedup = 1.0;  // simulated seconds per wall second; 0 = unpaced
  std::optional<std::int64_t> max_seconds;
};

struct RunStats {
  std::uint64_t published = 0;
  std::uint64_t failed = 0;
  std::int64_t seconds = 0;
};

/// Paces `daq` against the wall clock until the scenario duration elapses or
/// `stop` returns true.
RunStats run(Daq& daq, const PublishFn& publish, const RunOptions& options,
             const std::function<bool()>& stop = {});

}  // namespace paveh::daqsim
