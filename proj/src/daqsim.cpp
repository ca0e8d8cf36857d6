#include "paveh/daqsim.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "json.hpp"
#include "paveh/timeutil.hpp"

namespace paveh::daqsim {

namespace {

using nlohmann::json;

std::string_view default_unit(SensorKind kind) {
  switch (kind) {
    case SensorKind::EPC: return "kPa";
    case SensorKind::SCG: return "mm";
    case SensorKind::MOISTURE: return "m3/m3";
    case SensorKind::TEMPERATURE: return "degF";
  }
  return "";
}

template <typename T>
void read_opt(const json& obj, const char* key, T& out) {
  if (auto it = obj.find(key); it != obj.end()) {
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw ScenarioError(fmt::format("field '{}' has the wrong type", key));
    }
  }
}

SensorSpec sensor_from_json(const json& obj) {
  if (!obj.is_object()) throw ScenarioError("sensor entry must be an object");
  static const std::set<std::string> known{
      "id", "kind", "unit", "rate_hz", "sigma", "baseline", "amplitude", "period_s",
      "pulse_width_s", "phase_s", "diurnal_amplitude", "drift_per_hour"};
  for (const auto& [key, _] : obj.items())
    if (!known.contains(key)) throw ScenarioError(fmt::format("unknown sensor field '{}'", key));

  SensorSpec spec;
  std::string kind;
  read_opt(obj, "id", spec.id);
  read_opt(obj, "kind", kind);
  if (kind.empty()) throw ScenarioError(fmt::format("sensor '{}' has no kind", spec.id));
  spec.kind = parse_sensor_kind(kind);
  spec.unit = default_unit(spec.kind);
  read_opt(obj, "unit", spec.unit);
  read_opt(obj, "rate_hz", spec.rate_hz);
  read_opt(obj, "sigma", spec.sigma);
  read_opt(obj, "baseline", spec.baseline);
  read_opt(obj, "amplitude", spec.amplitude);
  read_opt(obj, "period_s", spec.period_s);
  read_opt(obj, "pulse_width_s", spec.pulse_width_s);
  read_opt(obj, "phase_s", spec.phase_s);
  read_opt(obj, "diurnal_amplitude", spec.diurnal_amplitude);
  read_opt(obj, "drift_per_hour", spec.drift_per_hour);
  spec.validate();
  return spec;
}

}  // namespace

SensorKind parse_sensor_kind(std::string_view name) {
  if (name == "EPC") return SensorKind::EPC;
  if (name == "SCG") return SensorKind::SCG;
  if (name == "MOISTURE") return SensorKind::MOISTURE;
  if (name == "TEMPERATURE") return SensorKind::TEMPERATURE;
  throw ScenarioError(fmt::format("unknown sensor kind '{}'", name));
}

std::string_view to_string(SensorKind kind) noexcept {
  switch (kind) {
    case SensorKind::EPC: return "EPC";
    case SensorKind::SCG: return "SCG";
    case SensorKind::MOISTURE: return "MOISTURE";
    case SensorKind::TEMPERATURE: return "TEMPERATURE";
  }
  return "?";
}

void SensorSpec::validate() const {
  if (!wire::is_literal_token(id))
    throw ScenarioError(fmt::format("sensor id '{}' is not a legal subject token", id));
  if (rate_hz < 1) throw ScenarioError(fmt::format("sensor '{}': rate_hz must be >= 1", id));
  if (!(sigma >= 0) || !std::isfinite(sigma))
    throw ScenarioError(fmt::format("sensor '{}': sigma must be finite and >= 0", id));
  if (kind == SensorKind::EPC || kind == SensorKind::SCG) {
    if (!(period_s > 0) || !(pulse_width_s > 0) || pulse_width_s > period_s)
      throw ScenarioError(
          fmt::format("sensor '{}': need 0 < pulse_width_s <= period_s", id));
  }
  for (double x : {baseline, amplitude, period_s, pulse_width_s, phase_s, diurnal_amplitude,
                   drift_per_hour})
    if (!std::isfinite(x)) throw ScenarioError(fmt::format("sensor '{}': non-finite parameter", id));
}

void Scenario::validate() const {
  if (!wire::is_literal_token(site))
    throw ScenarioError(fmt::format("site '{}' is not a legal subject token", site));
  if (!wire::is_literal_token(daq))
    throw ScenarioError(fmt::format("daq '{}' is not a legal subject token", daq));
  if (duration_s <= 0) throw ScenarioError("duration_s must be > 0");
  if (start_us < 0) throw ScenarioError("start must not precede the epoch");
  std::set<std::string> ids;
  for (const auto& s : sensors) {
    s.validate();
    if (!ids.insert(s.id).second)
      throw ScenarioError(fmt::format("duplicate sensor id '{}'", s.id));
  }
}

Scenario scenario_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ScenarioError(fmt::format("scenario is not valid JSON: {}", e.what()));
  }
  if (!doc.is_object()) throw ScenarioError("scenario must be a JSON object");
  static const std::set<std::string> known{"site", "daq", "seed", "start", "duration_s", "sensors"};
  for (const auto& [key, _] : doc.items())
    if (!known.contains(key)) throw ScenarioError(fmt::format("unknown scenario field '{}'", key));

  Scenario sc;
  read_opt(doc, "site", sc.site);
  read_opt(doc, "daq", sc.daq);
  read_opt(doc, "seed", sc.seed);
  read_opt(doc, "duration_s", sc.duration_s);
  if (auto it = doc.find("start"); it != doc.end()) {
    if (it->is_string()) {
      try {
        sc.start_us = parse_rfc3339(it->get<std::string>());
      } catch (const TimeFormatError& e) {
        throw ScenarioError(e.what());
      }
    } else if (it->is_number_integer()) {
      sc.start_us = it->get<std::int64_t>();
    } else {
      throw ScenarioError("start must be an RFC 3339 string or integer microseconds");
    }
  }
  if (auto it = doc.find("sensors"); it != doc.end()) {
    if (!it->is_array()) throw ScenarioError("sensors must be an array");
    for (const auto& s : *it) sc.sensors.push_back(sensor_from_json(s));
  }
  sc.validate();
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError(fmt::format("cannot open scenario '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return scenario_from_json(ss.str());
}

std::string scenario_to_json(const Scenario& sc) {
  json doc{{"site", sc.site},
           {"daq", sc.daq},
           {"seed", sc.seed},
           {"duration_s", sc.duration_s},
           {"sensors", json::array()}};
  if (sc.start_us != 0) doc["start"] = format_rfc3339(sc.start_us);
  for (const auto& s : sc.sensors)
    doc["sensors"].push_back({{"id", s.id},
                              {"kind", to_string(s.kind)},
                              {"unit", s.unit},
                              {"rate_hz", s.rate_hz},
                              {"sigma", s.sigma},
                              {"baseline", s.baseline},
                              {"amplitude", s.amplitude},
                              {"period_s", s.period_s},
                              {"pulse_width_s", s.pulse_width_s},
                              {"phase_s", s.phase_s},
                              {"diurnal_amplitude", s.diurnal_amplitude},
                              {"drift_per_hour", s.drift_per_hour}});
  return doc.dump(2);
}

double clean_value(const SensorSpec& spec, double t) {
  switch (spec.kind) {
    case SensorKind::EPC:
    case SensorKind::SCG: {
      // Offset from the nearest peak, in [-period/2, period/2).
      const double half = spec.period_s / 2;
      double tau = std::fmod(t - spec.phase_s + half, spec.period_s);
      if (tau < 0) tau += spec.period_s;
      tau -= half;
      if (std::abs(tau) >= spec.pulse_width_s / 2) return spec.baseline;
      return spec.baseline +
             spec.amplitude * 0.5 * (1 + std::cos(2 * std::numbers::pi * tau / spec.pulse_width_s));
    }
    case SensorKind::TEMPERATURE:
      return spec.baseline +
             spec.diurnal_amplitude * std::sin(2 * std::numbers::pi * t / 86400.0);
    case SensorKind::MOISTURE:
      return spec.baseline + spec.drift_per_hour * t / 3600.0;
  }
  return spec.baseline;
}

double synth_value(const SensorSpec& spec, double t, std::mt19937_64& rng) {
  const double clean = clean_value(spec, t);
  if (spec.sigma == 0) return clean;
  return clean + std::normal_distribution<double>(0.0, spec.sigma)(rng);
}

wire::Subject sensor_subject(const Scenario& sc, const SensorSpec& spec) {
  return wire::Subject::from_tokens({"site", sc.site, "daq", sc.daq, "sensor", spec.id});
}

std::string sensor_topic(const Scenario& sc, const SensorSpec& spec) {
  return wire::subject_to_mqtt_topic(sensor_subject(sc, spec));
}

std::mt19937_64 sensor_rng(std::uint64_t seed, std::size_t sensor_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(sensor_index),
                    static_cast<std::uint32_t>(sensor_index >> 32)};
  return std::mt19937_64(seq);
}

Daq::Daq(Scenario scenario, SignalFn signal)
    : scenario_(std::move(scenario)), signal_(std::move(signal)) {
  scenario_.validate();
  for (std::size_t i = 0; i < scenario_.sensors.size(); ++i)
    state_.push_back({sensor_rng(scenario_.seed, i), 1,
                      sensor_subject(scenario_, scenario_.sensors[i])});
}

std::vector<Publication> Daq::tick(std::int64_t second, const PublishFn& publish) {
  if (second != next_second_)
    throw std::logic_error(fmt::format("tick {} out of order, expected {}", second, next_second_));
  ++next_second_;

  std::vector<Publication> out;
  out.reserve(state_.size());
  for (std::size_t i = 0; i < state_.size(); ++i) {
    const auto& spec = scenario_.sensors[i];
    auto& st = state_[i];
    double sum = 0;
    for (int j = 0; j < spec.rate_hz; ++j) {
      const double t = static_cast<double>(second) + static_cast<double>(j) / spec.rate_hz;
      sum += signal_ ? signal_(spec, t) : synth_value(spec, t, st.rng);
    }
    Publication pub{i, st.subject,
                    wire::SamplePayload{scenario_.start_us + (second + 1) * kMicrosPerSecond,
                                        sum / spec.rate_hz, st.next_seq, spec.unit},
                    false};
    pub.delivered = publish ? publish(pub.subject, pub.payload) : true;
    if (pub.delivered) ++st.next_seq;
    out.push_back(std::move(pub));
  }
  return out;
}

RunStats run(Daq& daq, const PublishFn& publish, const RunOptions& options,
             const std::function<bool()>& stop) {
  using clock = std::chrono::steady_clock;
  RunStats stats;
  const auto total = std::min(daq.scenario().duration_s,
                              options.max_seconds.value_or(daq.scenario().duration_s));
  const auto wall_start = clock::now();
  for (std::int64_t k = daq.next_second(); k < total; ++k) {
    if (options.speedup > 0) {
      // Second k is complete at simulated k+1.
      const auto due = wall_start + std::chrono::duration_cast<clock::duration>(
                                        std::chrono::duration<double>((k + 1) / options.speedup));
      while (clock::now() < due) {
        if (stop && stop()) return stats;
        std::this_thread::sleep_until(std::min(due, clock::now() + std::chrono::milliseconds(50)));
      }
    }
    if (stop && stop()) return stats;
    for (const auto& p : daq.tick(k, publish)) {
      if (p.delivered)
        ++stats.published;
      else
        ++stats.failed;
    }
    ++stats.seconds;
  }
  return stats;
}

}  // namespace paveh::daqsim
