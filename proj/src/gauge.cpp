#include "paveh/gauge.hpp"

namespace paveh {

std::string_view to_string(SensorKind kind) noexcept {
  switch (kind) {
    case SensorKind::ASG: return "ASG";
    case SensorKind::CSG: return "CSG";
    case SensorKind::PC: return "PC";
    case SensorKind::TC: return "TC";
    case SensorKind::LASER: return "LASER";
    case SensorKind::LASER_PRETRAFFIC: return "LASER_PRETRAFFIC";
    case SensorKind::STATIONARY_ET: return "STATIONARY_ET";
    case SensorKind::STATIONARY_MT: return "STATIONARY_MT";
    case SensorKind::FWD: return "FWD";
  }
  return "?";
}

std::string_view cli_name(SensorKind kind) noexcept {
  switch (kind) {
    case SensorKind::ASG: return "asg";
    case SensorKind::CSG: return "csg";
    case SensorKind::PC: return "pc";
    case SensorKind::TC: return "tc";
    case SensorKind::LASER: return "laser";
    case SensorKind::LASER_PRETRAFFIC: return "laser-pre";
    case SensorKind::STATIONARY_ET: return "stationary-et";
    case SensorKind::STATIONARY_MT: return "stationary-mt";
    case SensorKind::FWD: return "fwd";
  }
  return "?";
}

std::optional<SensorKind> parse_sensor_kind(std::string_view name) {
  for (auto k : kAllSensorKinds)
    if (name == cli_name(k) || name == to_string(k)) return k;
  return std::nullopt;
}

std::string_view unit_for(SensorKind kind) noexcept {
  switch (kind) {
    case SensorKind::CSG: return "in";
    case SensorKind::PC: return "kPa";
    case SensorKind::TC: return "degF";
    case SensorKind::LASER:
    case SensorKind::LASER_PRETRAFFIC: return "mm";
    default: return "microstrain";
  }
}

}  // namespace paveh
