// Static-path sensor families and their engineering units.
#pragma once

#include <optional>
#include <string_view>

namespace paveh {

enum class SensorKind {
  ASG,
  CSG,
  PC,
  TC,
  LASER,
  LASER_PRETRAFFIC,
  STATIONARY_ET,
  STATIONARY_MT,
  FWD,
};

inline constexpr SensorKind kAllSensorKinds[] = {
    SensorKind::ASG,   SensorKind::CSG,           SensorKind::PC,
    SensorKind::TC,    SensorKind::LASER,         SensorKind::LASER_PRETRAFFIC,
    SensorKind::STATIONARY_ET, SensorKind::STATIONARY_MT, SensorKind::FWD};

/// Command-line spelling: asg, csg, pc, tc, laser, laser-pre, stationary-et,
/// stationary-mt, fwd. Upper-case enum names are accepted too.
std::optional<SensorKind> parse_sensor_kind(std::string_view name);
std::string_view to_string(SensorKind kind) noexcept;      // enum name, e.g. LASER_PRETRAFFIC
std::string_view cli_name(SensorKind kind) noexcept;       // e.g. laser-pre
std::string_view unit_for(SensorKind kind) noexcept;

constexpr bool is_laser(SensorKind k) noexcept {
  return k == SensorKind::LASER || k == SensorKind::LASER_PRETRAFFIC;
}

}  // namespace paveh
