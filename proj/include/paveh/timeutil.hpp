#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace paveh {

inline constexpr std::int64_t kMicrosPerSecond = 1'000'000;

class TimeFormatError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Wall clock, microseconds since the Unix epoch.
std::int64_t now_us();

/// `YYYY-MM-DDTHH:MM:SS.ffffffZ`.
std::string format_rfc3339(std::int64_t us);

/// Accepts `YYYY-MM-DDTHH:MM:SS[.fraction](Z|+HH:MM|-HH:MM)`; fractions beyond
/// microseconds are truncated.
std::int64_t parse_rfc3339(std::string_view text);

/// `<integer><unit>` with unit one of us, ms, s, m, h, d.
std::int64_t parse_duration_us(std::string_view text);

/// Floor division for signed values.
constexpr std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  const std::int64_t q = a / b;
  return (a % b != 0 && ((a < 0) != (b < 0))) ? q - 1 : q;
}

}  // namespace paveh
