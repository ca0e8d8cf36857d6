#include "paveh/timeutil.hpp"

#include <charconv>
#include <chrono>

#include <fmt/format.h>

namespace paveh {

namespace {

using namespace std::chrono;

int digits(std::string_view text, std::size_t pos, std::size_t count) {
  if (pos + count > text.size())
    throw TimeFormatError(fmt::format("truncated timestamp '{}'", text));
  int value = 0;
  for (std::size_t i = pos; i < pos + count; ++i) {
    const char c = text[i];
    if (c < '0' || c > '9')
      throw TimeFormatError(fmt::format("bad digit in timestamp '{}'", text));
    value = value * 10 + (c - '0');
  }
  return value;
}

void expect(std::string_view text, std::size_t pos, char c) {
  if (pos >= text.size() || (text[pos] != c && !(c == 'T' && text[pos] == 't')))
    throw TimeFormatError(fmt::format("expected '{}' at offset {} in '{}'", c, pos, text));
}

}  // namespace

std::int64_t now_us() {
  return duration_cast<microseconds>(system_clock::now().time_since_epoch()).count();
}

std::string format_rfc3339(std::int64_t us) {
  const auto tp = sys_time<microseconds>(microseconds(us));
  const auto day = floor<days>(tp);
  const year_month_day ymd(day);
  const hh_mm_ss hms(tp - day);
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}.{:06}Z",
                     static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                     static_cast<unsigned>(ymd.day()), hms.hours().count(),
                     hms.minutes().count(), hms.seconds().count(),
                     hms.subseconds().count());
}

std::int64_t parse_rfc3339(std::string_view text) {
  const int y = digits(text, 0, 4);
  expect(text, 4, '-');
  const int mo = digits(text, 5, 2);
  expect(text, 7, '-');
  const int d = digits(text, 8, 2);
  expect(text, 10, 'T');
  const int h = digits(text, 11, 2);
  expect(text, 13, ':');
  const int mi = digits(text, 14, 2);
  expect(text, 16, ':');
  const int s = digits(text, 17, 2);
  std::size_t pos = 19;

  std::int64_t frac_us = 0;
  if (pos < text.size() && text[pos] == '.') {
    ++pos;
    std::size_t n = 0;
    while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
      if (n < 6) frac_us = frac_us * 10 + (text[pos] - '0');
      ++n;
      ++pos;
    }
    if (n == 0) throw TimeFormatError(fmt::format("empty fraction in '{}'", text));
    for (; n < 6; ++n) frac_us *= 10;
  }

  std::int64_t offset_s = 0;
  if (pos < text.size() && (text[pos] == 'Z' || text[pos] == 'z')) {
    ++pos;
  } else if (pos < text.size() && (text[pos] == '+' || text[pos] == '-')) {
    const int sign = text[pos] == '+' ? 1 : -1;
    const int oh = digits(text, pos + 1, 2);
    expect(text, pos + 3, ':');
    const int om = digits(text, pos + 4, 2);
    offset_s = sign * (oh * 3600 + om * 60);
    pos += 6;
  } else {
    throw TimeFormatError(fmt::format("missing UTC offset in '{}'", text));
  }
  if (pos != text.size())
    throw TimeFormatError(fmt::format("trailing characters in '{}'", text));

  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                           day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 60)
    throw TimeFormatError(fmt::format("invalid date/time '{}'", text));
  const auto secs = sys_days(ymd).time_since_epoch() + hours(h) + minutes(mi) +
                    seconds(s) - seconds(offset_s);
  return duration_cast<microseconds>(secs).count() + frac_us;
}

std::int64_t parse_duration_us(std::string_view text) {
  std::int64_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr == text.data())
    throw TimeFormatError(fmt::format("bad duration '{}'", text));
  const std::string_view unit(ptr, text.data() + text.size() - ptr);
  std::int64_t scale = 0;
  if (unit == "us")
    scale = 1;
  else if (unit == "ms")
    scale = 1'000;
  else if (unit == "s")
    scale = kMicrosPerSecond;
  else if (unit == "m")
    scale = 60 * kMicrosPerSecond;
  else if (unit == "h")
    scale = 3600 * kMicrosPerSecond;
  else if (unit == "d")
    scale = 86400 * kMicrosPerSecond;
  else
    throw TimeFormatError(fmt::format("bad duration unit in '{}'", text));
  if (value <= 0) throw TimeFormatError(fmt::format("duration must be positive: '{}'", text));
  return value * scale;
}

}  // namespace paveh
