#include "paveh/etl.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>

namespace paveh::etl {

FormatError::FormatError(std::size_t line, const std::string& what)
    : std::runtime_error(fmt::format("line {}: {}", line, what)), line_(line) {}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  for (;;) {
    const auto pos = s.find(sep);
    out.push_back(s.substr(0, pos));
    if (pos == std::string_view::npos) return out;
    s.remove_prefix(pos + 1);
  }
}

std::optional<double> to_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v))
    return std::nullopt;
  return v;
}

std::optional<std::size_t> to_index(std::string_view s) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot open '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::optional<std::string> iso_date(int y, unsigned m, unsigned d) {
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{m}, day{d}};
  if (!ymd.ok()) return std::nullopt;
  return fmt::format("{:04}-{:02}-{:02}", y, m, d);
}

}  // namespace

// ---- formatting -----------------------------------------------------------

std::string format_number(double v) {
  if (!std::isfinite(v)) throw std::invalid_argument("cannot format a non-finite number");
  auto s = fmt::format("{:.9f}", v);
  while (s.back() == '0') s.pop_back();
  if (s.back() == '.') s.pop_back();
  if (s == "-0") s = "0";
  return s;
}

std::string format_optional(const std::optional<double>& v) {
  return v ? format_number(*v) : std::string();
}

std::string csv_field(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string csv_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += csv_field(fields[i]);
  }
  out += '\n';
  return out;
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  std::size_t line = 1, quote_line = 0;
  bool in_quotes = false, after_quote = false, any = false;

  auto end_record = [&] {
    record.push_back(std::move(field));
    field.clear();
    if (!(record.size() == 1 && record[0].empty() && !after_quote)) records.push_back(std::move(record));
    record.clear();
    any = after_quote = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
          after_quote = true;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"' && field.empty() && !after_quote) {
      in_quotes = true;
      quote_line = line;
      any = true;
    } else if (c == ',') {
      record.push_back(std::move(field));
      field.clear();
      after_quote = false;
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_record();
      ++line;
    } else {
      if (after_quote) throw FormatError(line, "text after closing quote");
      field += c;
      any = true;
    }
  }
  if (in_quotes) throw FormatError(quote_line, "unterminated quoted field");
  if (any || !field.empty() || !record.empty()) end_record();
  return records;
}

// ---- filenames ------------------------------------------------------------

FileMeta parse_filename(std::string_view name) {
  FileMeta meta;
  meta.filename = std::string(name);
  static const std::regex archive(
      R"(^(\d+) ([^_]+)_([^_]+)_([^_]+)_([^_]+)_(\d{1,2})-([A-Za-z]{3})-(\d{4})\.([A-Za-z0-9]+)$)");
  static const std::regex traffic(R"(^Traffic (\S+) (\S+) (\d{2})-(\d{2})-(\d{2})\.txt$)");
  static const char* months[] = {"jan", "feb", "mar", "apr", "may", "jun",
                                 "jul", "aug", "sep", "oct", "nov", "dec"};
  std::smatch m;
  const std::string s(name);
  if (std::regex_match(s, m, archive)) {
    std::string mon = m[7];
    std::transform(mon.begin(), mon.end(), mon.begin(), [](unsigned char c) { return std::tolower(c); });
    const auto it = std::find(std::begin(months), std::end(months), mon);
    if (it != std::end(months)) {
      const auto date = iso_date(std::stoi(m[8]), static_cast<unsigned>(it - std::begin(months) + 1),
                                 static_cast<unsigned>(std::stoi(m[6])));
      if (date) {
        meta.project_name = m[2];
        meta.test_section = m[3];
        meta.sensor_type = m[4];
        meta.gage_id = m[5];
        meta.survey_date = *date;
        return meta;
      }
    }
  } else if (std::regex_match(s, m, traffic)) {
    const int yy = std::stoi(m[5]);
    const auto date = iso_date(yy <= 68 ? 2000 + yy : 1900 + yy, static_cast<unsigned>(std::stoi(m[3])),
                               static_cast<unsigned>(std::stoi(m[4])));
    if (date) {
      meta.test_section = m[1];
      meta.instance = m[2];
      meta.survey_date = *date;
      return meta;
    }
  }
  meta.unparsed = true;
  return meta;
}

// ---- raw logs -------------------------------------------------------------

double laser_horizontal(std::size_t n) { return static_cast<double>(n) * 1384.0 / 8088.0; }

std::string format_time_of_day(double seconds) {
  constexpr long long kDayCs = 86'400 * 100;
  long long cs = std::llround(seconds * 100) % kDayCs;
  if (cs < 0) cs += kDayCs;
  return fmt::format("{:02}:{:02}:{:02}.{:02}", cs / 360'000, cs / 6'000 % 60, cs / 100 % 60, cs % 100);
}

double parse_time_of_day(std::string_view text) {
  const auto parts = split(trim(text), ':');
  if (parts.size() != 3) throw std::invalid_argument(fmt::format("bad time of day '{}'", text));
  const auto h = to_index(parts[0]), m = to_index(parts[1]);
  const auto s = to_double(parts[2]);
  if (!h || !m || !s || *h > 23 || *m > 59 || *s < 0 || *s >= 60)
    throw std::invalid_argument(fmt::format("bad time of day '{}'", text));
  return static_cast<double>(*h * 3600 + *m * 60) + *s;
}

RawLog parse_raw_log_text(std::string_view text, std::optional<SensorKind> kind) {
  RawLog log;
  std::map<std::string, std::size_t> header_line;
  std::vector<std::vector<double>> columns;
  std::size_t width = 0, line_no = 0, last_line = 0;

  struct Pending {
    std::size_t line;
    std::string_view text;
  };
  std::vector<Pending> data_lines;
  for (auto raw : split(text, '\n')) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty()) continue;
    last_line = line_no;
    if (line.front() == '#') {
      const auto body = trim(line.substr(1));
      const auto colon = body.find(':');
      if (colon == std::string_view::npos) continue;
      const std::string key(trim(body.substr(0, colon)));
      log.header[key] = std::string(trim(body.substr(colon + 1)));
      header_line[key] = line_no;
      continue;
    }
    data_lines.push_back({line_no, line});
  }
  const bool ends_cleanly = !text.empty() && text.back() == '\n';

  // Kind and unit.
  std::optional<SensorKind> declared;
  if (auto it = log.header.find("kind"); it != log.header.end()) {
    declared = parse_sensor_kind(it->second);
    if (!declared)
      throw FormatError(header_line["kind"], fmt::format("unknown sensor kind '{}'", it->second));
  }
  if (kind && declared && *kind != *declared)
    throw FormatError(header_line["kind"],
                      fmt::format("file declares {} but {} was requested", to_string(*declared),
                                  to_string(*kind)));
  if (!kind && !declared) throw FormatError(1, "sensor kind not declared");
  log.kind = kind ? *kind : *declared;
  const std::string unit(unit_for(log.kind));
  if (auto it = log.header.find("unit"); it != log.header.end() && it->second != unit)
    throw FormatError(header_line["unit"], fmt::format("unit '{}' does not match {} (expected '{}')",
                                                       it->second, to_string(log.kind), unit));

  if (data_lines.empty()) throw FormatError(last_line + 1, "no data rows");

  std::vector<double> t;
  for (std::size_t k = 0; k < data_lines.size(); ++k) {
    const auto& [ln, line] = data_lines[k];
    const bool final_row = k + 1 == data_lines.size();
    const auto fields = split(line, ',');
    std::vector<double> values;
    bool ok = true;
    for (auto f : fields) {
      auto v = to_double(f);
      if (!v) {
        ok = false;
        break;
      }
      values.push_back(*v);
    }
    if (ok && width == 0) {
      width = values.size();
      if (width < 2) throw FormatError(ln, "expected seconds and at least one value column");
      if (is_laser(log.kind) && width != 3)
        throw FormatError(ln, "laser rows are seconds,reading_mm,beam_location_mm");
      columns.assign(width - 1, {});
    }
    if (!ok || values.size() != width) {
      if (final_row && k > 0) {
        log.warnings.push_back(fmt::format("line {}: truncated final row dropped{}", ln,
                                           ends_cleanly ? "" : " (no trailing newline)"));
        break;
      }
      throw FormatError(ln, ok ? fmt::format("expected {} columns, found {}", width, values.size())
                               : "unparsable number");
    }
    if (!t.empty() && !(values[0] > t.back()))
      throw FormatError(ln, "seconds must be strictly increasing");
    t.push_back(values[0]);
    for (std::size_t c = 1; c < width; ++c) columns[c - 1].push_back(values[c]);
  }

  if (is_laser(log.kind)) {
    Channel ch;
    ch.series = dsp::Series{t, std::move(columns[0]), unit};
    log.beam_location_mm = std::move(columns[1]);
    log.channels.push_back(std::move(ch));
    if (auto it = log.header.find("start_time"); it != log.header.end()) {
      try {
        log.start_time_s = parse_time_of_day(it->second);
      } catch (const std::invalid_argument& e) {
        throw FormatError(header_line["start_time"], e.what());
      }
    }
    return log;
  }

  const auto n = columns.size();
  auto per_channel = [&](const char* key) {
    std::vector<std::string> out(n);
    auto it = log.header.find(key);
    if (it == log.header.end()) return out;
    const auto parts = split(it->second, ',');
    if (parts.size() != n)
      throw FormatError(header_line[key], fmt::format("'{}' lists {} entries for {} channels", key,
                                                      parts.size(), n));
    for (std::size_t i = 0; i < n; ++i) out[i] = std::string(trim(parts[i]));
    return out;
  };
  auto numeric = [&](const char* key, const std::vector<std::string>& raw) {
    std::vector<std::optional<double>> out(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (raw[i].empty()) continue;
      out[i] = to_double(raw[i]);
      if (!out[i]) throw FormatError(header_line[key], fmt::format("bad {} '{}'", key, raw[i]));
    }
    return out;
  };
  const auto gages = per_channel("gage");
  const auto placements = per_channel("placement");
  const auto coeffs = numeric("cal_coeff", per_channel("cal_coeff"));
  const auto rated = numeric("rated_output", per_channel("rated_output"));
  for (std::size_t i = 0; i < n; ++i) {
    if (rated[i] && !(*rated[i] > 0))
      throw FormatError(header_line["rated_output"], "rated output must be > 0");
    log.channels.push_back(
        Channel{dsp::Series{t, std::move(columns[i]), unit}, gages[i], placements[i], coeffs[i], rated[i]});
  }
  return log;
}

RawLog parse_raw_log(const std::filesystem::path& path, std::optional<SensorKind> kind) {
  return parse_raw_log_text(read_file(path), kind);
}

// ---- processing -----------------------------------------------------------

namespace {

std::string_view instance_for(SensorKind kind, dsp::PassLabel label) {
  switch (kind) {
    case SensorKind::STATIONARY_ET:
    case SensorKind::STATIONARY_MT: return "stationary";
    case SensorKind::FWD: return "fwd";
    default: return dsp::to_string(label);
  }
}

}  // namespace

ProcessResult process_log(const RawLog& log, std::string_view filename,
                          const ProcessOptions& options) {
  ProcessResult out;
  out.kind = log.kind;
  out.warnings = log.warnings;
  out.meta = parse_filename(filename);
  auto fill = [&](std::string& field, const char* key) {
    if (auto it = log.header.find(key); it != log.header.end() && field.empty()) field = it->second;
  };
  fill(out.meta.project_name, "project");
  fill(out.meta.test_section, "section");
  fill(out.meta.location, "location");
  fill(out.meta.description, "description");
  if (out.meta.sensor_type.empty()) out.meta.sensor_type = std::string(to_string(log.kind));
  if (out.meta.gage_id.empty() && log.channels.size() == 1)
    out.meta.gage_id = log.channels[0].gage_id;

  auto cfg = dsp::default_config(log.kind);
  if (options.window) cfg.window = *options.window;
  if (options.polyorder) cfg.polyorder = *options.polyorder;
  const std::string name(filename);

  if (is_laser(log.kind)) {
    const auto& ch = log.channels.at(0);
    const auto smoothed = dsp::smooth(ch.series, cfg);
    const double t0 = ch.series.t.front();
    for (std::size_t i = 0; i < smoothed.size(); ++i)
      out.laser_rows.push_back(
          {name, i + 1, laser_horizontal(i + 1), smoothed.y[i], log.beam_location_mm[i],
           log.start_time_s ? format_time_of_day(*log.start_time_s + (ch.series.t[i] - t0)) : ""});
    return out;
  }

  for (const auto& ch : log.channels) {
    const auto smoothed = dsp::smooth(ch.series, cfg);
    auto extrema = dsp::detect_extrema(smoothed, cfg);
    const bool stationary =
        log.kind == SensorKind::STATIONARY_ET || log.kind == SensorKind::STATIONARY_MT;
    if (stationary || log.kind == SensorKind::FWD) {
      for (auto& e : extrema) e.label = dsp::PassLabel::First;
    } else {
      extrema = dsp::select_passes(std::move(extrema), options.first_n, options.last_n);
    }
    const bool wants_minima = log.kind == SensorKind::CSG || log.kind == SensorKind::PC ||
                              log.kind == SensorKind::TC || log.kind == SensorKind::FWD;
    const bool wants_envelope = log.kind == SensorKind::ASG || stationary;

    std::vector<DataRow> rows;
    auto emit = [&](dsp::PassLabel label, std::string_view what, double t, double raw) {
      double value = raw;
      if (ch.cal_coeff) {
        if (ch.rated_output) {
          const auto c = dsp::calibrate(raw, {*ch.cal_coeff, *ch.rated_output});
          value = c.value;
          out.out_of_range += c.out_of_range;
        } else {
          value = raw * *ch.cal_coeff;
        }
      }
      rows.push_back({name, std::string(instance_for(log.kind, label)), ch.gage_id, ch.placement,
                      ch.cal_coeff, ch.rated_output, std::string(what), t, value, ch.series.unit});
    };
    for (const auto& e : extrema) {
      if (e.label == dsp::PassLabel::Unlabeled) continue;
      if (e.kind == dsp::ExtremumKind::Minima && !wants_minima) continue;
      emit(e.label, dsp::to_string(e.kind), e.t, e.value);
      if (e.kind == dsp::ExtremumKind::Maxima) ++out.peak_rows;
    }
    if (wants_envelope) {
      const auto env = dsp::extract_envelope(smoothed, extrema);
      for (const auto& p : env.points) emit(p.label, "envelope", p.t, p.value);
      out.envelope_rows += env.points.size();
      out.envelope_truncated += env.truncated;
    }
    std::stable_sort(rows.begin(), rows.end(), [](const DataRow& a, const DataRow& b) {
      return a.seconds_elapsed < b.seconds_elapsed;
    });
    out.rows.insert(out.rows.end(), rows.begin(), rows.end());
  }
  if (out.envelope_truncated)
    out.warnings.push_back(fmt::format("{} envelope points fell past the end of the recording",
                                       out.envelope_truncated));
  if (out.out_of_range)
    out.warnings.push_back(fmt::format("{} values exceed the rated output", out.out_of_range));
  return out;
}

ProcessResult process_file(const std::filesystem::path& path, std::optional<SensorKind> kind,
                           const ProcessOptions& options) {
  return process_log(parse_raw_log(path, kind), path.filename().string(), options);
}

// ---- normalization --------------------------------------------------------

std::vector<FileInfoRow> build_file_info(const std::vector<FileMeta>& metas) {
  std::vector<FileInfoRow> out;
  std::unordered_map<std::string, std::size_t> seen;
  for (const auto& m : metas)
    if (seen.emplace(m.filename, out.size()).second) out.push_back({out.size() + 1, m});
  return out;
}

std::string file_info_csv(const std::vector<FileInfoRow>& info) {
  std::string out = std::string(kFileInfoHeader) + "\n";
  for (const auto& r : info) {
    const auto& m = r.meta;
    out += csv_row({std::to_string(r.id), m.filename, m.project_name, m.test_section, m.sensor_type,
                    m.location, m.gage_id, m.survey_date, m.description});
  }
  return out;
}

namespace {

std::vector<std::vector<std::string>> table(std::string_view text, std::string_view header,
                                            const char* what) {
  auto records = parse_csv(text);
  if (records.empty()) throw FormatError(1, fmt::format("{} is empty", what));
  if (csv_row(records.front()) != std::string(header) + "\n")
    throw FormatError(1, fmt::format("{} header mismatch", what));
  const auto width = records.front().size();
  for (std::size_t i = 1; i < records.size(); ++i)
    if (records[i].size() != width)
      throw FormatError(i + 1, fmt::format("{} row has {} fields, expected {}", what,
                                           records[i].size(), width));
  records.erase(records.begin());
  return records;
}

std::size_t parse_id(const std::string& s, std::size_t row) {
  const auto id = to_index(s);
  if (!id || *id == 0) throw FormatError(row, fmt::format("bad id '{}'", s));
  return *id;
}

double parse_num(const std::string& s, std::size_t row) {
  const auto v = to_double(s);
  if (!v) throw FormatError(row, fmt::format("bad number '{}'", s));
  return *v;
}

std::optional<double> parse_opt(const std::string& s, std::size_t row) {
  if (s.empty()) return std::nullopt;
  return parse_num(s, row);
}

std::unordered_map<std::size_t, std::string> id_to_filename(std::string_view file_info) {
  std::unordered_map<std::size_t, std::string> out;
  for (const auto& r : parse_file_info_csv(file_info)) out.emplace(r.id, r.meta.filename);
  return out;
}

std::unordered_map<std::string, std::size_t> filename_to_id(const std::vector<FileInfoRow>& info) {
  std::unordered_map<std::string, std::size_t> out;
  for (const auto& r : info)
    if (!out.emplace(r.meta.filename, r.id).second)
      throw IntegrityError(fmt::format("filename '{}' appears twice in file info", r.meta.filename));
  return out;
}

}  // namespace

std::vector<FileInfoRow> parse_file_info_csv(std::string_view text) {
  std::vector<FileInfoRow> out;
  std::unordered_map<std::size_t, std::size_t> ids;
  std::size_t row = 1;
  for (auto& rec : table(text, kFileInfoHeader, "file info")) {
    ++row;
    FileInfoRow r;
    r.id = parse_id(rec[0], row);
    if (!ids.emplace(r.id, row).second)
      throw IntegrityError(fmt::format("file info id {} appears twice", r.id));
    r.meta = parse_filename(rec[1]);
    r.meta.project_name = rec[2];
    r.meta.test_section = rec[3];
    r.meta.sensor_type = rec[4];
    r.meta.location = rec[5];
    r.meta.gage_id = rec[6];
    r.meta.survey_date = rec[7];
    r.meta.description = rec[8];
    out.push_back(std::move(r));
  }
  return out;
}

NormalizedCsv emit_normalized(const std::vector<DataRow>& rows, const std::vector<FileInfoRow>& info) {
  const auto ids = filename_to_id(info);
  NormalizedCsv out{std::string(kDataHeader) + "\n", file_info_csv(info)};
  for (const auto& r : rows) {
    const auto it = ids.find(r.filename);
    if (it == ids.end())
      throw DanglingReference(fmt::format("row cites unknown file '{}'", r.filename));
    out.data += csv_row({std::to_string(it->second), r.captured_instance, r.gage_id, r.placement,
                         format_optional(r.cal_coeff), format_optional(r.rated_output), r.extrema,
                         format_number(r.seconds_elapsed), format_number(r.processed_datapoint),
                         r.unit});
  }
  return out;
}

std::string emit_laser_csv(const std::vector<LaserRow>& rows, const std::vector<FileInfoRow>& info) {
  const auto ids = filename_to_id(info);
  std::string out = std::string(kLaserHeader) + "\n";
  for (const auto& r : rows) {
    const auto it = ids.find(r.filename);
    if (it == ids.end())
      throw DanglingReference(fmt::format("row cites unknown file '{}'", r.filename));
    out += csv_row({std::to_string(it->second), std::to_string(r.sample_number),
                    format_number(r.horiz_mm), format_number(r.laser_reading_mm),
                    format_number(r.beam_location_mm), r.sampled_time});
  }
  return out;
}

std::vector<DataRow> join_by_filename_id(std::string_view data_csv, std::string_view file_info) {
  const auto names = id_to_filename(file_info);
  std::vector<DataRow> out;
  std::size_t row = 1;
  for (auto& rec : table(data_csv, kDataHeader, "data table")) {
    ++row;
    const auto id = parse_id(rec[0], row);
    const auto it = names.find(id);
    if (it == names.end())
      throw DanglingReference(fmt::format("data row {} cites missing filename_id {}", row, id));
    out.push_back({it->second, rec[1], rec[2], rec[3], parse_opt(rec[4], row), parse_opt(rec[5], row),
                   rec[6], parse_num(rec[7], row), parse_num(rec[8], row), rec[9]});
  }
  return out;
}

std::vector<LaserRow> join_laser_by_filename_id(std::string_view laser_csv, std::string_view file_info) {
  const auto names = id_to_filename(file_info);
  std::vector<LaserRow> out;
  std::size_t row = 1;
  for (auto& rec : table(laser_csv, kLaserHeader, "laser table")) {
    ++row;
    const auto id = parse_id(rec[0], row);
    const auto it = names.find(id);
    if (it == names.end())
      throw DanglingReference(fmt::format("laser row {} cites missing filename_id {}", row, id));
    out.push_back({it->second, parse_id(rec[1], row), parse_num(rec[2], row), parse_num(rec[3], row),
                   parse_num(rec[4], row), rec[5]});
  }
  return out;
}

std::string joined_csv(const std::vector<DataRow>& rows) {
  std::string out = std::string(kJoinedDataHeader) + "\n";
  for (const auto& r : rows)
    out += csv_row({r.filename, r.captured_instance, r.gage_id, r.placement,
                    format_optional(r.cal_coeff), format_optional(r.rated_output), r.extrema,
                    format_number(r.seconds_elapsed), format_number(r.processed_datapoint), r.unit});
  return out;
}

std::string joined_laser_csv(const std::vector<LaserRow>& rows) {
  std::string out = std::string(kJoinedLaserHeader) + "\n";
  for (const auto& r : rows)
    out += csv_row({r.filename, std::to_string(r.sample_number), format_number(r.horiz_mm),
                    format_number(r.laser_reading_mm), format_number(r.beam_location_mm),
                    r.sampled_time});
  return out;
}

}  // namespace paveh::etl
