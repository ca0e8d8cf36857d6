// Static-path ETL: raw log parsing, per-kind feature capture, and the
// FILE_INFO normalization with its lossless join.
//
// Canonical raw log (UTF-8 text):
//
//   # kind: ASG
//   # unit: microstrain
//   # gage: 7,8                  one entry per value column
//   # placement: 36,36
//   # cal_coeff: 0.849,0.851     optional
//   # rated_output: 5890,5890    optional
//   # start_time: 10:57:16.47    laser only, time of day of the first row
//   seconds,value[,value...]     laser: seconds,reading_mm,beam_location_mm
//
// Other `# key: value` lines (project, section, location, description) are
// carried into the file metadata. A final row cut short is dropped with a
// warning; malformed rows elsewhere are errors.
#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "paveh/dsp.hpp"
#include "paveh/gauge.hpp"

namespace paveh::etl {

class FormatError : public std::runtime_error {
public:
  FormatError(std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

class DanglingReference : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class IntegrityError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::string_view kDataHeader =
    "filename_id,captured_instance,gage_id,placement,cal_coeff,rated_output,extrema,"
    "seconds_elapsed,processed_datapoint,unit";
inline constexpr std::string_view kFileInfoHeader =
    "id,filename,project_name,test_section,sensor_type,location,gage_id,survey_date,description";
inline constexpr std::string_view kLaserHeader =
    "filename_id,sample_number,horiz_mm,laser_reading_mm,beam_location_mm,sampled_time";
inline constexpr std::string_view kJoinedDataHeader =
    "filename,captured_instance,gage_id,placement,cal_coeff,rated_output,extrema,"
    "seconds_elapsed,processed_datapoint,unit";
inline constexpr std::string_view kJoinedLaserHeader =
    "filename,sample_number,horiz_mm,laser_reading_mm,beam_location_mm,sampled_time";

// ---- formatting -----------------------------------------------------------

/// Fixed 9 fractional digits with trailing zeros (and a bare point) removed.
std::string format_number(double v);
std::string format_optional(const std::optional<double>& v);

/// RFC 4180: quoted only when the field holds a comma, quote or line break.
std::string csv_field(std::string_view field);
std::string csv_row(const std::vector<std::string>& fields);

/// Parses RFC 4180 text into records. Throws FormatError on an unterminated
/// quote.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

// ---- filenames ------------------------------------------------------------

struct FileMeta {
  std::string filename;
  std::string project_name;
  std::string test_section;
  std::string sensor_type;
  std::string location;
  std::string gage_id;
  std::string survey_date;  // YYYY-MM-DD or empty
  std::string description;
  std::string instance;  // traffic grammar, e.g. F20
  bool unparsed = false;

  friend bool operator==(const FileMeta&, const FileMeta&) = default;
};

/// Archive grammar `<n> <project>_<section>_<type>_<gage>_<dd-Mon-yyyy>.<ext>`
/// or traffic grammar `Traffic <section> <instance> <mm-dd-yy>.txt`.
FileMeta parse_filename(std::string_view name);

// ---- raw logs -------------------------------------------------------------

/// Exactly n * 1384 / 8088.
double laser_horizontal(std::size_t sample_number);

struct Channel {
  dsp::Series series;
  std::string gage_id;
  std::string placement;
  std::optional<double> cal_coeff;
  std::optional<double> rated_output;
};

struct RawLog {
  SensorKind kind = SensorKind::ASG;
  std::map<std::string, std::string> header;
  std::vector<Channel> channels;
  std::vector<double> beam_location_mm;   // laser
  std::optional<double> start_time_s;     // laser, seconds after midnight
  std::vector<std::string> warnings;
};

/// `kind` overrides nothing: when given it must agree with the header.
RawLog parse_raw_log_text(std::string_view text, std::optional<SensorKind> kind = std::nullopt);
RawLog parse_raw_log(const std::filesystem::path& path,
                     std::optional<SensorKind> kind = std::nullopt);

/// `HH:MM:SS.ss`, wrapping at midnight.
std::string format_time_of_day(double seconds);
double parse_time_of_day(std::string_view text);  // throws std::invalid_argument

// ---- rows -----------------------------------------------------------------

struct DataRow {
  std::string filename;
  std::string captured_instance;  // first20, last20, stationary, fwd
  std::string gage_id;
  std::string placement;
  std::optional<double> cal_coeff;
  std::optional<double> rated_output;
  std::string extrema;  // maxima, minima, envelope
  double seconds_elapsed = 0.0;
  double processed_datapoint = 0.0;
  std::string unit;

  friend bool operator==(const DataRow&, const DataRow&) = default;
};

struct LaserRow {
  std::string filename;
  std::size_t sample_number = 0;  // 1-based
  double horiz_mm = 0.0;
  double laser_reading_mm = 0.0;
  double beam_location_mm = 0.0;
  std::string sampled_time;

  friend bool operator==(const LaserRow&, const LaserRow&) = default;
};

struct ProcessOptions {
  std::optional<int> window;
  std::optional<int> polyorder;
  std::size_t first_n = 20;
  std::size_t last_n = 20;
};

struct ProcessResult {
  FileMeta meta;
  SensorKind kind = SensorKind::ASG;
  std::vector<DataRow> rows;
  std::vector<LaserRow> laser_rows;
  std::size_t peak_rows = 0;
  std::size_t envelope_rows = 0;
  std::size_t envelope_truncated = 0;
  std::size_t out_of_range = 0;
  std::vector<std::string> warnings;
};

ProcessResult process_log(const RawLog& log, std::string_view filename,
                          const ProcessOptions& options = {});
ProcessResult process_file(const std::filesystem::path& path,
                           std::optional<SensorKind> kind = std::nullopt,
                           const ProcessOptions& options = {});

// ---- normalization --------------------------------------------------------

struct FileInfoRow {
  std::size_t id = 0;
  FileMeta meta;

  friend bool operator==(const FileInfoRow&, const FileInfoRow&) = default;
};

/// Unique filenames in first-seen order, ids dense from 1.
std::vector<FileInfoRow> build_file_info(const std::vector<FileMeta>& metas);

std::string file_info_csv(const std::vector<FileInfoRow>& info);
std::vector<FileInfoRow> parse_file_info_csv(std::string_view text);  // IntegrityError on duplicate ids

struct NormalizedCsv {
  std::string data;
  std::string file_info;
};

/// Throws DanglingReference when a row names a file missing from `info`.
NormalizedCsv emit_normalized(const std::vector<DataRow>& rows,
                              const std::vector<FileInfoRow>& info);
std::string emit_laser_csv(const std::vector<LaserRow>& rows, const std::vector<FileInfoRow>& info);

/// Inverse of emit_normalized. Throws DanglingReference or IntegrityError.
std::vector<DataRow> join_by_filename_id(std::string_view data_csv, std::string_view file_info_csv);
std::vector<LaserRow> join_laser_by_filename_id(std::string_view laser_csv,
                                                std::string_view file_info_csv);

/// Denormalized CSV (filename in place of filename_id).
std::string joined_csv(const std::vector<DataRow>& rows);
std::string joined_laser_csv(const std::vector<LaserRow>& rows);

}  // namespace paveh::etl
