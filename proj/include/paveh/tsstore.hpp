// Embedded time-series store partitioned by sensor and time window.
//
// On-disk layout:
//
//   <root>/manifest                          sealed chunk listing (text)
//   <root>/<sanitized sensor>/<window-start-us>.seg
//
// A segment is a 32 byte header followed by 16 byte records, little endian:
//
//   header: magic "PVSG" | u32 version | u64 FNV-1a(sensor key)
//           | i64 window start | i64 chunk span
//   record: i64 ts (us) | f64 value
//
// Records are appended in arrival order. Duplicates of (sensor, ts) resolve
// last-write-wins when the segment is read.

#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace paveh::tsstore {

inline constexpr std::int64_t kDefaultChunkSpan = 3'600'000'000;  // 1 h
inline constexpr std::size_t kSegmentHeaderSize = 32;
inline constexpr std::size_t kRecordSize = 16;
inline constexpr std::uint32_t kSegmentVersion = 1;

class StoreError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class CorruptSegment : public StoreError {
public:
  using StoreError::StoreError;
};

struct Sample {
  std::string sensor;
  std::int64_t ts = 0;
  double v = 0.0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

/// A stored reading; the sensor is implied by the query.
struct Record {
  std::int64_t ts = 0;
  double v = 0.0;

  friend bool operator==(const Record&, const Record&) = default;
};

struct ChunkKey {
  std::string sensor;
  std::int64_t window_start = 0;

  friend auto operator<=>(const ChunkKey&, const ChunkKey&) = default;
};

ChunkKey chunk_for(std::string_view sensor, std::int64_t ts,
                   std::int64_t span = kDefaultChunkSpan);

struct ChunkInfo {
  ChunkKey key;
  std::uint64_t record_count = 0;  // records in the segment, duplicates included
  std::int64_t min_ts = 0;
  std::int64_t max_ts = 0;
  std::filesystem::path segment;
  bool corrupt = false;
};

enum class InsertStatus { Ack, Duplicate, Error };

struct InsertOutcome {
  InsertStatus status = InsertStatus::Ack;
  std::string error;
};

struct InsertReport {
  std::vector<InsertOutcome> outcomes;  // one per input sample, same order
  std::size_t acked = 0;
  std::size_t duplicates = 0;
  std::size_t errors = 0;
};

enum class Agg { Avg, Min, Max, Count };

Agg parse_agg(std::string_view name);
std::string_view to_string(Agg agg) noexcept;

struct Bucket {
  std::int64_t start = 0;
  double value = 0.0;

  friend bool operator==(const Bucket&, const Bucket&) = default;
};

struct StoreOptions {
  std::int64_t chunk_span_us = kDefaultChunkSpan;
  std::uint64_t max_bytes = 0;  // 0 = unlimited
};

class Store {
public:
  /// Opens (creating if needed) the store at `root`. An existing store keeps
  /// the chunk span recorded in its manifest.
  explicit Store(std::filesystem::path root, StoreOptions options = {});
  ~Store();
  Store(Store&&) noexcept;
  Store& operator=(Store&&) noexcept;

  InsertReport insert(std::span<const Sample> batch);

  /// Samples with t0 <= ts < t1, ascending ts. Unknown sensors yield [].
  std::vector<Record> query_range(std::string_view sensor, std::int64_t t0,
                                  std::int64_t t1) const;

  /// Aggregates into buckets aligned at multiples of `bucket`; empty buckets
  /// are omitted.
  std::vector<Bucket> downsample(std::string_view sensor, std::int64_t t0,
                                 std::int64_t t1, std::int64_t bucket,
                                 Agg agg) const;

  /// Drops whole chunks whose window ends at or before now - keep.
  std::vector<ChunkKey> retention_sweep(std::int64_t now, std::int64_t keep);

  std::vector<std::string> sensors() const;
  std::vector<ChunkInfo> chunks() const;
  std::int64_t chunk_span() const;
  const std::filesystem::path& root() const;

  /// Rewrites the manifest. Segment data is flushed on every insert.
  void flush();
  void close();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Reversible directory name for a sensor key: bytes outside
/// [A-Za-z0-9_-] become %XX.
std::string sanitize_sensor_key(std::string_view key);
std::string unsanitize_sensor_key(std::string_view name);

std::uint64_t sensor_key_hash(std::string_view key) noexcept;

struct SegmentHeader {
  std::uint32_t version = kSegmentVersion;
  std::uint64_t key_hash = 0;
  std::int64_t window_start = 0;
  std::int64_t span = kDefaultChunkSpan;

  friend bool operator==(const SegmentHeader&, const SegmentHeader&) = default;
};

std::string encode_segment_header(const SegmentHeader& header);
SegmentHeader decode_segment_header(std::string_view bytes);  // throws CorruptSegment
void append_record(std::string& out, const Record& record);
Record decode_record(const char* bytes) noexcept;

struct SegmentIssue {
  std::filesystem::path segment;
  std::string problem;
};

/// Scans every segment under `root` and reports header problems, torn
/// records, and records whose ts lies outside the segment's window.
std::vector<SegmentIssue> verify_segments(const std::filesystem::path& root);

}  // namespace paveh::tsstore
