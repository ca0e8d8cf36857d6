#include "paveh/tsstore.hpp"

#include <algorithm>
#include <atomic>
#include <optional>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "paveh/timeutil.hpp"

namespace paveh::tsstore {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'P', 'V', 'S', 'G'};
constexpr const char* kManifestName = "manifest";

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>(u & 0xFF));
    u = static_cast<U>(u >> 8);
  }
}

template <typename T>
T get_le(const char* p) noexcept {
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (std::size_t i = sizeof(T); i-- > 0;)
    u = static_cast<U>((u << 8) | static_cast<unsigned char>(p[i]));
  return static_cast<T>(u);
}

std::string hex_byte(unsigned char c) { return fmt::format("%{:02X}", c); }

// Chunk contents as last-write-wins view plus the raw log count.
struct ChunkData {
  std::vector<Record> sorted;   // unique ts, ascending
  std::vector<Record> pending;  // unique ts not present in `sorted`
  std::unordered_map<std::int64_t, std::size_t> pending_index;

  // Returns true if ts was already present (value replaced).
  bool apply(const Record& r) {
    if (auto it = pending_index.find(r.ts); it != pending_index.end()) {
      pending[it->second].v = r.v;
      return true;
    }
    if (sorted.empty() || r.ts > sorted.back().ts) {
      sorted.push_back(r);
      return false;
    }
    auto it = std::lower_bound(sorted.begin(), sorted.end(), r.ts,
                               [](const Record& a, std::int64_t ts) { return a.ts < ts; });
    if (it != sorted.end() && it->ts == r.ts) {
      it->v = r.v;
      return true;
    }
    pending_index.emplace(r.ts, pending.size());
    pending.push_back(r);
    return false;
  }

  const std::vector<Record>& view() {
    if (!pending.empty()) {
      std::sort(pending.begin(), pending.end(),
                [](const Record& a, const Record& b) { return a.ts < b.ts; });
      const auto mid = sorted.size();
      sorted.insert(sorted.end(), pending.begin(), pending.end());
      std::inplace_merge(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(mid),
                         sorted.end(),
                         [](const Record& a, const Record& b) { return a.ts < b.ts; });
      pending.clear();
      pending_index.clear();
    }
    return sorted;
  }

  std::size_t unique() const { return sorted.size() + pending.size(); }
};

struct Chunk {
  ChunkKey key;
  fs::path path;
  std::mutex mu;
  bool loaded = false;
  bool corrupt = false;
  bool dropped = false;
  std::uint64_t raw_count = 0;
  ChunkData data;
};

}  // namespace

ChunkKey chunk_for(std::string_view sensor, std::int64_t ts, std::int64_t span) {
  if (span <= 0) throw std::invalid_argument("chunk span must be positive");
  return ChunkKey{std::string(sensor), floor_div(ts, span) * span};
}

Agg parse_agg(std::string_view name) {
  if (name == "avg") return Agg::Avg;
  if (name == "min") return Agg::Min;
  if (name == "max") return Agg::Max;
  if (name == "count") return Agg::Count;
  throw std::invalid_argument(fmt::format("unknown aggregate '{}'", name));
}

std::string_view to_string(Agg agg) noexcept {
  switch (agg) {
    case Agg::Avg: return "avg";
    case Agg::Min: return "min";
    case Agg::Max: return "max";
    case Agg::Count: return "count";
  }
  return "?";
}

std::string sanitize_sensor_key(std::string_view key) {
  std::string out;
  for (char c : key) {
    const bool plain = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
                       (c >= '0' && c <= '9') || c == '_' || c == '-';
    out += plain ? std::string(1, c) : hex_byte(static_cast<unsigned char>(c));
  }
  return out;
}

std::string unsanitize_sensor_key(std::string_view name) {
  std::string out;
  for (std::size_t i = 0; i < name.size(); ++i) {
    if (name[i] == '%' && i + 2 < name.size()) {
      out.push_back(static_cast<char>(std::stoi(std::string(name.substr(i + 1, 2)), nullptr, 16)));
      i += 2;
    } else {
      out.push_back(name[i]);
    }
  }
  return out;
}

std::uint64_t sensor_key_hash(std::string_view key) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : key) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string encode_segment_header(const SegmentHeader& h) {
  std::string out(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, h.version);
  put_le<std::uint64_t>(out, h.key_hash);
  put_le<std::int64_t>(out, h.window_start);
  put_le<std::int64_t>(out, h.span);
  return out;
}

SegmentHeader decode_segment_header(std::string_view bytes) {
  if (bytes.size() < kSegmentHeaderSize) throw CorruptSegment("short segment header");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw CorruptSegment("bad segment magic");
  SegmentHeader h;
  h.version = get_le<std::uint32_t>(bytes.data() + 4);
  if (h.version != kSegmentVersion)
    throw CorruptSegment(fmt::format("unsupported segment version {}", h.version));
  h.key_hash = get_le<std::uint64_t>(bytes.data() + 8);
  h.window_start = get_le<std::int64_t>(bytes.data() + 16);
  h.span = get_le<std::int64_t>(bytes.data() + 24);
  if (h.span <= 0) throw CorruptSegment("non-positive span in segment header");
  return h;
}

void append_record(std::string& out, const Record& r) {
  put_le<std::int64_t>(out, r.ts);
  put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(r.v));
}

Record decode_record(const char* p) noexcept {
  return Record{get_le<std::int64_t>(p), std::bit_cast<double>(get_le<std::uint64_t>(p + 8))};
}

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StoreError(fmt::format("cannot read {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

std::optional<std::int64_t> parse_window_filename(const fs::path& p) {
  if (p.extension() != ".seg") return std::nullopt;
  const auto stem = p.stem().string();
  try {
    std::size_t used = 0;
    const auto v = std::stoll(stem, &used);
    if (used != stem.size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

struct Store::Impl {
  fs::path root;
  StoreOptions options;
  mutable std::shared_mutex map_mu;
  std::map<std::string, std::map<std::int64_t, std::shared_ptr<Chunk>>> chunks;
  std::atomic<std::uint64_t> bytes{0};
  bool closed = false;

  Impl(fs::path r, StoreOptions opts) : root(std::move(r)), options(opts) {
    if (options.chunk_span_us <= 0) throw StoreError("chunk span must be positive");
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw StoreError(fmt::format("cannot create store root {}: {}", root.string(), ec.message()));
    read_manifest_span();
    scan();
  }

  void read_manifest_span() {
    const auto path = root / kManifestName;
    if (!fs::exists(path)) return;
    std::ifstream in(path);
    std::string line;
    if (std::getline(in, line)) {
      const auto pos = line.find("span=");
      if (pos != std::string::npos) options.chunk_span_us = std::stoll(line.substr(pos + 5));
    }
  }

  void scan() {
    for (const auto& dir : fs::directory_iterator(root)) {
      if (!dir.is_directory()) continue;
      const auto sensor = unsanitize_sensor_key(dir.path().filename().string());
      for (const auto& file : fs::directory_iterator(dir.path())) {
        const auto window = parse_window_filename(file.path());
        if (!window) continue;
        auto c = std::make_shared<Chunk>();
        c->key = ChunkKey{sensor, *window};
        c->path = file.path();
        const auto size = fs::file_size(file.path());
        bytes += size;
        c->raw_count = size >= kSegmentHeaderSize ? (size - kSegmentHeaderSize) / kRecordSize : 0;
        chunks[sensor][*window] = std::move(c);
      }
    }
  }

  // Reads the segment into memory. Caller holds c.mu.
  void load(Chunk& c) const {
    if (c.loaded) return;
    c.loaded = true;
    if (!fs::exists(c.path)) return;
    const auto bytes_on_disk = read_file(c.path);
    try {
      const auto h = decode_segment_header(bytes_on_disk);
      if (h.key_hash != sensor_key_hash(c.key.sensor) || h.window_start != c.key.window_start ||
          h.span != options.chunk_span_us)
        throw CorruptSegment("segment header does not match its location");
    } catch (const CorruptSegment& e) {
      c.corrupt = true;
      spdlog::error("tsstore: {}: {}", c.path.string(), e.what());
      return;
    }
    const auto body = bytes_on_disk.size() - kSegmentHeaderSize;
    const auto whole = body / kRecordSize;
    if (body % kRecordSize != 0) {
      // Torn tail from an interrupted append: keep whole records only.
      spdlog::warn("tsstore: {}: dropping {} trailing bytes", c.path.string(), body % kRecordSize);
      fs::resize_file(c.path, kSegmentHeaderSize + whole * kRecordSize);
    }
    c.raw_count = whole;
    const char* p = bytes_on_disk.data() + kSegmentHeaderSize;
    for (std::size_t i = 0; i < whole; ++i) c.data.apply(decode_record(p + i * kRecordSize));
  }

  std::shared_ptr<Chunk> find(const std::string& sensor, std::int64_t window) const {
    std::shared_lock lock(map_mu);
    auto s = chunks.find(sensor);
    if (s == chunks.end()) return nullptr;
    auto c = s->second.find(window);
    return c == s->second.end() ? nullptr : c->second;
  }

  std::shared_ptr<Chunk> get_or_create(const ChunkKey& key) {
    if (auto c = find(key.sensor, key.window_start)) return c;
    std::unique_lock lock(map_mu);
    auto& slot = chunks[key.sensor][key.window_start];
    if (!slot) {
      slot = std::make_shared<Chunk>();
      slot->key = key;
      slot->path = root / sanitize_sensor_key(key.sensor) / fmt::format("{}.seg", key.window_start);
      slot->loaded = !fs::exists(slot->path);
    }
    return slot;
  }

  // Appends encoded records to the chunk's segment, creating it if needed.
  void write(Chunk& c, const std::string& records) {
    const bool fresh = !fs::exists(c.path);
    std::string out;
    if (fresh) {
      fs::create_directories(c.path.parent_path());
      out = encode_segment_header(
          {kSegmentVersion, sensor_key_hash(c.key.sensor), c.key.window_start, options.chunk_span_us});
    }
    out += records;
    std::FILE* f = std::fopen(c.path.c_str(), "ab");
    if (!f) throw StoreError(fmt::format("cannot open {}: {}", c.path.string(), std::strerror(errno)));
    const auto written = std::fwrite(out.data(), 1, out.size(), f);
    const bool ok = written == out.size() && std::fflush(f) == 0;
    std::fclose(f);
    if (!ok) throw StoreError(fmt::format("write failed on {}", c.path.string()));
    bytes += out.size();
  }

  std::vector<std::shared_ptr<Chunk>> overlapping(std::string_view sensor, std::int64_t t0,
                                                  std::int64_t t1) const {
    std::vector<std::shared_ptr<Chunk>> out;
    std::shared_lock lock(map_mu);
    auto s = chunks.find(std::string(sensor));
    if (s == chunks.end()) return out;
    const auto span = options.chunk_span_us;
    auto it = s->second.lower_bound(floor_div(t0, span) * span);
    for (; it != s->second.end() && it->first < t1; ++it) out.push_back(it->second);
    return out;
  }

  void write_manifest() {
    std::string text = fmt::format("# paveh tsstore manifest v1 span={}\n", options.chunk_span_us);
    std::shared_lock lock(map_mu);
    for (const auto& [sensor, windows] : chunks)
      for (const auto& [window, c] : windows) {
        std::lock_guard clock(c->mu);
        if (c->dropped || !fs::exists(c->path)) continue;
        text += fmt::format("{}\t{}\t{}\n", sanitize_sensor_key(sensor), window, c->raw_count);
      }
    const auto tmp = root / (std::string(kManifestName) + ".tmp");
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << text;
      if (!out) throw StoreError("cannot write manifest");
    }
    fs::rename(tmp, root / kManifestName);
  }
};

Store::Store(fs::path root, StoreOptions options)
    : impl_(std::make_unique<Impl>(std::move(root), options)) {}

Store::~Store() {
  if (impl_) {
    try {
      close();
    } catch (const std::exception& e) {
      spdlog::error("tsstore: close failed: {}", e.what());
    }
  }
}

Store::Store(Store&&) noexcept = default;
Store& Store::operator=(Store&&) noexcept = default;

InsertReport Store::insert(std::span<const Sample> batch) {
  InsertReport report;
  report.outcomes.resize(batch.size());
  const auto span = impl_->options.chunk_span_us;

  // Group by chunk, keeping arrival order within each chunk.
  std::map<ChunkKey, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& s = batch[i];
    if (s.sensor.empty() || s.ts <= 0 || !std::isfinite(s.v)) {
      report.outcomes[i] = {InsertStatus::Error, "invalid sample"};
      continue;
    }
    groups[chunk_for(s.sensor, s.ts, span)].push_back(i);
  }

  for (auto& [key, members] : groups) {
    auto fail_all = [&](const std::string& why) {
      for (auto i : members) report.outcomes[i] = {InsertStatus::Error, why};
    };
    const std::uint64_t need = members.size() * kRecordSize + kSegmentHeaderSize;
    if (impl_->options.max_bytes && impl_->bytes + need > impl_->options.max_bytes) {
      fail_all("storage full");
      continue;
    }
    std::shared_ptr<Chunk> c;
    std::unique_lock<std::mutex> lock;
    for (;;) {
      c = impl_->get_or_create(key);
      lock = std::unique_lock(c->mu);
      if (!c->dropped) break;
      lock.unlock();
      std::unique_lock mlock(impl_->map_mu);
      auto& slot = impl_->chunks[key.sensor][key.window_start];
      if (slot == c) slot.reset();
    }
    try {
      impl_->load(*c);
    } catch (const std::exception& e) {
      fail_all(e.what());
      continue;
    }
    if (c->corrupt) {
      fail_all("corrupt segment");
      continue;
    }
    std::string encoded;
    encoded.reserve(members.size() * kRecordSize);
    for (auto i : members) append_record(encoded, Record{batch[i].ts, batch[i].v});
    try {
      impl_->write(*c, encoded);
    } catch (const StoreError& e) {
      fail_all(e.what());
      continue;
    }
    c->raw_count += members.size();
    for (auto i : members) {
      const bool dup = c->data.apply(Record{batch[i].ts, batch[i].v});
      report.outcomes[i] = {dup ? InsertStatus::Duplicate : InsertStatus::Ack, {}};
    }
  }

  for (const auto& o : report.outcomes) {
    switch (o.status) {
      case InsertStatus::Ack: ++report.acked; break;
      case InsertStatus::Duplicate: ++report.duplicates; break;
      case InsertStatus::Error: ++report.errors; break;
    }
  }
  return report;
}

std::vector<Record> Store::query_range(std::string_view sensor, std::int64_t t0,
                                       std::int64_t t1) const {
  if (t0 > t1) throw std::invalid_argument("query range has t0 > t1");
  std::vector<Record> out;
  if (t0 == t1) return out;
  for (const auto& c : impl_->overlapping(sensor, t0, t1)) {
    std::lock_guard lock(c->mu);
    if (c->dropped) continue;
    impl_->load(*c);
    if (c->corrupt) continue;
    const auto& view = c->data.view();
    auto lo = std::lower_bound(view.begin(), view.end(), t0,
                               [](const Record& r, std::int64_t ts) { return r.ts < ts; });
    auto hi = std::lower_bound(lo, view.end(), t1,
                               [](const Record& r, std::int64_t ts) { return r.ts < ts; });
    out.insert(out.end(), lo, hi);
  }
  return out;
}

std::vector<Bucket> Store::downsample(std::string_view sensor, std::int64_t t0, std::int64_t t1,
                                      std::int64_t bucket, Agg agg) const {
  if (bucket <= 0) throw std::invalid_argument("bucket must be positive");
  std::vector<Bucket> out;
  const auto records = query_range(sensor, t0, t1);
  std::size_t i = 0;
  while (i < records.size()) {
    const auto start = floor_div(records[i].ts, bucket) * bucket;
    double sum = 0.0;
    double lo = records[i].v;
    double hi = records[i].v;
    std::size_t n = 0;
    for (; i < records.size() && records[i].ts < start + bucket; ++i, ++n) {
      sum += records[i].v;
      lo = std::min(lo, records[i].v);
      hi = std::max(hi, records[i].v);
    }
    double value = 0.0;
    switch (agg) {
      case Agg::Avg: value = sum / static_cast<double>(n); break;
      case Agg::Min: value = lo; break;
      case Agg::Max: value = hi; break;
      case Agg::Count: value = static_cast<double>(n); break;
    }
    out.push_back({start, value});
  }
  return out;
}

std::vector<ChunkKey> Store::retention_sweep(std::int64_t now, std::int64_t keep) {
  if (keep <= 0) throw std::invalid_argument("keep must be positive");
  const auto cutoff = now - keep;
  const auto span = impl_->options.chunk_span_us;
  std::vector<ChunkKey> dropped;
  {
    std::unique_lock lock(impl_->map_mu);
    for (auto s = impl_->chunks.begin(); s != impl_->chunks.end();) {
      auto& windows = s->second;
      for (auto it = windows.begin(); it != windows.end() && it->first + span <= cutoff;) {
        auto& c = it->second;
        {
          std::lock_guard clock(c->mu);
          c->dropped = true;
          std::error_code ec;
          const auto size = fs::exists(c->path) ? fs::file_size(c->path, ec) : 0;
          if (fs::remove(c->path, ec)) impl_->bytes -= size;
        }
        dropped.push_back(c->key);
        it = windows.erase(it);
      }
      if (windows.empty()) {
        std::error_code ec;
        fs::remove(impl_->root / sanitize_sensor_key(s->first), ec);
        s = impl_->chunks.erase(s);
      } else {
        ++s;
      }
    }
  }
  impl_->write_manifest();
  return dropped;
}

std::vector<std::string> Store::sensors() const {
  std::shared_lock lock(impl_->map_mu);
  std::vector<std::string> out;
  for (const auto& [sensor, _] : impl_->chunks) out.push_back(sensor);
  return out;
}

std::vector<ChunkInfo> Store::chunks() const {
  std::vector<std::shared_ptr<Chunk>> all;
  {
    std::shared_lock lock(impl_->map_mu);
    for (const auto& [sensor, windows] : impl_->chunks)
      for (const auto& [w, c] : windows) all.push_back(c);
  }
  std::vector<ChunkInfo> out;
  for (const auto& c : all) {
    std::lock_guard lock(c->mu);
    if (c->dropped) continue;
    impl_->load(*c);
    ChunkInfo info{c->key, c->raw_count, 0, 0, c->path, c->corrupt};
    if (!c->corrupt) {
      const auto& view = c->data.view();
      if (!view.empty()) {
        info.min_ts = view.front().ts;
        info.max_ts = view.back().ts;
      }
    }
    out.push_back(std::move(info));
  }
  return out;
}

std::int64_t Store::chunk_span() const { return impl_->options.chunk_span_us; }

const fs::path& Store::root() const { return impl_->root; }

void Store::flush() { impl_->write_manifest(); }

void Store::close() {
  if (!impl_ || impl_->closed) return;
  impl_->write_manifest();
  impl_->closed = true;
}

std::vector<SegmentIssue> verify_segments(const fs::path& root) {
  std::vector<SegmentIssue> issues;
  if (!fs::exists(root)) return issues;
  for (const auto& dir : fs::directory_iterator(root)) {
    if (!dir.is_directory()) continue;
    const auto sensor = unsanitize_sensor_key(dir.path().filename().string());
    for (const auto& file : fs::directory_iterator(dir.path())) {
      const auto window = parse_window_filename(file.path());
      if (!window) continue;
      auto report = [&](std::string problem) {
        issues.push_back({file.path(), std::move(problem)});
      };
      const auto bytes = read_file(file.path());
      SegmentHeader h;
      try {
        h = decode_segment_header(bytes);
      } catch (const CorruptSegment& e) {
        report(e.what());
        continue;
      }
      if (h.key_hash != sensor_key_hash(sensor)) report("sensor key hash mismatch");
      if (h.window_start != *window) report("window start does not match file name");
      if (floor_div(h.window_start, h.span) * h.span != h.window_start)
        report("window start not aligned to span");
      const auto body = bytes.size() - kSegmentHeaderSize;
      if (body % kRecordSize) report(fmt::format("{} trailing bytes", body % kRecordSize));
      std::size_t outside = 0;
      for (std::size_t off = kSegmentHeaderSize; off + kRecordSize <= bytes.size(); off += kRecordSize) {
        const auto r = decode_record(bytes.data() + off);
        if (r.ts < h.window_start || r.ts >= h.window_start + h.span) ++outside;
      }
      if (outside) report(fmt::format("{} records outside the chunk window", outside));
    }
  }
  return issues;
}

}  // namespace paveh::tsstore
