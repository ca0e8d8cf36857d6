// Pub/sub wire protocol: subjects, frames, and the sample payload.
//
// The protocol is line oriented with `\r\n` terminators:
//
//   PUB <subject> <len>\r\n<payload>\r\n
//   SUB <subject> <sid>\r\n
//   UNSUB <sid>\r\n
//   MSG <subject> <sid> <len>\r\n<payload>\r\n
//   PING\r\n  PONG\r\n  +OK\r\n  -ERR <text>\r\n
//
// Subjects are dot separated tokens. In subscription patterns `*` matches
// exactly one token and a trailing `>` matches one or more tokens.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace paveh::wire {

class MalformedFrame : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class OversizePayload : public MalformedFrame {
public:
  using MalformedFrame::MalformedFrame;
};

class InvalidSubject : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class InvalidTopic : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class MalformedPayload : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// True if `token` is non-empty and uses only A-Z a-z 0-9 _ -.
bool is_literal_token(std::string_view token) noexcept;

class Subject {
public:
  Subject() = default;

  /// Parses a dotted subject. Wildcard tokens are accepted only when
  /// `allow_wildcards` is set. Throws InvalidSubject.
  static Subject parse(std::string_view text, bool allow_wildcards = false);
  static Subject pattern(std::string_view text) { return parse(text, true); }
  static Subject from_tokens(std::vector<std::string> tokens,
                             bool allow_wildcards = false);

  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  std::size_t size() const noexcept { return tokens_.size(); }
  bool empty() const noexcept { return tokens_.empty(); }
  bool has_wildcards() const noexcept { return wildcard_; }
  std::string str() const;

  friend bool operator==(const Subject& a, const Subject& b) {
    return a.tokens_ == b.tokens_;
  }

private:
  std::vector<std::string> tokens_;
  bool wildcard_ = false;
};

/// `pattern` may hold wildcards; `subject` is expected to be concrete.
bool subject_matches(const Subject& pattern, const Subject& subject) noexcept;

/// MQTT topic levels become subject tokens; `+` maps to `*` and a trailing
/// `#` to `>`. Throws InvalidTopic.
Subject mqtt_topic_to_subject(std::string_view topic);

/// Inverse of mqtt_topic_to_subject.
std::string subject_to_mqtt_topic(const Subject& subject);

enum class FrameKind { Pub, Sub, Unsub, Msg, Ping, Pong, Ok, Err };

std::string_view to_string(FrameKind kind) noexcept;

struct Frame {
  FrameKind kind = FrameKind::Ping;
  Subject subject;        // PUB, SUB, MSG
  std::uint64_t sid = 0;  // SUB, UNSUB, MSG
  std::string payload;    // PUB, MSG
  std::string message;    // ERR

  static Frame bare(FrameKind kind) {
    Frame f;
    f.kind = kind;
    return f;
  }
  static Frame pub(Subject subject, std::string payload);
  static Frame sub(Subject pattern, std::uint64_t sid);
  static Frame unsub(std::uint64_t sid);
  static Frame msg(Subject subject, std::uint64_t sid, std::string payload);
  static Frame ping() { return bare(FrameKind::Ping); }
  static Frame pong() { return bare(FrameKind::Pong); }
  static Frame ok() { return bare(FrameKind::Ok); }
  static Frame err(std::string message);

  friend bool operator==(const Frame&, const Frame&) = default;
};

inline constexpr std::size_t kDefaultMaxPayload = 1u << 20;
inline constexpr std::size_t kMaxControlLine = 4096;

struct Parsed {
  Frame frame;
  std::size_t consumed = 0;
};

/// Parses the first complete frame in `bytes`. Returns nullopt when more
/// bytes are needed. Throws MalformedFrame (or OversizePayload).
std::optional<Parsed> parse_frame(std::string_view bytes,
                                  std::size_t max_payload = kDefaultMaxPayload);

std::string encode_frame(const Frame& frame);

/// Appends the encoding of `frame` to `out`.
void encode_frame_to(const Frame& frame, std::string& out);

struct SamplePayload {
  std::int64_t ts = 0;  // microseconds since the Unix epoch, UTC
  double v = 0.0;
  std::uint64_t seq = 0;
  std::string unit;

  friend bool operator==(const SamplePayload&, const SamplePayload&) = default;
};

std::string encode_payload(const SamplePayload& payload);

/// Strict decode: exactly the fields ts, v, seq, unit. `NaN`, `Infinity` and
/// `-Infinity` literals are accepted for v so that non-finite readings can be
/// told apart from malformed ones. Throws MalformedPayload.
SamplePayload decode_payload(std::string_view json);

}  // namespace paveh::wire
