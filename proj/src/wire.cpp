#include "paveh/wire.hpp"

#include <charconv>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "json.hpp"

namespace paveh::wire {

namespace {

bool is_token_char(char c) noexcept {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
         (c >= '0' && c <= '9') || c == '_' || c == '-';
}

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (;;) {
    const auto pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(text.substr(start));
      return parts;
    }
    parts.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

std::optional<std::uint64_t> parse_u64(std::string_view s) {
  if (s.empty() || s.size() > 20) return std::nullopt;
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

Subject parse_frame_subject(std::string_view text, bool allow_wildcards) {
  try {
    return Subject::parse(text, allow_wildcards);
  } catch (const InvalidSubject& e) {
    throw MalformedFrame(fmt::format("bad subject '{}': {}", text, e.what()));
  }
}

}  // namespace

bool is_literal_token(std::string_view token) noexcept {
  if (token.empty()) return false;
  for (char c : token)
    if (!is_token_char(c)) return false;
  return true;
}

Subject Subject::parse(std::string_view text, bool allow_wildcards) {
  if (text.empty()) throw InvalidSubject("empty subject");
  std::vector<std::string> tokens;
  for (auto part : split(text, '.')) tokens.emplace_back(part);
  return from_tokens(std::move(tokens), allow_wildcards);
}

Subject Subject::from_tokens(std::vector<std::string> tokens,
                             bool allow_wildcards) {
  if (tokens.empty()) throw InvalidSubject("subject needs at least one token");
  Subject s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    if (t == "*" || t == ">") {
      if (!allow_wildcards)
        throw InvalidSubject("wildcard token in concrete subject");
      if (t == ">" && i + 1 != tokens.size())
        throw InvalidSubject("'>' must be the last token");
      s.wildcard_ = true;
    } else if (!is_literal_token(t)) {
      throw InvalidSubject(fmt::format("invalid token '{}'", t));
    }
  }
  s.tokens_ = std::move(tokens);
  return s;
}

std::string Subject::str() const {
  std::string out;
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (i) out.push_back('.');
    out += tokens_[i];
  }
  return out;
}

bool subject_matches(const Subject& pattern, const Subject& subject) noexcept {
  const auto& p = pattern.tokens();
  const auto& s = subject.tokens();
  if (p.empty() || s.empty()) return false;
  std::size_t i = 0;
  for (; i < p.size(); ++i) {
    if (p[i] == ">") return i < s.size();
    if (i >= s.size()) return false;
    if (p[i] != "*" && p[i] != s[i]) return false;
  }
  return i == s.size();
}

Subject mqtt_topic_to_subject(std::string_view topic) {
  if (topic.empty()) throw InvalidTopic("empty topic");
  const auto levels = split(topic, '/');
  std::vector<std::string> tokens;
  tokens.reserve(levels.size());
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const auto level = levels[i];
    if (level == "+") {
      tokens.emplace_back("*");
    } else if (level == "#") {
      if (i + 1 != levels.size())
        throw InvalidTopic(fmt::format("'#' must be the last level in '{}'", topic));
      tokens.emplace_back(">");
    } else if (is_literal_token(level)) {
      tokens.emplace_back(level);
    } else {
      throw InvalidTopic(
          fmt::format("level '{}' of topic '{}' is not a legal token", level, topic));
    }
  }
  return Subject::from_tokens(std::move(tokens), true);
}

std::string subject_to_mqtt_topic(const Subject& subject) {
  std::string out;
  const auto& tokens = subject.tokens();
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back('/');
    if (tokens[i] == "*")
      out.push_back('+');
    else if (tokens[i] == ">")
      out.push_back('#');
    else
      out += tokens[i];
  }
  return out;
}

std::string_view to_string(FrameKind kind) noexcept {
  switch (kind) {
    case FrameKind::Pub: return "PUB";
    case FrameKind::Sub: return "SUB";
    case FrameKind::Unsub: return "UNSUB";
    case FrameKind::Msg: return "MSG";
    case FrameKind::Ping: return "PING";
    case FrameKind::Pong: return "PONG";
    case FrameKind::Ok: return "+OK";
    case FrameKind::Err: return "-ERR";
  }
  return "?";
}

Frame Frame::pub(Subject subject, std::string payload) {
  Frame f = bare(FrameKind::Pub);
  f.subject = std::move(subject);
  f.payload = std::move(payload);
  return f;
}

Frame Frame::sub(Subject pattern, std::uint64_t sid) {
  Frame f = bare(FrameKind::Sub);
  f.subject = std::move(pattern);
  f.sid = sid;
  return f;
}

Frame Frame::unsub(std::uint64_t sid) {
  Frame f = bare(FrameKind::Unsub);
  f.sid = sid;
  return f;
}

Frame Frame::msg(Subject subject, std::uint64_t sid, std::string payload) {
  Frame f = bare(FrameKind::Msg);
  f.subject = std::move(subject);
  f.sid = sid;
  f.payload = std::move(payload);
  return f;
}

Frame Frame::err(std::string message) {
  Frame f = bare(FrameKind::Err);
  f.message = std::move(message);
  return f;
}

std::optional<Parsed> parse_frame(std::string_view bytes,
                                  std::size_t max_payload) {
  const auto eol = bytes.find("\r\n");
  if (eol == std::string_view::npos) {
    if (bytes.size() > kMaxControlLine)
      throw MalformedFrame("control line too long");
    return std::nullopt;
  }
  const std::string_view line = bytes.substr(0, eol);
  const std::size_t header_len = eol + 2;

  if (line.rfind("-ERR", 0) == 0) {
    if (line.size() == 4) return Parsed{Frame::err(""), header_len};
    if (line[4] != ' ') throw MalformedFrame("bad -ERR line");
    return Parsed{Frame::err(std::string(line.substr(5))), header_len};
  }

  const auto args = split(line, ' ');
  const std::string_view verb = args[0];
  const auto argc = args.size() - 1;
  for (std::size_t i = 1; i < args.size(); ++i)
    if (args[i].empty()) throw MalformedFrame("empty argument");

  auto need_args = [&](std::size_t n) {
    if (argc != n)
      throw MalformedFrame(fmt::format("{} expects {} arguments", verb, n));
  };
  auto number = [&](std::string_view s, const char* what) {
    auto v = parse_u64(s);
    if (!v) throw MalformedFrame(fmt::format("bad {} '{}'", what, s));
    return *v;
  };
  // Reads "<len bytes>\r\n" after the control line.
  auto body = [&](std::uint64_t len) -> std::optional<std::string> {
    if (len > max_payload)
      throw OversizePayload(
          fmt::format("payload of {} bytes exceeds limit {}", len, max_payload));
    if (bytes.size() < header_len + len + 2) return std::nullopt;
    if (bytes.substr(header_len + len, 2) != "\r\n")
      throw MalformedFrame("payload length does not match terminator");
    return std::string(bytes.substr(header_len, len));
  };

  if (verb == "PING") {
    need_args(0);
    return Parsed{Frame::ping(), header_len};
  }
  if (verb == "PONG") {
    need_args(0);
    return Parsed{Frame::pong(), header_len};
  }
  if (verb == "+OK") {
    need_args(0);
    return Parsed{Frame::ok(), header_len};
  }
  if (verb == "SUB") {
    need_args(2);
    auto pattern = parse_frame_subject(args[1], true);
    return Parsed{Frame::sub(std::move(pattern), number(args[2], "sid")),
                  header_len};
  }
  if (verb == "UNSUB") {
    need_args(1);
    return Parsed{Frame::unsub(number(args[1], "sid")), header_len};
  }
  if (verb == "PUB") {
    need_args(2);
    auto subject = parse_frame_subject(args[1], false);
    const auto len = number(args[2], "length");
    auto payload = body(len);
    if (!payload) return std::nullopt;
    return Parsed{Frame::pub(std::move(subject), std::move(*payload)),
                  header_len + len + 2};
  }
  if (verb == "MSG") {
    need_args(3);
    auto subject = parse_frame_subject(args[1], false);
    const auto sid = number(args[2], "sid");
    const auto len = number(args[3], "length");
    auto payload = body(len);
    if (!payload) return std::nullopt;
    return Parsed{Frame::msg(std::move(subject), sid, std::move(*payload)),
                  header_len + len + 2};
  }
  throw MalformedFrame(fmt::format("unknown verb '{}'", verb));
}

void encode_frame_to(const Frame& f, std::string& out) {
  switch (f.kind) {
    case FrameKind::Pub:
      fmt::format_to(std::back_inserter(out), "PUB {} {}\r\n", f.subject.str(),
                     f.payload.size());
      out += f.payload;
      out += "\r\n";
      return;
    case FrameKind::Sub:
      fmt::format_to(std::back_inserter(out), "SUB {} {}\r\n", f.subject.str(),
                     f.sid);
      return;
    case FrameKind::Unsub:
      fmt::format_to(std::back_inserter(out), "UNSUB {}\r\n", f.sid);
      return;
    case FrameKind::Msg:
      fmt::format_to(std::back_inserter(out), "MSG {} {} {}\r\n",
                     f.subject.str(), f.sid, f.payload.size());
      out += f.payload;
      out += "\r\n";
      return;
    case FrameKind::Ping: out += "PING\r\n"; return;
    case FrameKind::Pong: out += "PONG\r\n"; return;
    case FrameKind::Ok: out += "+OK\r\n"; return;
    case FrameKind::Err:
      out += f.message.empty() ? "-ERR" : "-ERR ";
      out += f.message;
      out += "\r\n";
      return;
  }
}

std::string encode_frame(const Frame& frame) {
  std::string out;
  encode_frame_to(frame, out);
  return out;
}

namespace {

void append_number(std::string& out, double v) {
  if (std::isnan(v))
    out += "NaN";
  else if (std::isinf(v))
    out += v > 0 ? "Infinity" : "-Infinity";
  else
    fmt::format_to(std::back_inserter(out), "{}", v);
}

// Replaces bare NaN / Infinity / -Infinity literals outside strings with
// `null`. Returns the value of the first literal replaced, if any.
std::optional<double> strip_nonfinite_literals(std::string& text) {
  std::optional<double> first;
  bool in_string = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (c == '\\')
        ++i;
      else if (c == '"')
        in_string = false;
      continue;
    }
    if (c == '"') {
      in_string = true;
      continue;
    }
    constexpr double inf = std::numeric_limits<double>::infinity();
    const std::pair<std::string_view, double> literals[] = {
        {"-Infinity", -inf},
        {"Infinity", inf},
        {"NaN", std::numeric_limits<double>::quiet_NaN()}};
    for (const auto& [lit, value] : literals) {
      if (text.compare(i, lit.size(), lit) == 0) {
        text.replace(i, lit.size(), "null");
        i += 3;
        if (!first) first = value;
        break;
      }
    }
  }
  return first;
}

}  // namespace

std::string encode_payload(const SamplePayload& p) {
  std::string out;
  out.reserve(64 + p.unit.size());
  fmt::format_to(std::back_inserter(out), R"({{"ts":{},"v":)", p.ts);
  append_number(out, p.v);
  fmt::format_to(std::back_inserter(out), R"(,"seq":{},"unit":{}}})", p.seq,
                 nlohmann::json(p.unit).dump());
  return out;
}

SamplePayload decode_payload(std::string_view json) {
  std::string text(json);
  const auto nonfinite = strip_nonfinite_literals(text);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw MalformedPayload(fmt::format("invalid JSON: {}", e.what()));
  }
  if (!doc.is_object()) throw MalformedPayload("payload must be a JSON object");
  for (const auto& [key, _] : doc.items())
    if (key != "ts" && key != "v" && key != "seq" && key != "unit")
      throw MalformedPayload(fmt::format("unknown field '{}'", key));
  for (const char* key : {"ts", "v", "seq", "unit"})
    if (!doc.contains(key))
      throw MalformedPayload(fmt::format("missing field '{}'", key));

  SamplePayload p;
  const auto& ts = doc["ts"];
  if (!ts.is_number_integer()) throw MalformedPayload("ts must be an integer");
  if (ts.is_number_unsigned() &&
      ts.get<std::uint64_t>() >
          static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()))
    throw MalformedPayload("ts out of range");
  p.ts = ts.get<std::int64_t>();
  if (p.ts <= 0) throw MalformedPayload("ts must be positive");

  const auto& v = doc["v"];
  if (v.is_null() && nonfinite)
    p.v = *nonfinite;
  else if (v.is_number())
    p.v = v.get<double>();
  else
    throw MalformedPayload("v must be a number");

  const auto& seq = doc["seq"];
  if (!seq.is_number_unsigned()) {
    if (!(seq.is_number_integer() && seq.get<std::int64_t>() >= 0))
      throw MalformedPayload("seq must be an unsigned integer");
  }
  p.seq = seq.get<std::uint64_t>();

  const auto& unit = doc["unit"];
  if (!unit.is_string()) throw MalformedPayload("unit must be a string");
  p.unit = unit.get<std::string>();
  return p;
}

}  // namespace paveh::wire
