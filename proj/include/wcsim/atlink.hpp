#pragma once

// Serial AT-command link: the command grammar, a modem emulator that bridges
// the payload phase to a TCP peer, the controller-side upload driver and the
// HTTP update request it sends.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "firmware.hpp"
#include "iso8601.hpp"
#include "query.hpp"

namespace wcsim::at {

// ---------------------------------------------------------------------------
// Grammar
// ---------------------------------------------------------------------------

inline constexpr std::size_t kMaxSendLength = 2048;

struct Ping {
  bool operator==(const Ping&) const = default;
};
struct Reset {
  bool operator==(const Reset&) const = default;
};
struct SetStationMode {
  bool operator==(const SetStationMode&) const = default;
};
struct Join {
  std::string ssid;
  std::string password;
  bool operator==(const Join&) const = default;
};
struct Connect {
  std::string host;
  int port = 0;
  bool operator==(const Connect&) const = default;
};
struct Send {
  std::size_t length = 0;
  bool operator==(const Send&) const = default;
};
struct Close {
  bool operator==(const Close&) const = default;
};

using Command = std::variant<Ping, Reset, SetStationMode, Join, Connect, Send, Close>;

namespace detail {

// "..." where \" \, and \\ stand for the literal character, as the modem
// firmware expects for SSIDs and passwords. Advances `s` past the closing quote.
inline std::optional<std::string> take_quoted(std::string_view& s) {
  if (s.empty() || s.front() != '"') return std::nullopt;
  std::string out;
  for (std::size_t i = 1; i < s.size(); ++i) {
    const char c = s[i];
    if (c == '"') {
      s.remove_prefix(i + 1);
      return out;
    }
    if (c == '\\') {
      if (i + 1 >= s.size()) return std::nullopt;
      const char n = s[++i];
      if (n != '"' && n != ',' && n != '\\') return std::nullopt;
      out += n;
    } else {
      out += c;
    }
  }
  return std::nullopt;
}

inline std::string quote(const std::string& v) {
  std::string out = "\"";
  for (char c : v) {
    if (c == '\r' || c == '\n') throw std::invalid_argument("AT string argument contains a line break");
    if (c == '"' || c == ',' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

inline bool take_literal(std::string_view& s, std::string_view lit) {
  if (!s.starts_with(lit)) return false;
  s.remove_prefix(lit.size());
  return true;
}

inline std::optional<std::size_t> whole_decimal(std::string_view s, std::size_t max) {
  if (s.empty() || s.size() > 5) return std::nullopt;
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || v > max) return std::nullopt;
  return v;
}

}  // namespace detail

/// Parses one CRLF-terminated command line. nullopt is a syntax error.
inline std::optional<Command> parse_at_line(std::string_view line) {
  if (!line.ends_with("\r\n")) return std::nullopt;
  line.remove_suffix(2);
  if (line.find_first_of("\r\n") != std::string_view::npos) return std::nullopt;

  if (line == "AT") return Ping{};
  if (line == "AT+RST") return Reset{};
  if (line == "AT+CWMODE=1") return SetStationMode{};
  if (line == "AT+CIPCLOSE") return Close{};

  std::string_view rest = line;
  if (detail::take_literal(rest, "AT+CWJAP=")) {
    auto ssid = detail::take_quoted(rest);
    if (!ssid || !detail::take_literal(rest, ",")) return std::nullopt;
    auto pass = detail::take_quoted(rest);
    if (!pass || !rest.empty()) return std::nullopt;
    return Join{*ssid, *pass};
  }
  if (detail::take_literal(rest, "AT+CIPSTART=")) {
    if (!detail::take_literal(rest, "\"TCP\",")) return std::nullopt;
    auto host = detail::take_quoted(rest);
    if (!host || host->empty() || !detail::take_literal(rest, ",")) return std::nullopt;
    auto port = detail::whole_decimal(rest, 65535);
    if (!port || *port == 0) return std::nullopt;
    return Connect{*host, static_cast<int>(*port)};
  }
  if (detail::take_literal(rest, "AT+CIPSEND=")) {
    auto n = detail::whole_decimal(rest, kMaxSendLength);
    if (!n || *n == 0) return std::nullopt;
    return Send{*n};
  }
  return std::nullopt;
}

inline std::string serialize(const Command& cmd) {
  struct Visitor {
    std::string operator()(const Ping&) const { return "AT\r\n"; }
    std::string operator()(const Reset&) const { return "AT+RST\r\n"; }
    std::string operator()(const SetStationMode&) const { return "AT+CWMODE=1\r\n"; }
    std::string operator()(const Join& j) const {
      return "AT+CWJAP=" + detail::quote(j.ssid) + "," + detail::quote(j.password) + "\r\n";
    }
    std::string operator()(const Connect& c) const {
      return "AT+CIPSTART=\"TCP\"," + detail::quote(c.host) + "," + std::to_string(c.port) + "\r\n";
    }
    std::string operator()(const Send& s) const {
      return "AT+CIPSEND=" + std::to_string(s.length) + "\r\n";
    }
    std::string operator()(const Close&) const { return "AT+CIPCLOSE\r\n"; }
  };
  return std::visit(Visitor{}, cmd);
}

// ---------------------------------------------------------------------------
// Events and transport
// ---------------------------------------------------------------------------

enum class Direction { to_modem, from_modem };
enum class AtEventKind { command, response, prompt, payload, ipd };

inline const char* to_string(AtEventKind k) {
  switch (k) {
    case AtEventKind::command: return "command";
    case AtEventKind::response: return "response";
    case AtEventKind::prompt: return "prompt";
    case AtEventKind::payload: return "payload";
    case AtEventKind::ipd: return "ipd";
  }
  return "?";
}

struct AtEvent {
  Direction direction = Direction::from_modem;
  AtEventKind kind = AtEventKind::response;
  std::string bytes;

  bool operator==(const AtEvent&) const = default;
};

/// The modem's TCP client socket.
class TcpLink {
 public:
  virtual ~TcpLink() = default;
  virtual bool connect(const std::string& host, int port) = 0;
  virtual bool send(std::string_view bytes) = 0;
  /// Inbound chunks read until the peer closes or the read times out.
  virtual std::vector<std::string> receive() = 0;
  virtual void close() = 0;
};

struct WifiCredentials {
  std::string ssid;
  std::string password;
};

// ---------------------------------------------------------------------------
// Modem emulator
// ---------------------------------------------------------------------------

enum class Phase { Idle, WifiJoined, TcpOpen, AwaitPayload };

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::Idle: return "Idle";
    case Phase::WifiJoined: return "WifiJoined";
    case Phase::TcpOpen: return "TcpOpen";
    case Phase::AwaitPayload: return "AwaitPayload";
  }
  return "?";
}

struct ModemState {
  Phase phase = Phase::Idle;
  std::size_t pending = 0;  // payload octets still expected in AwaitPayload

  bool operator==(const ModemState&) const = default;
};

class ModemEmulator {
 public:
  ModemEmulator(WifiCredentials network, TcpLink& tcp) : network_(std::move(network)), tcp_(tcp) {}

  const ModemState& state() const { return state_; }

  /// Applies one parsed command. Commands not legal in the current phase reply
  /// ERROR and leave the state untouched.
  std::vector<AtEvent> step(const Command& cmd) {
    std::vector<AtEvent> out;
    const Phase p = state_.phase;
    if (p == Phase::AwaitPayload) {
      reply(out, "ERROR");
      return out;
    }

    if (std::holds_alternative<Ping>(cmd)) {
      reply(out, "OK");
    } else if (std::holds_alternative<Reset>(cmd)) {
      if (p == Phase::TcpOpen) tcp_.close();
      state_ = {};
      reply(out, "OK");
      reply(out, "ready");
    } else if (std::holds_alternative<SetStationMode>(cmd)) {
      if (p == Phase::TcpOpen) return error(out);
      reply(out, "OK");
    } else if (auto* j = std::get_if<Join>(&cmd)) {
      if (p == Phase::TcpOpen) return error(out);
      if (j->ssid == network_.ssid && j->password == network_.password) {
        state_.phase = Phase::WifiJoined;
        reply(out, "WIFI CONNECTED");
        reply(out, "WIFI GOT IP");
        reply(out, "OK");
      } else {
        state_.phase = Phase::Idle;
        reply(out, "FAIL");
      }
    } else if (auto* c = std::get_if<Connect>(&cmd)) {
      if (p != Phase::WifiJoined) return error(out);
      if (!tcp_.connect(c->host, c->port)) return error(out);
      state_.phase = Phase::TcpOpen;
      reply(out, "CONNECT");
      reply(out, "OK");
    } else if (auto* s = std::get_if<Send>(&cmd)) {
      if (p != Phase::TcpOpen) return error(out);
      state_ = {Phase::AwaitPayload, s->length};
      payload_.clear();
      reply(out, "OK");
      out.push_back({Direction::from_modem, AtEventKind::prompt, "> "});
    } else if (std::holds_alternative<Close>(cmd)) {
      if (p != Phase::TcpOpen) return error(out);
      tcp_.close();
      state_.phase = Phase::WifiJoined;
      reply(out, "CLOSED");
      reply(out, "OK");
    }
    return out;
  }

  /// Raw serial input: command lines, or payload octets while a send is pending.
  std::vector<AtEvent> feed(std::string_view bytes) {
    std::vector<AtEvent> out;
    while (!bytes.empty()) {
      if (state_.phase == Phase::AwaitPayload) {
        const std::size_t n = std::min(state_.pending, bytes.size());
        payload_.append(bytes.substr(0, n));
        bytes.remove_prefix(n);
        state_.pending -= n;
        if (state_.pending == 0) forward_payload(out);
        continue;
      }
      line_.push_back(bytes.front());
      bytes.remove_prefix(1);
      if (line_.ends_with("\r\n")) {
        std::string line = std::move(line_);
        line_.clear();
        if (line == "\r\n") continue;
        auto cmd = parse_at_line(line);
        auto emitted = cmd ? step(*cmd) : error_events();
        out.insert(out.end(), emitted.begin(), emitted.end());
      }
    }
    return out;
  }

 private:
  static void reply(std::vector<AtEvent>& out, std::string_view line) {
    out.push_back({Direction::from_modem, AtEventKind::response, std::string(line) + "\r\n"});
  }
  static std::vector<AtEvent>& error(std::vector<AtEvent>& out) {
    reply(out, "ERROR");
    return out;
  }
  static std::vector<AtEvent> error_events() {
    std::vector<AtEvent> out;
    reply(out, "ERROR");
    return out;
  }

  void forward_payload(std::vector<AtEvent>& out) {
    const bool ok = tcp_.send(payload_);
    payload_.clear();
    if (!ok) {
      tcp_.close();
      state_ = {Phase::WifiJoined, 0};
      reply(out, "SEND FAIL");
      return;
    }
    state_ = {Phase::TcpOpen, 0};
    reply(out, "SEND OK");
    for (auto& chunk : tcp_.receive()) {
      if (chunk.empty()) continue;
      out.push_back({Direction::from_modem, AtEventKind::ipd,
                     "+IPD," + std::to_string(chunk.size()) + ":" + chunk});
    }
  }

  WifiCredentials network_;
  TcpLink& tcp_;
  ModemState state_;
  std::string line_;
  std::string payload_;
};

// ---------------------------------------------------------------------------
// Update request
// ---------------------------------------------------------------------------

inline bool valid_api_key(std::string_view key) {
  return key.size() == 16 && std::all_of(key.begin(), key.end(), [](char c) {
           return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
         });
}

inline std::string fixed2(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

/// Query fields for one vitals sample: field1 hr, field2 sys, field3 dia,
/// field4 temp, field5 steps, field6 distance; absent values are omitted.
inline QueryPairs update_fields(const VitalsSample& s, EpochMillis epoch) {
  QueryPairs q;
  if (s.heart_rate) q.emplace_back("field1", std::to_string(*s.heart_rate));
  q.emplace_back("field2", std::to_string(s.sys));
  q.emplace_back("field3", std::to_string(s.dia));
  q.emplace_back("field4", fixed2(s.temp));
  q.emplace_back("field5", std::to_string(s.steps));
  if (s.distance) q.emplace_back("field6", fixed2(*s.distance));
  q.emplace_back("created_at", format_iso8601(epoch + s.t));
  return q;
}

inline std::string build_update_request(const VitalsSample& s, std::string_view api_key,
                                        std::string_view host,
                                        EpochMillis epoch = kDefaultScenarioEpoch) {
  if (!valid_api_key(api_key))
    throw std::invalid_argument("api key must be 16 alphanumeric characters");
  std::string target = "/update?api_key=" + std::string(api_key);
  for (const auto& [k, v] : update_fields(s, epoch)) target += "&" + k + "=" + url_encode(v);
  return "GET " + target + " HTTP/1.1\r\nHost: " + std::string(host) +
         "\r\nConnection: close\r\n\r\n";
}

// ---------------------------------------------------------------------------
// Controller-side driver
// ---------------------------------------------------------------------------

enum class UploadStep { Ping, Mode, Join, Connect, Send, Payload, Response, Close };

inline const char* to_string(UploadStep s) {
  switch (s) {
    case UploadStep::Ping: return "Ping";
    case UploadStep::Mode: return "Mode";
    case UploadStep::Join: return "Join";
    case UploadStep::Connect: return "Connect";
    case UploadStep::Send: return "Send";
    case UploadStep::Payload: return "Payload";
    case UploadStep::Response: return "Response";
    case UploadStep::Close: return "Close";
  }
  return "?";
}

enum class UploadStatus { Accepted, Rejected, TransportError };

inline const char* to_string(UploadStatus s) {
  switch (s) {
    case UploadStatus::Accepted: return "accepted";
    case UploadStatus::Rejected: return "rejected";
    case UploadStatus::TransportError: return "transport_error";
  }
  return "?";
}

struct UploadResult {
  UploadStatus status = UploadStatus::TransportError;
  std::int64_t entry_id = 0;
  std::optional<UploadStep> failed_step;
  std::string detail;
};

struct UploadConfig {
  WifiCredentials wifi;
  std::string host = "127.0.0.1";
  int port = 0;
  std::string api_key;
  EpochMillis epoch = kDefaultScenarioEpoch;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Minimal status-line + body split; the body runs to the end of the bytes received.
inline std::optional<HttpResponse> parse_http_response(std::string_view raw) {
  if (!raw.starts_with("HTTP/1.")) return std::nullopt;
  auto sp = raw.find(' ');
  if (sp == std::string_view::npos || sp + 4 > raw.size()) return std::nullopt;
  int code = 0;
  auto [ptr, ec] = std::from_chars(raw.data() + sp + 1, raw.data() + sp + 4, code);
  if (ec != std::errc() || ptr != raw.data() + sp + 4) return std::nullopt;
  auto split = raw.find("\r\n\r\n");
  if (split == std::string_view::npos) return std::nullopt;
  return HttpResponse{code, std::string(raw.substr(split + 4))};
}

class AtDriver {
 public:
  AtDriver(ModemEmulator& modem, UploadConfig cfg) : modem_(modem), cfg_(std::move(cfg)) {}

  /// Every event exchanged since the last call to take_transcript().
  std::vector<AtEvent> take_transcript() { return std::exchange(transcript_, {}); }

  bool joined() const { return joined_; }

  UploadResult upload(const VitalsSample& sample) {
    if (!joined_) {
      if (!expect_ok(Ping{})) return fail(UploadStep::Ping);
      if (!expect_ok(SetStationMode{})) return fail(UploadStep::Mode);
      if (!expect_ok(Join{cfg_.wifi.ssid, cfg_.wifi.password})) return fail(UploadStep::Join);
      joined_ = true;
    }

    if (!expect_ok(Connect{cfg_.host, cfg_.port})) {
      // A failed connect may mean the association dropped; rejoin on the next cycle.
      joined_ = modem_.state().phase == Phase::WifiJoined;
      return fail(UploadStep::Connect);
    }

    const std::string host_header = cfg_.host + ":" + std::to_string(cfg_.port);
    const std::string request = build_update_request(sample, cfg_.api_key, host_header, cfg_.epoch);
    if (request.size() > kMaxSendLength) {
      expect_ok(Close{});
      return fail(UploadStep::Send, "request exceeds 2048 octets");
    }

    auto sent = command(Send{request.size()});
    if (sent.empty() || sent.back().kind != AtEventKind::prompt) return fail(UploadStep::Send);

    transcript_.push_back({Direction::to_modem, AtEventKind::payload, request});
    auto reply = modem_.feed(request);
    record(reply);
    bool send_ok = false;
    std::string inbound;
    for (const auto& ev : reply) {
      if (ev.kind == AtEventKind::response && ev.bytes == "SEND OK\r\n") send_ok = true;
      if (ev.kind == AtEventKind::ipd) inbound += ipd_data(ev.bytes);
    }
    if (!send_ok) {
      joined_ = modem_.state().phase != Phase::Idle;
      return fail(UploadStep::Payload);
    }

    const bool closed = expect_ok(Close{});
    auto response = parse_http_response(inbound);
    if (!response || response->status != 200)
      return fail(UploadStep::Response, response ? "HTTP " + std::to_string(response->status)
                                                 : "no HTTP response");
    if (!closed) return fail(UploadStep::Close);

    std::int64_t id = 0;
    std::string body = response->body;
    while (!body.empty() && (body.back() == '\n' || body.back() == '\r' || body.back() == ' '))
      body.pop_back();
    auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), id);
    if (ec != std::errc() || ptr != body.data() + body.size() || id < 0)
      return fail(UploadStep::Response, "non-numeric body");

    UploadResult r;
    r.entry_id = id;
    r.status = id > 0 ? UploadStatus::Accepted : UploadStatus::Rejected;
    return r;
  }

 private:
  static std::string ipd_data(const std::string& frame) {
    auto colon = frame.find(':');
    return colon == std::string::npos ? std::string() : frame.substr(colon + 1);
  }

  void record(const std::vector<AtEvent>& evs) {
    transcript_.insert(transcript_.end(), evs.begin(), evs.end());
  }

  std::vector<AtEvent> command(const Command& cmd) {
    const std::string line = serialize(cmd);
    transcript_.push_back({Direction::to_modem, AtEventKind::command, line});
    auto reply = modem_.feed(line);
    record(reply);
    return reply;
  }

  bool expect_ok(const Command& cmd) {
    auto reply = command(cmd);
    return !reply.empty() && reply.back().bytes == "OK\r\n";
  }

  UploadResult fail(UploadStep step, std::string detail = {}) {
    UploadResult r;
    r.status = UploadStatus::TransportError;
    r.failed_step = step;
    r.detail = detail.empty() ? std::string("step ") + to_string(step) + " failed" : detail;
    return r;
  }

  ModemEmulator& modem_;
  UploadConfig cfg_;
  bool joined_ = false;
  std::vector<AtEvent> transcript_;
};

}  // namespace wcsim::at
