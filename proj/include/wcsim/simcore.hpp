#pragma once

// Virtual clock, seeded random source and the canonical NDJSON event trace.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace wcsim {

using Millis = std::int64_t;

// ---------------------------------------------------------------------------
// SimClock
// ---------------------------------------------------------------------------

class SimClock {
 public:
  explicit SimClock(Millis tick_len = 10) : tick_len_(tick_len) {
    if (tick_len <= 0) throw std::invalid_argument("tick_len must be positive");
  }

  Millis now() const { return now_; }
  Millis tick_len() const { return tick_len_; }

  void advance() { now_ += tick_len_; }

 private:
  Millis now_ = 0;
  Millis tick_len_;
};

// ---------------------------------------------------------------------------
// Rng: splitmix64. Never change the constants; traces depend on them.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // 53 random mantissa bits -> [0, 1).
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double next_uniform(double lo, double hi) {
    if (lo > hi) throw std::invalid_argument("next_uniform: lo > hi");
    if (lo == hi) return lo;
    double v = lo + (hi - lo) * next_unit();
    return v < hi ? v : lo;  // guard against rounding up to hi
  }

  // Independent stream derived from this generator's seed and a fixed label.
  // Forking does not consume from the parent stream.
  Rng fork(std::string_view label) const {
    std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a 64
    for (unsigned char c : label) {
      h ^= c;
      h *= 0x100000001B3ULL;
    }
    Rng mixer(seed_ ^ h);
    return Rng(mixer.next_u64());
  }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Trace
// ---------------------------------------------------------------------------

enum class EventKind { sensor, command, pins, at_tx, at_rx, http, pose, fsm };

inline std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::sensor: return "sensor";
    case EventKind::command: return "command";
    case EventKind::pins: return "pins";
    case EventKind::at_tx: return "at_tx";
    case EventKind::at_rx: return "at_rx";
    case EventKind::http: return "http";
    case EventKind::pose: return "pose";
    case EventKind::fsm: return "fsm";
  }
  return "?";
}

inline EventKind event_kind_from_string(std::string_view s) {
  static const std::pair<std::string_view, EventKind> table[] = {
      {"sensor", EventKind::sensor}, {"command", EventKind::command}, {"pins", EventKind::pins},
      {"at_tx", EventKind::at_tx},   {"at_rx", EventKind::at_rx},     {"http", EventKind::http},
      {"pose", EventKind::pose},     {"fsm", EventKind::fsm}};
  for (const auto& [name, kind] : table)
    if (name == s) return kind;
  throw std::invalid_argument("unknown event kind: " + std::string(s));
}

// Doubles are held at 1e-6 resolution so the fixed 6-decimal text form round-trips exactly.
inline double quantize6(double v) {
  if (!std::isfinite(v)) throw std::invalid_argument("trace values must be finite");
  return std::round(v * 1e6) / 1e6;
}

using TraceValue = std::variant<std::int64_t, double, std::string>;

struct TraceEvent {
  Millis t = 0;
  EventKind kind = EventKind::fsm;
  std::map<std::string, TraceValue> payload;

  TraceEvent& set(const std::string& key, std::int64_t v) {
    payload[key] = v;
    return *this;
  }
  TraceEvent& set(const std::string& key, int v) { return set(key, static_cast<std::int64_t>(v)); }
  TraceEvent& set(const std::string& key, double v) {
    payload[key] = quantize6(v);
    return *this;
  }
  TraceEvent& set(const std::string& key, std::string v) {
    payload[key] = std::move(v);
    return *this;
  }
  TraceEvent& set(const std::string& key, const char* v) { return set(key, std::string(v)); }

  bool operator==(const TraceEvent&) const = default;
};

inline std::string format_fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  std::string s(buf);
  if (s == "-0.000000") s = "0.000000";
  return s;
}

// {"t":N,"kind":"K","payload":{sorted keys}}
inline std::string serialize(const TraceEvent& ev) {
  std::string out = "{\"t\":" + std::to_string(ev.t) + ",\"kind\":\"" +
                    std::string(to_string(ev.kind)) + "\",\"payload\":{";
  bool first = true;
  for (const auto& [key, value] : ev.payload) {
    if (!first) out += ',';
    first = false;
    out += nlohmann::json(key).dump();
    out += ':';
    std::visit(
        [&out](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, std::int64_t>) {
            out += std::to_string(v);
          } else if constexpr (std::is_same_v<T, double>) {
            out += format_fixed6(v);
          } else {
            out += nlohmann::json(v).dump();
          }
        },
        value);
  }
  out += "}}";
  return out;
}

inline TraceEvent parse_event(std::string_view line) {
  auto j = nlohmann::json::parse(line);
  if (!j.is_object() || !j.contains("t") || !j.contains("kind") || !j.contains("payload"))
    throw std::invalid_argument("trace line missing t/kind/payload");
  TraceEvent ev;
  ev.t = j.at("t").get<Millis>();
  ev.kind = event_kind_from_string(j.at("kind").get<std::string>());
  for (const auto& [key, v] : j.at("payload").items()) {
    if (v.is_number_integer())
      ev.payload[key] = v.get<std::int64_t>();
    else if (v.is_number_float())
      ev.payload[key] = v.get<double>();
    else if (v.is_string())
      ev.payload[key] = v.get<std::string>();
    else
      throw std::invalid_argument("unsupported payload value for key " + key);
  }
  return ev;
}

class Trace {
 public:
  void emit(TraceEvent ev) {
    if (!events_.empty() && ev.t < events_.back().t)
      throw std::logic_error("trace event at t=" + std::to_string(ev.t) +
                             " precedes last event t=" + std::to_string(events_.back().t));
    events_.push_back(std::move(ev));
  }

  const std::vector<TraceEvent>& events() const { return events_; }
  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }

  std::string to_ndjson() const {
    std::string out;
    for (const auto& ev : events_) {
      out += serialize(ev);
      out += '\n';
    }
    return out;
  }

  static Trace from_ndjson(std::string_view text) {
    Trace tr;
    std::size_t pos = 0;
    while (pos < text.size()) {
      auto nl = text.find('\n', pos);
      auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
      if (!line.empty()) tr.emit(parse_event(line));
      if (nl == std::string_view::npos) break;
      pos = nl + 1;
    }
    return tr;
  }

  bool operator==(const Trace&) const = default;

 private:
  std::vector<TraceEvent> events_;
};

}  // namespace wcsim
