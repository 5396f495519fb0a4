#pragma once

// Offline trace checker: recomputes the run's invariants from the NDJSON alone.

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "firmware.hpp"
#include "simcore.hpp"

namespace wcsim {

struct CheckResult {
  std::string name;
  bool passed = true;
  std::string detail;
};

struct ReplaySummary {
  std::vector<CheckResult> checks;
  std::vector<std::string> warnings;
  std::vector<std::string> corrupt_lines;  // "line N: reason"
  std::size_t events = 0;

  bool all_passed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return corrupt_lines.empty();
  }
};

namespace replay_detail {

inline const TraceValue* find(const TraceEvent& ev, const std::string& key) {
  auto it = ev.payload.find(key);
  return it == ev.payload.end() ? nullptr : &it->second;
}

inline std::optional<std::string> str(const TraceEvent& ev, const std::string& key) {
  if (auto* v = find(ev, key); v && std::holds_alternative<std::string>(*v))
    return std::get<std::string>(*v);
  return std::nullopt;
}

inline std::optional<double> num(const TraceEvent& ev, const std::string& key) {
  auto* v = find(ev, key);
  if (!v) return std::nullopt;
  if (auto* d = std::get_if<double>(v)) return *d;
  if (auto* i = std::get_if<std::int64_t>(v)) return static_cast<double>(*i);
  if (auto* s = std::get_if<std::string>(v)) {
    try {
      return std::stod(*s);
    } catch (...) {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

inline void fail(CheckResult& c, const std::string& why) {
  if (c.passed) c.detail = why;
  c.passed = false;
}

}  // namespace replay_detail

inline ReplaySummary replay_events(const std::vector<TraceEvent>& events, Millis tick_len_hint = 10) {
  using namespace replay_detail;
  ReplaySummary sum;
  sum.events = events.size();
  CheckResult safety{"safety_stop", true, ""}, hysteresis{"safety_hysteresis", true, ""},
      steps{"steps_monotone", true, ""}, hr{"heart_rate_range", true, ""},
      uploads{"upload_feed_match", true, ""}, time{"monotone_time", true, ""};

  if (events.empty()) sum.warnings.push_back("empty trace: all checks pass vacuously");

  Millis tick = tick_len_hint;
  const std::string forward = command_to_pins(MotorCommand::Forward).to_string();
  std::optional<double> distance;
  std::optional<Millis> close_since;
  std::string pins;
  Millis last_t = 0;
  std::int64_t last_steps = 0;
  std::int64_t last_entry = 0;
  int pending_uploads = 0;

  auto forward_violation = [&](Millis t) {
    if (pins == forward && distance && *distance < kStopDistance && close_since && t - *close_since > tick)
      fail(safety, "Forward pins at t=" + std::to_string(t) + " ms with decoded distance " +
                       std::to_string(*distance) + " m");
  };

  for (const auto& ev : events) {
    if (ev.t < last_t) fail(time, "t=" + std::to_string(ev.t) + " after t=" + std::to_string(last_t));
    // A pending close-range Forward frame becomes a violation once more than one tick has passed.
    forward_violation(ev.t);
    last_t = ev.t;

    const auto event = str(ev, "event");
    if (ev.kind == EventKind::fsm && event == "start") {
      if (auto t = num(ev, "tick_ms")) tick = static_cast<Millis>(*t);
    } else if (ev.kind == EventKind::sensor && str(ev, "device") == "ultrasonic") {
      distance = num(ev, "distance");
      const bool close = distance && *distance < kStopDistance;
      if (close && !close_since) close_since = ev.t;
      if (!close) close_since.reset();
    } else if (ev.kind == EventKind::pins) {
      pins = str(ev, "frame").value_or("");
      forward_violation(ev.t + tick + 1);
    } else if (ev.kind == EventKind::fsm && event == "safety") {
      if (str(ev, "state") == "Free") {
        auto d = num(ev, "distance");
        if (d && *d < kReleaseDistance)
          fail(hysteresis, "released at " + std::to_string(*d) + " m, t=" + std::to_string(ev.t));
      }
    } else if (ev.kind == EventKind::fsm && event == "safety_violation") {
      fail(safety, "run recorded a safety violation at t=" + std::to_string(ev.t));
    } else if (ev.kind == EventKind::fsm && (event == "step" || event == "upload")) {
      auto s = num(ev, event == "step" ? "steps" : "field5");
      if (s) {
        const auto v = static_cast<std::int64_t>(*s);
        if (v < last_steps) fail(steps, "steps fell to " + std::to_string(v) + " at t=" + std::to_string(ev.t));
        last_steps = std::max(last_steps, v);
      }
      if (event == "upload") {
        ++pending_uploads;
        if (auto h = num(ev, "field1"); h && (*h < 30 || *h > 220))
          fail(hr, "heart rate " + std::to_string(*h) + " at t=" + std::to_string(ev.t));
      }
    } else if (ev.kind == EventKind::http) {
      if (pending_uploads == 0) fail(uploads, "http result without upload at t=" + std::to_string(ev.t));
      else --pending_uploads;
      if (str(ev, "status") == "accepted") {
        const auto id = static_cast<std::int64_t>(num(ev, "entry_id").value_or(0));
        if (id <= last_entry)
          fail(uploads, "entry_id " + std::to_string(id) + " not increasing at t=" + std::to_string(ev.t));
        last_entry = id;
      }
    }
  }
  if (pending_uploads > 0) fail(uploads, std::to_string(pending_uploads) + " upload(s) without a result");

  sum.checks = {time, safety, hysteresis, steps, hr, uploads};
  return sum;
}

/// Parses line by line; corrupt lines are reported with their number and skipped.
inline ReplaySummary replay_text(const std::string& text) {
  std::vector<TraceEvent> events;
  std::vector<std::string> corrupt;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      events.push_back(parse_event(line));
    } catch (const std::exception& e) {
      corrupt.push_back("line " + std::to_string(n) + ": " + e.what());
    }
  }
  auto sum = replay_events(events);
  sum.corrupt_lines = std::move(corrupt);
  return sum;
}

inline ReplaySummary replay_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read trace " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return replay_text(text);
}

}  // namespace wcsim
