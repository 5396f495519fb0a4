#pragma once

// The controller program: sampling schedule, vital-sign detectors, joystick
// mapping, obstacle-stop state machine, pin encoding and the 16x2 display.

#include <array>
#include <cmath>
#include <cstdio>
#include <deque>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include "devices.hpp"
#include "world.hpp"

namespace wcsim {

// ---------------------------------------------------------------------------
// Distance decode: L = v * t * cos(theta) / 2
// ---------------------------------------------------------------------------

inline std::optional<double> decode_distance(const EchoReading& echo, double v_sound, double theta) {
  if (!(v_sound > 0.0)) throw std::invalid_argument("decode_distance: v_sound must be > 0");
  if (!echo) return std::nullopt;
  const double l = v_sound * *echo * std::cos(theta) / 2.0;
  if (l > kSensorMaxRange) return std::nullopt;
  return l;
}

// ---------------------------------------------------------------------------
// Heart rate from PPG threshold crossings
// ---------------------------------------------------------------------------

class BeatDetector {
 public:
  static constexpr double kThreshold = 0.5;
  static constexpr Millis kRefractoryMs = 300;
  static constexpr std::size_t kIbiWindow = 5;

  /// Returns the current rate estimate (bpm) when a beat is detected on this sample.
  std::optional<double> update(const PpgSample& s) {
    const bool above = s.amplitude >= kThreshold;
    const bool rising = above && !was_above_;
    was_above_ = above;
    if (!rising) return std::nullopt;
    if (last_beat_ && s.t - *last_beat_ < kRefractoryMs) return std::nullopt;

    if (last_beat_) {
      ibis_.push_back(s.t - *last_beat_);
      if (ibis_.size() > kIbiWindow) ibis_.pop_front();
    }
    last_beat_ = s.t;
    ++beats_;
    if (ibis_.empty()) return std::nullopt;
    const double mean_ibi =
        static_cast<double>(std::accumulate(ibis_.begin(), ibis_.end(), Millis{0})) /
        static_cast<double>(ibis_.size());
    bpm_ = std::clamp(60000.0 / mean_ibi, 30.0, 220.0);
    return bpm_;
  }

  std::optional<double> bpm() const { return bpm_; }
  int beats() const { return beats_; }

 private:
  bool was_above_ = false;
  std::optional<Millis> last_beat_;
  std::deque<Millis> ibis_;
  std::optional<double> bpm_;
  int beats_ = 0;
};

// ---------------------------------------------------------------------------
// Pedometer
// ---------------------------------------------------------------------------

class StepCounter {
 public:
  static constexpr double kThresholdG = 0.3;
  static constexpr Millis kRefractoryMs = 250;

  /// Returns true when this sample registers a new step.
  bool update(const AccelSample& s) {
    const double m = std::sqrt(s.ax * s.ax + s.ay * s.ay + s.az * s.az);
    const bool above = (m - 1.0) > kThresholdG;
    const bool rising = above && !was_above_;
    was_above_ = above;
    if (!rising) return false;
    if (last_step_ && s.t - *last_step_ < kRefractoryMs) return false;
    last_step_ = s.t;
    ++steps_;
    return true;
  }

  std::int64_t steps() const { return steps_; }

 private:
  bool was_above_ = false;
  std::optional<Millis> last_step_;
  std::int64_t steps_ = 0;
};

inline double mv_to_celsius(const AnalogReading& r) {
  if (r.channel != AnalogChannel::temp_mv)
    throw std::invalid_argument("mv_to_celsius: reading is not on the temperature channel");
  return static_cast<double>(r.value) / kLm35MvPerC;
}

// ---------------------------------------------------------------------------
// Joystick -> command
// ---------------------------------------------------------------------------

inline constexpr int kJoystickCenter = 512;
inline constexpr double kDeadzoneCounts = 100.0;

inline MotorCommand map_joystick(int x, int y) {
  if (x < 0 || x > kAdcMax || y < 0 || y > kAdcMax)
    throw std::invalid_argument("map_joystick: ADC counts out of [0, 1023]");
  const int dx = x - kJoystickCenter;
  const int dy = y - kJoystickCenter;
  if (std::hypot(dx, dy) < kDeadzoneCounts) return MotorCommand::Stop;
  if (std::abs(dy) >= std::abs(dx)) return dy > 0 ? MotorCommand::Forward : MotorCommand::Reverse;
  return dx > 0 ? MotorCommand::TurnRight : MotorCommand::TurnLeft;
}

// ---------------------------------------------------------------------------
// Obstacle stop with hysteresis
// ---------------------------------------------------------------------------

inline constexpr double kStopDistance = 0.30;
inline constexpr double kReleaseDistance = 0.45;

enum class SafetyMode { Free, Blocked };

struct SafetyState {
  SafetyMode mode = SafetyMode::Free;
  std::optional<double> last_distance;

  bool blocked() const { return mode == SafetyMode::Blocked; }
};

inline std::pair<SafetyState, MotorCommand> safety_gate(SafetyState s, std::optional<double> distance,
                                                        MotorCommand cmd) {
  s.last_distance = distance;
  if (s.mode == SafetyMode::Free) {
    if (distance && *distance < kStopDistance) s.mode = SafetyMode::Blocked;
  } else if (!distance || *distance >= kReleaseDistance) {
    s.mode = SafetyMode::Free;
  }
  if (s.mode == SafetyMode::Blocked && cmd != MotorCommand::Reverse) cmd = MotorCommand::Stop;
  return {s, cmd};
}

// ---------------------------------------------------------------------------
// Command -> L293D pins (EN1, IN1, IN2, EN2, IN3, IN4); motor 1 is the left wheel.
// ---------------------------------------------------------------------------

inline PinFrame command_to_pins(MotorCommand cmd) {
  switch (cmd) {
    case MotorCommand::Forward: return {1, 1, 0, 1, 1, 0};
    case MotorCommand::Reverse: return {1, 0, 1, 1, 0, 1};
    case MotorCommand::TurnLeft: return {1, 0, 1, 1, 1, 0};
    case MotorCommand::TurnRight: return {1, 1, 0, 1, 0, 1};
    case MotorCommand::Stop: return {1, 0, 0, 1, 0, 0};
  }
  return {1, 0, 0, 1, 0, 0};
}

// ---------------------------------------------------------------------------
// Vitals + display
// ---------------------------------------------------------------------------

struct VitalsSample {
  Millis t = 0;
  std::optional<int> heart_rate;
  int sys = 0;
  int dia = 0;
  double temp = 0.0;
  std::int64_t steps = 0;
  std::optional<double> distance;
};

using DisplayLines = std::array<std::string, 2>;

inline std::string fit16(std::string s) {
  s.resize(16, ' ');
  return s;
}

inline DisplayLines format_display(const VitalsSample& v, const SafetyState& s) {
  char buf[64];
  std::string line1;
  if (v.heart_rate)
    std::snprintf(buf, sizeof buf, "HR:%03d T:%04.1fC", *v.heart_rate, v.temp);
  else
    std::snprintf(buf, sizeof buf, "HR:--- T:%04.1fC", v.temp);
  line1 = fit16(buf);
  if (s.blocked()) line1[15] = '!';

  std::snprintf(buf, sizeof buf, "BP:%03d/%03d S:%05lld", v.sys, v.dia,
                static_cast<long long>(v.steps));
  return {line1, fit16(buf)};
}

// ---------------------------------------------------------------------------
// Control loop
// ---------------------------------------------------------------------------

/// Sampling periods in milliseconds.
struct Schedule {
  Millis ppg = 10;
  Millis accel = 20;
  Millis joystick = 20;
  Millis ultrasonic = 100;
  Millis temp = 1000;
  Millis bp = 60000;
  Millis upload = 15000;

  static bool due(Millis now, Millis period) { return now % period == 0; }
};

/// Samples the device layer produced for this tick; absent means not sampled.
struct DeviceInputs {
  std::optional<PpgSample> ppg;
  std::optional<AccelSample> accel;
  std::optional<std::pair<AnalogReading, AnalogReading>> joystick;
  std::optional<EchoReading> echo;
  std::optional<AnalogReading> temp;
  std::optional<BpReading> bp;
};

struct FirmwareConfig {
  Millis tick_len = 10;
  double v_sound = 343.0;
  double theta = 0.0;
  std::size_t temp_window = 10;
  Schedule schedule;
};

struct TickOutput {
  MotorCommand requested = MotorCommand::Stop;
  MotorCommand command = MotorCommand::Stop;
  PinFrame pins = command_to_pins(MotorCommand::Stop);
  std::optional<VitalsSample> upload;
  DisplayLines display;

  // Diagnostics for the trace.
  std::optional<double> beat_bpm;
  bool beat = false;
  bool step = false;
  bool distance_updated = false;
  std::optional<SafetyMode> safety_transition;
};

class Firmware {
 public:
  explicit Firmware(FirmwareConfig cfg = {}) : cfg_(cfg) {
    if (cfg_.tick_len <= 0) throw std::invalid_argument("tick_len must be positive");
  }

  const FirmwareConfig& config() const { return cfg_; }

  bool ppg_due(Millis now) const { return Schedule::due(now, cfg_.schedule.ppg); }
  bool accel_due(Millis now) const { return Schedule::due(now, cfg_.schedule.accel); }
  bool joystick_due(Millis now) const { return Schedule::due(now, cfg_.schedule.joystick); }
  bool ultrasonic_due(Millis now) const { return Schedule::due(now, cfg_.schedule.ultrasonic); }
  bool temp_due(Millis now) const { return Schedule::due(now, cfg_.schedule.temp); }
  bool bp_due(Millis now) const { return Schedule::due(now, cfg_.schedule.bp); }
  bool upload_due(Millis now) const {
    return Schedule::due(now + cfg_.tick_len, cfg_.schedule.upload);
  }

  TickOutput tick(Millis now, const DeviceInputs& in) {
    if (last_tick_ && now <= *last_tick_) throw std::logic_error("firmware tick time must increase");
    last_tick_ = now;
    TickOutput out;

    if (in.ppg) {
      if (auto bpm = beats_.update(*in.ppg)) {
        out.beat = true;
        out.beat_bpm = bpm;
      } else if (beats_.beats() > beats_seen_) {
        out.beat = true;
      }
      beats_seen_ = beats_.beats();
    }
    if (in.accel) out.step = steps_.update(*in.accel);
    if (in.joystick) joystick_ = {in.joystick->first.value, in.joystick->second.value};
    if (in.echo) {
      distance_ = decode_distance(*in.echo, cfg_.v_sound, cfg_.theta);
      out.distance_updated = true;
    }
    if (in.temp) {
      temps_.push_back(mv_to_celsius(*in.temp));
      if (temps_.size() > cfg_.temp_window) temps_.pop_front();
    }
    if (in.bp) bp_ = *in.bp;

    out.requested = map_joystick(joystick_.first, joystick_.second);
    const auto before = safety_.mode;
    std::tie(safety_, out.command) = safety_gate(safety_, distance_, out.requested);
    if (safety_.mode != before) out.safety_transition = safety_.mode;
    out.pins = command_to_pins(out.command);

    const VitalsSample v = vitals(now);
    out.display = format_display(v, safety_);
    if (upload_due(now)) {
      out.upload = v;
      out.upload->t = now + cfg_.tick_len;
    }
    return out;
  }

  VitalsSample vitals(Millis now) const {
    VitalsSample v;
    v.t = now;
    if (auto bpm = beats_.bpm()) v.heart_rate = static_cast<int>(std::lround(*bpm));
    v.sys = bp_.systolic;
    v.dia = bp_.diastolic;
    if (!temps_.empty())
      v.temp = std::accumulate(temps_.begin(), temps_.end(), 0.0) / static_cast<double>(temps_.size());
    v.steps = steps_.steps();
    v.distance = distance_;
    return v;
  }

  const SafetyState& safety() const { return safety_; }
  std::optional<double> distance() const { return distance_; }

 private:
  FirmwareConfig cfg_;
  std::optional<Millis> last_tick_;
  BeatDetector beats_;
  int beats_seen_ = 0;
  StepCounter steps_;
  std::pair<int, int> joystick_{kJoystickCenter, kJoystickCenter};
  std::optional<double> distance_;
  std::deque<double> temps_;
  BpReading bp_;
  SafetyState safety_;
};

}  // namespace wcsim
