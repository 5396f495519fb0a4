#pragma once

// Device models: sensor signal generators on the input side, the L293D
// H-bridge latch on the output side.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>

#include "simcore.hpp"

namespace wcsim {

/// Per-device noise bounds (uniform, symmetric). `NoiseConfig::off()` zeroes all of them.
struct NoiseConfig {
  double ppg = 0.02;            // amplitude units
  double accel_g = 0.05;        // per axis
  double temp_mv = 2.0;
  int bp_mmhg = 4;
  double ultrasonic_m = 0.03;

  static NoiseConfig off() { return {0.0, 0.0, 0.0, 0, 0.0}; }
};

inline constexpr double kSensorMaxRange = 2.5;  // meters
inline constexpr int kAdcMax = 1023;

// ---------------------------------------------------------------------------
// Sample / reading types
// ---------------------------------------------------------------------------

struct PpgSample {
  Millis t = 0;
  double amplitude = 0.0;
};

struct AccelSample {
  Millis t = 0;
  double ax = 0.0, ay = 0.0, az = 0.0;  // g
};

enum class AnalogChannel { temp_mv, joy_x, joy_y };

struct AnalogReading {
  AnalogChannel channel = AnalogChannel::temp_mv;
  int value = 0;

  bool operator==(const AnalogReading&) const = default;
};

/// Echo round-trip time in seconds; nullopt is a receive timeout.
using EchoReading = std::optional<double>;

struct BpReading {
  int systolic = 120;
  int diastolic = 80;

  bool operator==(const BpReading&) const = default;
};

inline bool bp_valid(int sys, int dia) { return 40 <= dia && dia < sys && sys <= 260; }

enum class Gait { rest, walk };

struct OccupantProfile {
  double heart_rate_bpm = 75.0;
  double temp_c = 36.5;
  int bp_sys = 120;
  int bp_dia = 80;
  Gait gait = Gait::rest;
  double cadence = 0.0;  // steps/min, used when walking

  void validate() const {
    if (heart_rate_bpm < 30.0 || heart_rate_bpm > 220.0)
      throw std::invalid_argument("heart_rate_bpm out of [30, 220]");
    if (temp_c < 30.0 || temp_c > 45.0) throw std::invalid_argument("temp_c out of [30, 45]");
    if (!bp_valid(bp_sys, bp_dia))
      throw std::invalid_argument("bp must satisfy 40 <= dia < sys <= 260");
    if (gait == Gait::walk && (cadence < 60.0 || cadence > 180.0))
      throw std::invalid_argument("cadence out of [60, 180]");
  }
};

// ---------------------------------------------------------------------------
// PPG (MAX30100 stand-in)
// ---------------------------------------------------------------------------

inline constexpr double kPpgBaseline = 0.2;
inline constexpr double kPpgPeak = 1.0;
inline constexpr double kPpgPulseWidthMs = 200.0;

/// Raised-cosine pulse train: one 200 ms pulse per beat, starting at each beat onset.
inline PpgSample gen_ppg(Millis t, double occupant_hr, Rng& rng, double noise = 0.02) {
  if (occupant_hr < 30.0 || occupant_hr > 220.0)
    throw std::invalid_argument("gen_ppg: heart rate out of [30, 220]");
  const double period = 60000.0 / occupant_hr;
  const double tau = std::fmod(static_cast<double>(t), period);
  double a = kPpgBaseline;
  if (tau < kPpgPulseWidthMs) {
    const double shape = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * tau / kPpgPulseWidthMs));
    a += (kPpgPeak - kPpgBaseline) * shape;
  }
  if (noise > 0.0) a += rng.next_uniform(-noise, noise);
  return {t, std::clamp(a, 0.0, 1.0)};
}

// ---------------------------------------------------------------------------
// Accelerometer (MEMS stand-in)
// ---------------------------------------------------------------------------

inline AccelSample gen_accel(Millis t, Gait gait, double cadence, Rng& rng, double noise = 0.05) {
  double vertical = 1.0;
  if (gait == Gait::walk) {
    if (cadence < 60.0 || cadence > 180.0)
      throw std::invalid_argument("gen_accel: cadence out of [60, 180]");
    const double step_period_ms = 60000.0 / cadence;
    // Crests at (k + 1/2) periods, so a window of whole periods holds whole steps.
    const double phase = 2.0 * std::numbers::pi * (static_cast<double>(t) / step_period_ms - 0.5);
    vertical += 0.8 * std::max(0.0, std::cos(phase));
  }
  AccelSample s{t, 0.0, 0.0, vertical};
  if (noise > 0.0) {
    s.ax += rng.next_uniform(-noise, noise);
    s.ay += rng.next_uniform(-noise, noise);
    s.az += rng.next_uniform(-noise, noise);
  }
  return s;
}

// ---------------------------------------------------------------------------
// LM35: 10 mV/degC, reported in millivolts on a millivolt-calibrated channel.
// ---------------------------------------------------------------------------

inline constexpr double kLm35MvPerC = 10.0;

inline AnalogReading read_lm35(double temp_c, Rng& rng, double noise_mv = 2.0) {
  double mv = kLm35MvPerC * temp_c;
  if (noise_mv > 0.0) mv += rng.next_uniform(-noise_mv, noise_mv);
  const int v = static_cast<int>(std::lround(mv));
  return {AnalogChannel::temp_mv, std::clamp(v, 0, kAdcMax)};
}

// ---------------------------------------------------------------------------
// Blood pressure (digital paired reading)
// ---------------------------------------------------------------------------

inline BpReading read_bp(int base_sys, int base_dia, Rng& rng, int noise = 4) {
  if (!bp_valid(base_sys, base_dia)) throw std::invalid_argument("read_bp: invalid baseline");
  if (noise <= 0) return {base_sys, base_dia};
  auto draw = [&](int base) {
    const double d = rng.next_uniform(-noise, noise + 1.0);  // integer offsets in [-noise, noise]
    const int v = base + static_cast<int>(std::floor(d));
    return std::clamp(v, 40, 260);
  };
  for (;;) {
    BpReading r{draw(base_sys), draw(base_dia)};
    if (r.systolic > r.diastolic) return r;
  }
}

// ---------------------------------------------------------------------------
// Joystick: two potentiometers
// ---------------------------------------------------------------------------

inline int joystick_axis_counts(double norm) {
  if (!(norm >= -1.0 && norm <= 1.0)) throw std::invalid_argument("joystick input out of [-1, 1]");
  const long v = std::lround(512.0 + 511.0 * norm);
  return std::clamp(static_cast<int>(v), 0, kAdcMax);
}

inline std::pair<AnalogReading, AnalogReading> read_joystick(double x_norm, double y_norm) {
  return {{AnalogChannel::joy_x, joystick_axis_counts(x_norm)},
          {AnalogChannel::joy_y, joystick_axis_counts(y_norm)}};
}

// ---------------------------------------------------------------------------
// Ultrasonic ranger
// ---------------------------------------------------------------------------

/// Inverts L = v*t*cos(theta)/2 to produce the echo time for a target at `distance`.
inline EchoReading ping_ultrasonic(std::optional<double> distance, double v_sound, double theta,
                                   Rng& rng, double noise_m = 0.03) {
  if (!(v_sound > 0.0)) throw std::invalid_argument("ping_ultrasonic: v_sound must be > 0");
  if (!(theta >= 0.0 && theta < std::numbers::pi / 2))
    throw std::invalid_argument("ping_ultrasonic: theta out of [0, pi/2)");
  if (!distance || *distance > kSensorMaxRange) return std::nullopt;
  double d = *distance;
  if (noise_m > 0.0) d += rng.next_uniform(-noise_m, noise_m);
  d = std::max(d, 1e-9);
  return 2.0 * d / (v_sound * std::cos(theta));
}

// ---------------------------------------------------------------------------
// L293D
// ---------------------------------------------------------------------------

struct PinFrame {
  int en1 = 0, in1 = 0, in2 = 0, en2 = 0, in3 = 0, in4 = 0;

  bool operator==(const PinFrame&) const = default;

  std::array<int, 6> as_array() const { return {en1, in1, in2, en2, in3, in4}; }

  static PinFrame from_bits(unsigned bits) {
    // bit 5 = en1 ... bit 0 = in4
    return {static_cast<int>((bits >> 5) & 1), static_cast<int>((bits >> 4) & 1),
            static_cast<int>((bits >> 3) & 1), static_cast<int>((bits >> 2) & 1),
            static_cast<int>((bits >> 1) & 1), static_cast<int>(bits & 1)};
  }

  std::string to_string() const {
    std::string s;
    for (int b : as_array()) s += static_cast<char>('0' + b);
    return s;
  }

  static PinFrame from_string(const std::string& s) {
    if (s.size() != 6) throw std::invalid_argument("pin frame must be 6 digits");
    unsigned bits = 0;
    for (char c : s) {
      if (c != '0' && c != '1') throw std::invalid_argument("pin frame digits must be 0/1");
      bits = (bits << 1) | static_cast<unsigned>(c - '0');
    }
    return from_bits(bits);
  }
};

enum class MotorMotion { coast, forward, reverse, brake };

/// Motor 1 (EN1/IN1/IN2) drives the left wheel, motor 2 (EN2/IN3/IN4) the right.
struct MotorDriveState {
  MotorMotion left = MotorMotion::coast;
  MotorMotion right = MotorMotion::coast;

  bool operator==(const MotorDriveState&) const = default;
};

inline MotorMotion h_bridge(int en, int a, int b) {
  if (!en) return MotorMotion::coast;
  if (a && !b) return MotorMotion::forward;
  if (!a && b) return MotorMotion::reverse;
  return MotorMotion::brake;
}

inline MotorDriveState latch_pins(const PinFrame& f) {
  for (int b : f.as_array())
    if (b != 0 && b != 1) throw std::invalid_argument("latch_pins: logic levels must be 0 or 1");
  return {h_bridge(f.en1, f.in1, f.in2), h_bridge(f.en2, f.in3, f.in4)};
}

}  // namespace wcsim
