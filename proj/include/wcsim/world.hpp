#pragma once

// Planar wheelchair kinematics and the front ultrasonic line-of-sight query.

#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>

#include "devices.hpp"

namespace wcsim {

enum class MotorCommand { Stop, Forward, Reverse, TurnLeft, TurnRight };

inline const char* to_string(MotorCommand c) {
  switch (c) {
    case MotorCommand::Stop: return "Stop";
    case MotorCommand::Forward: return "Forward";
    case MotorCommand::Reverse: return "Reverse";
    case MotorCommand::TurnLeft: return "TurnLeft";
    case MotorCommand::TurnRight: return "TurnRight";
  }
  return "?";
}

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // radians, (-pi, pi]
};

struct Obstacle {
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.1;
};

struct ChairParams {
  double wheel_speed = 0.5;       // m/s
  double track_width = 0.6;       // m
  double sensor_offset = 0.4;     // m, pose origin to sensor
  double beam_half_angle = 0.26;  // rad

  void validate() const {
    if (!(wheel_speed > 0 && track_width > 0 && sensor_offset > 0 && beam_half_angle > 0))
      throw std::invalid_argument("chair params must all be positive");
  }
};

inline double normalize_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

inline Pose step_kinematics(Pose pose, MotorCommand cmd, const ChairParams& params, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("step_kinematics: dt must be > 0");
  const double omega = 2.0 * params.wheel_speed / params.track_width;
  switch (cmd) {
    case MotorCommand::Stop:
      return pose;
    case MotorCommand::Forward:
    case MotorCommand::Reverse: {
      const double s = (cmd == MotorCommand::Forward ? 1.0 : -1.0) * params.wheel_speed * dt;
      pose.x += s * std::cos(pose.heading);
      pose.y += s * std::sin(pose.heading);
      break;
    }
    case MotorCommand::TurnLeft:
      pose.heading += omega * dt;
      break;
    case MotorCommand::TurnRight:
      pose.heading -= omega * dt;
      break;
  }
  pose.heading = normalize_angle(pose.heading);
  return pose;
}

/// Motion the chair actually performs for a latched H-bridge state. Anything
/// other than matched or counter-rotating wheels holds position.
inline MotorCommand motion_from_drive(const MotorDriveState& d) {
  using M = MotorMotion;
  if (d.left == M::forward && d.right == M::forward) return MotorCommand::Forward;
  if (d.left == M::reverse && d.right == M::reverse) return MotorCommand::Reverse;
  if (d.left == M::reverse && d.right == M::forward) return MotorCommand::TurnLeft;
  if (d.left == M::forward && d.right == M::reverse) return MotorCommand::TurnRight;
  return MotorCommand::Stop;
}

/// Smallest ray parameter s > 0 where origin + s*dir meets the circle; 0 if the origin is inside.
inline std::optional<double> ray_circle(double ox, double oy, double dx, double dy,
                                        const Obstacle& c) {
  const double fx = ox - c.cx;
  const double fy = oy - c.cy;
  const double cterm = fx * fx + fy * fy - c.radius * c.radius;
  if (cterm <= 0.0) return 0.0;
  const double b = fx * dx + fy * dy;  // dir is unit length
  const double disc = b * b - cterm;
  if (disc < 0.0) return std::nullopt;
  const double s = -b - std::sqrt(disc);
  if (s <= 0.0) return std::nullopt;
  return s;
}

inline Pose sensor_pose(const Pose& pose, const ChairParams& params) {
  return {pose.x + params.sensor_offset * std::cos(pose.heading),
          pose.y + params.sensor_offset * std::sin(pose.heading), pose.heading};
}

inline std::optional<double> raycast_front(const Pose& pose, const ChairParams& params,
                                           std::span<const Obstacle> obstacles) {
  const Pose s = sensor_pose(pose, params);
  std::optional<double> best;
  for (int k = -2; k <= 2; ++k) {
    const double ang = s.heading + k * params.beam_half_angle / 2.0;
    const double dx = std::cos(ang);
    const double dy = std::sin(ang);
    for (const auto& ob : obstacles) {
      auto hit = ray_circle(s.x, s.y, dx, dy, ob);
      if (hit && *hit <= kSensorMaxRange && (!best || *hit < *best)) best = hit;
    }
  }
  return best;
}

}  // namespace wcsim
