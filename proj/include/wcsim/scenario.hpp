#pragma once

// Scenario files: JSON, schema_version 1, unknown keys rejected.

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "atlink.hpp"
#include "devices.hpp"
#include "iso8601.hpp"
#include "world.hpp"

namespace wcsim {

inline constexpr int kScenarioSchemaVersion = 1;

struct JoystickKey {
  Millis t_ms = 0;
  double x_norm = 0.0;
  double y_norm = 0.0;
};

struct CloudEndpoint {
  std::string host = "127.0.0.1";
  int port = 0;
  std::string api_key;
};

struct Scenario {
  std::uint64_t seed = 0;
  double duration_s = 60.0;
  Millis tick_ms = 10;
  bool noise = true;
  OccupantProfile occupant;
  std::vector<Obstacle> obstacles;
  ChairParams chair;
  Pose start_pose;
  double v_sound = 343.0;
  double sensor_theta = 0.0;
  std::vector<JoystickKey> joystick;
  bool interactive = false;
  at::WifiCredentials wifi{"clinic-ap", "wheel-safe"};
  at::WifiCredentials network{"clinic-ap", "wheel-safe"};  // the access point the modem can see
  CloudEndpoint cloud;
  EpochMillis epoch = kDefaultScenarioEpoch;

  Millis duration_ms() const { return static_cast<Millis>(std::llround(duration_s * 1000.0)); }

  void validate() const {
    if (!(duration_s > 0)) throw std::invalid_argument("duration_s must be > 0");
    if (tick_ms <= 0 || 10 % tick_ms != 0)
      throw std::invalid_argument("tick_ms must divide the 10 ms sampling base");
    if (duration_ms() % tick_ms != 0)
      throw std::invalid_argument("duration must be a whole number of ticks");
    occupant.validate();
    chair.validate();
    for (const auto& o : obstacles)
      if (!(o.radius > 0)) throw std::invalid_argument("obstacle radius must be > 0");
    if (!(v_sound > 0)) throw std::invalid_argument("v_sound must be > 0");
    if (!(sensor_theta >= 0 && sensor_theta < 1.5707963267948966))
      throw std::invalid_argument("sensor_theta must be in [0, pi/2)");
    for (std::size_t i = 0; i < joystick.size(); ++i) {
      const auto& k = joystick[i];
      if (i > 0 && k.t_ms <= joystick[i - 1].t_ms)
        throw std::invalid_argument("joystick script timestamps must be strictly increasing");
      if (k.t_ms < 0 || std::abs(k.x_norm) > 1.0 || std::abs(k.y_norm) > 1.0)
        throw std::invalid_argument("joystick script entry out of range");
    }
  }
};

namespace scenario_detail {

inline void only_keys(const nlohmann::json& obj, std::initializer_list<const char*> allowed,
                      const std::string& where) {
  if (!obj.is_object()) throw std::invalid_argument(where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : obj.items())
    if (!ok.count(k)) throw std::invalid_argument("unknown field '" + k + "' in " + where);
}

template <typename T>
void read(const nlohmann::json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace scenario_detail

inline Scenario scenario_from_json(const nlohmann::json& j) {
  using namespace scenario_detail;
  only_keys(j,
            {"schema_version", "seed", "duration_s", "tick_ms", "noise", "occupant", "obstacles",
             "chair", "start_pose", "sensor", "joystick", "interactive", "wifi", "network", "cloud",
             "epoch"},
            "scenario");
  if (!j.contains("schema_version") || j.at("schema_version") != kScenarioSchemaVersion)
    throw std::invalid_argument("scenario schema_version must be 1");

  Scenario s;
  read(j, "seed", s.seed);
  read(j, "duration_s", s.duration_s);
  read(j, "tick_ms", s.tick_ms);
  read(j, "noise", s.noise);
  read(j, "interactive", s.interactive);

  if (j.contains("occupant")) {
    const auto& o = j.at("occupant");
    only_keys(o, {"heart_rate_bpm", "temp_c", "bp", "gait", "cadence"}, "occupant");
    read(o, "heart_rate_bpm", s.occupant.heart_rate_bpm);
    read(o, "temp_c", s.occupant.temp_c);
    if (o.contains("bp")) {
      auto bp = o.at("bp").get<std::vector<int>>();
      if (bp.size() != 2) throw std::invalid_argument("occupant.bp must be [sys, dia]");
      s.occupant.bp_sys = bp[0];
      s.occupant.bp_dia = bp[1];
    }
    if (o.contains("gait")) {
      const auto g = o.at("gait").get<std::string>();
      if (g == "rest") s.occupant.gait = Gait::rest;
      else if (g == "walk") s.occupant.gait = Gait::walk;
      else throw std::invalid_argument("occupant.gait must be rest|walk");
    }
    read(o, "cadence", s.occupant.cadence);
  }
  if (j.contains("obstacles")) {
    for (const auto& o : j.at("obstacles")) {
      only_keys(o, {"cx", "cy", "radius"}, "obstacle");
      s.obstacles.push_back({o.at("cx").get<double>(), o.at("cy").get<double>(),
                             o.at("radius").get<double>()});
    }
  }
  if (j.contains("chair")) {
    const auto& c = j.at("chair");
    only_keys(c, {"wheel_speed", "track_width", "sensor_offset", "beam_half_angle"}, "chair");
    read(c, "wheel_speed", s.chair.wheel_speed);
    read(c, "track_width", s.chair.track_width);
    read(c, "sensor_offset", s.chair.sensor_offset);
    read(c, "beam_half_angle", s.chair.beam_half_angle);
  }
  if (j.contains("start_pose")) {
    const auto& p = j.at("start_pose");
    only_keys(p, {"x", "y", "heading"}, "start_pose");
    read(p, "x", s.start_pose.x);
    read(p, "y", s.start_pose.y);
    read(p, "heading", s.start_pose.heading);
  }
  if (j.contains("sensor")) {
    const auto& p = j.at("sensor");
    only_keys(p, {"v_sound", "theta"}, "sensor");
    read(p, "v_sound", s.v_sound);
    read(p, "theta", s.sensor_theta);
  }
  if (j.contains("joystick")) {
    for (const auto& k : j.at("joystick")) {
      only_keys(k, {"t_ms", "x_norm", "y_norm"}, "joystick entry");
      s.joystick.push_back({k.at("t_ms").get<Millis>(), k.at("x_norm").get<double>(),
                            k.at("y_norm").get<double>()});
    }
  }
  auto creds = [](const nlohmann::json& w, const std::string& where) {
    only_keys(w, {"ssid", "password"}, where);
    return at::WifiCredentials{w.at("ssid").get<std::string>(), w.at("password").get<std::string>()};
  };
  if (j.contains("wifi")) {
    s.wifi = creds(j.at("wifi"), "wifi");
    s.network = s.wifi;
  }
  if (j.contains("network")) s.network = creds(j.at("network"), "network");
  if (j.contains("cloud")) {
    const auto& c = j.at("cloud");
    only_keys(c, {"host", "port", "api_key"}, "cloud");
    read(c, "host", s.cloud.host);
    read(c, "port", s.cloud.port);
    read(c, "api_key", s.cloud.api_key);
  }
  if (j.contains("epoch")) {
    auto e = parse_iso8601(j.at("epoch").get<std::string>());
    if (!e) throw std::invalid_argument("epoch must be ISO-8601 UTC");
    s.epoch = *e;
  }
  s.validate();
  return s;
}

inline nlohmann::ordered_json scenario_to_json(const Scenario& s) {
  nlohmann::ordered_json j;
  j["schema_version"] = kScenarioSchemaVersion;
  j["seed"] = s.seed;
  j["duration_s"] = s.duration_s;
  j["tick_ms"] = s.tick_ms;
  j["noise"] = s.noise;
  j["occupant"] = {{"heart_rate_bpm", s.occupant.heart_rate_bpm},
                   {"temp_c", s.occupant.temp_c},
                   {"bp", {s.occupant.bp_sys, s.occupant.bp_dia}},
                   {"gait", s.occupant.gait == Gait::walk ? "walk" : "rest"},
                   {"cadence", s.occupant.cadence}};
  j["obstacles"] = nlohmann::ordered_json::array();
  for (const auto& o : s.obstacles)
    j["obstacles"].push_back({{"cx", o.cx}, {"cy", o.cy}, {"radius", o.radius}});
  j["chair"] = {{"wheel_speed", s.chair.wheel_speed},
                {"track_width", s.chair.track_width},
                {"sensor_offset", s.chair.sensor_offset},
                {"beam_half_angle", s.chair.beam_half_angle}};
  j["start_pose"] = {{"x", s.start_pose.x}, {"y", s.start_pose.y}, {"heading", s.start_pose.heading}};
  j["sensor"] = {{"v_sound", s.v_sound}, {"theta", s.sensor_theta}};
  j["joystick"] = nlohmann::ordered_json::array();
  for (const auto& k : s.joystick)
    j["joystick"].push_back({{"t_ms", k.t_ms}, {"x_norm", k.x_norm}, {"y_norm", k.y_norm}});
  j["interactive"] = s.interactive;
  j["wifi"] = {{"ssid", s.wifi.ssid}, {"password", s.wifi.password}};
  j["network"] = {{"ssid", s.network.ssid}, {"password", s.network.password}};
  j["cloud"] = {{"host", s.cloud.host}, {"port", s.cloud.port}, {"api_key", s.cloud.api_key}};
  j["epoch"] = format_iso8601(s.epoch);
  return j;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read scenario file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("scenario " + path + " is not valid JSON: " + e.what());
  }
  try {
    return scenario_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("scenario " + path + ": " + e.what());
  }
}

}  // namespace wcsim
