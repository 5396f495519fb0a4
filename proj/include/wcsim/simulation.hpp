#pragma once

// Wires devices, world, firmware and the modem link into one tick loop and
// records the canonical trace.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "atlink.hpp"
#include "devices.hpp"
#include "firmware.hpp"
#include "net.hpp"
#include "scenario.hpp"
#include "simcore.hpp"
#include "world.hpp"

namespace wcsim {

struct RunOptions {
  bool no_cloud = false;
  bool record_trace = true;
};

struct UploadRecord {
  VitalsSample sample;
  at::UploadResult result;
};

inline const char* to_string(MotorMotion m) {
  switch (m) {
    case MotorMotion::coast: return "coast";
    case MotorMotion::forward: return "forward";
    case MotorMotion::reverse: return "reverse";
    case MotorMotion::brake: return "brake";
  }
  return "?";
}

inline const char* to_string(SafetyMode m) { return m == SafetyMode::Blocked ? "Blocked" : "Free"; }

class Simulation {
 public:
  Simulation(Scenario scenario, RunOptions opts = {}, std::unique_ptr<at::TcpLink> tcp = nullptr)
      : sc_(std::move(scenario)),
        opts_(opts),
        noise_(sc_.noise ? NoiseConfig{} : NoiseConfig::off()),
        clock_(sc_.tick_ms),
        firmware_(FirmwareConfig{sc_.tick_ms, sc_.v_sound, sc_.sensor_theta, 10, Schedule{}}),
        pose_(sc_.start_pose),
        rng_ppg_(Rng(sc_.seed).fork("ppg")),
        rng_accel_(Rng(sc_.seed).fork("accel")),
        rng_temp_(Rng(sc_.seed).fork("lm35")),
        rng_bp_(Rng(sc_.seed).fork("bp")),
        rng_echo_(Rng(sc_.seed).fork("ultrasonic")) {
    sc_.validate();
    pose_.heading = normalize_angle(pose_.heading);
    if (!opts_.no_cloud) {
      tcp_ = tcp ? std::move(tcp) : std::make_unique<SocketTcpLink>();
      modem_ = std::make_unique<at::ModemEmulator>(sc_.network, *tcp_);
      driver_ = std::make_unique<at::AtDriver>(
          *modem_, at::UploadConfig{sc_.wifi, sc_.cloud.host, sc_.cloud.port, sc_.cloud.api_key, sc_.epoch});
    }
  }

  const Scenario& scenario() const { return sc_; }
  Millis now() const { return clock_.now(); }
  bool finished() const { return clock_.now() >= sc_.duration_ms(); }

  /// Operator input for interactive runs; overrides the script from now on.
  void set_operator_input(double x_norm, double y_norm) {
    operator_input_ = {std::clamp(x_norm, -1.0, 1.0), std::clamp(y_norm, -1.0, 1.0)};
  }
  void clear_operator_input() { operator_input_ = {0.0, 0.0}; }
  void set_interactive(bool on) { interactive_ = on; }

  void step() {
    const Millis now = clock_.now();
    if (now == 0) emit_start();

    if (!interactive_) {
      while (script_pos_ < sc_.joystick.size() && sc_.joystick[script_pos_].t_ms <= now) {
        operator_input_ = {sc_.joystick[script_pos_].x_norm, sc_.joystick[script_pos_].y_norm};
        ++script_pos_;
      }
    }

    DeviceInputs in;
    if (firmware_.ppg_due(now))
      in.ppg = gen_ppg(now, sc_.occupant.heart_rate_bpm, rng_ppg_, noise_.ppg);
    if (firmware_.accel_due(now))
      in.accel = gen_accel(now, sc_.occupant.gait, sc_.occupant.cadence, rng_accel_, noise_.accel_g);
    if (firmware_.joystick_due(now)) {
      in.joystick = read_joystick(operator_input_.first, operator_input_.second);
      const std::pair<int, int> counts{in.joystick->first.value, in.joystick->second.value};
      if (counts != last_joystick_counts_) {
        last_joystick_counts_ = counts;
        emit(TraceEvent{now, EventKind::sensor, {}}
                 .set("device", "joystick")
                 .set("x", counts.first)
                 .set("y", counts.second));
      }
    }
    std::optional<double> truth;
    const bool ping = firmware_.ultrasonic_due(now);
    if (ping) {
      truth = raycast_front(pose_, sc_.chair, sc_.obstacles);
      in.echo = ping_ultrasonic(truth, sc_.v_sound, sc_.sensor_theta, rng_echo_, noise_.ultrasonic_m);
    }
    if (firmware_.temp_due(now)) in.temp = read_lm35(sc_.occupant.temp_c, rng_temp_, noise_.temp_mv);
    if (firmware_.bp_due(now))
      in.bp = read_bp(sc_.occupant.bp_sys, sc_.occupant.bp_dia, rng_bp_, noise_.bp_mmhg);

    const TickOutput out = firmware_.tick(now, in);
    last_output_ = out;

    if (ping) {
      TraceEvent ev{now, EventKind::sensor, {}};
      ev.set("device", "ultrasonic");
      if (truth) ev.set("truth", *truth);
      if (*in.echo) ev.set("echo_s", **in.echo);
      else ev.set("timeout", 1);
      if (auto d = firmware_.distance()) ev.set("distance", *d);
      emit(std::move(ev));
      emit(TraceEvent{now, EventKind::pose, {}}
               .set("x", pose_.x)
               .set("y", pose_.y)
               .set("heading", pose_.heading));
    }
    if (in.temp)
      emit(TraceEvent{now, EventKind::sensor, {}}.set("device", "lm35").set("mv", in.temp->value));
    if (in.bp)
      emit(TraceEvent{now, EventKind::sensor, {}}
               .set("device", "bp")
               .set("sys", in.bp->systolic)
               .set("dia", in.bp->diastolic));
    if (out.beat) {
      TraceEvent ev{now, EventKind::fsm, {}};
      ev.set("event", "beat");
      if (out.beat_bpm) ev.set("bpm", *out.beat_bpm);
      emit(std::move(ev));
    }
    if (out.step)
      emit(TraceEvent{now, EventKind::fsm, {}}.set("event", "step").set("steps",
                                                                        firmware_.vitals(now).steps));
    if (out.safety_transition) {
      TraceEvent ev{now, EventKind::fsm, {}};
      ev.set("event", "safety").set("state", to_string(*out.safety_transition));
      if (auto d = firmware_.distance()) ev.set("distance", *d);
      emit(std::move(ev));
    }
    if (!last_command_ || out.command != *last_command_ || out.requested != last_requested_) {
      last_command_ = out.command;
      last_requested_ = out.requested;
      emit(TraceEvent{now, EventKind::command, {}}
               .set("requested", to_string(out.requested))
               .set("command", to_string(out.command)));
    }
    const MotorDriveState drive = latch_pins(out.pins);
    if (!last_pins_ || out.pins != *last_pins_) {
      last_pins_ = out.pins;
      emit(TraceEvent{now, EventKind::pins, {}}
               .set("frame", out.pins.to_string())
               .set("left", to_string(drive.left))
               .set("right", to_string(drive.right)));
    }
    if (now % 1000 == 0)
      emit(TraceEvent{now, EventKind::fsm, {}}
               .set("event", "display")
               .set("line1", out.display[0])
               .set("line2", out.display[1]));

    check_safety(now, out);

    if (out.upload) upload(now, *out.upload);

    pose_ = step_kinematics(pose_, motion_from_drive(drive), sc_.chair,
                            static_cast<double>(sc_.tick_ms) / 1000.0);
    clock_.advance();
  }

  void run_to_end() {
    while (!finished()) step();
  }

  const Trace& trace() const { return trace_; }
  int safety_violations() const { return violations_; }
  const std::vector<UploadRecord>& uploads() const { return uploads_; }
  const Pose& pose() const { return pose_; }
  const Firmware& firmware() const { return firmware_; }
  const std::optional<TickOutput>& last_output() const { return last_output_; }

 private:
  void emit(TraceEvent ev) {
    if (opts_.record_trace) trace_.emit(std::move(ev));
  }

  void emit_start() {
    emit(TraceEvent{0, EventKind::fsm, {}}
             .set("event", "start")
             .set("seed", std::to_string(sc_.seed))
             .set("tick_ms", sc_.tick_ms)
             .set("duration_ms", sc_.duration_ms())
             .set("obstacles", static_cast<std::int64_t>(sc_.obstacles.size()))
             .set("noise", sc_.noise ? 1 : 0));
  }

  // Forward pins while the decoded distance has been under the stop threshold
  // for more than one tick.
  void check_safety(Millis now, const TickOutput& out) {
    const auto d = firmware_.distance();
    const bool close = d && *d < kStopDistance;
    if (close && !close_since_) close_since_ = now;
    if (!close) close_since_.reset();
    if (close && out.pins == command_to_pins(MotorCommand::Forward) && now - *close_since_ > 0) {
      ++violations_;
      emit(TraceEvent{now, EventKind::fsm, {}}.set("event", "safety_violation").set("distance", *d));
    }
  }

  void upload(Millis now, const VitalsSample& v) {
    TraceEvent ev{now, EventKind::fsm, {}};
    ev.set("event", "upload").set("sample_t", v.t).set("created_at", format_iso8601(sc_.epoch + v.t));
    for (const auto& [k, val] : at::update_fields(v, sc_.epoch))
      if (k != "created_at") ev.set(k, val);
    emit(std::move(ev));

    UploadRecord rec{v, {}};
    if (!driver_) {
      rec.result.status = at::UploadStatus::TransportError;
      rec.result.detail = "cloud disabled";
      emit(TraceEvent{now, EventKind::http, {}}.set("status", "skipped"));
      uploads_.push_back(std::move(rec));
      return;
    }
    rec.result = driver_->upload(v);
    for (const auto& a : driver_->take_transcript()) {
      emit(TraceEvent{now, a.direction == at::Direction::to_modem ? EventKind::at_tx : EventKind::at_rx, {}}
               .set("kind", at::to_string(a.kind))
               .set("bytes", a.bytes));
    }
    TraceEvent h{now, EventKind::http, {}};
    h.set("status", at::to_string(rec.result.status));
    if (rec.result.status != at::UploadStatus::TransportError) h.set("entry_id", rec.result.entry_id);
    if (rec.result.failed_step) h.set("step", at::to_string(*rec.result.failed_step));
    emit(std::move(h));
    uploads_.push_back(std::move(rec));
  }

  Scenario sc_;
  RunOptions opts_;
  NoiseConfig noise_;
  SimClock clock_;
  Firmware firmware_;
  Pose pose_;
  Rng rng_ppg_, rng_accel_, rng_temp_, rng_bp_, rng_echo_;

  std::unique_ptr<at::TcpLink> tcp_;
  std::unique_ptr<at::ModemEmulator> modem_;
  std::unique_ptr<at::AtDriver> driver_;

  bool interactive_ = false;
  std::pair<double, double> operator_input_{0.0, 0.0};
  std::size_t script_pos_ = 0;
  std::pair<int, int> last_joystick_counts_{-1, -1};
  std::optional<MotorCommand> last_command_;
  MotorCommand last_requested_ = MotorCommand::Stop;
  std::optional<PinFrame> last_pins_;
  std::optional<Millis> close_since_;
  std::optional<TickOutput> last_output_;
  int violations_ = 0;
  std::vector<UploadRecord> uploads_;
  Trace trace_;
};

struct RunResult {
  int exit_code = 0;
  int safety_violations = 0;
  std::vector<UploadRecord> uploads;
  Trace trace;
};

/// Headless run. Exit code 0 on clean completion, 2 when a safety violation was seen.
inline RunResult run_scenario(const Scenario& sc, RunOptions opts = {}) {
  Simulation sim(sc, opts);
  sim.run_to_end();
  RunResult r;
  r.safety_violations = sim.safety_violations();
  r.exit_code = r.safety_violations > 0 ? 2 : 0;
  r.uploads = sim.uploads();
  r.trace = sim.trace();
  return r;
}

}  // namespace wcsim
