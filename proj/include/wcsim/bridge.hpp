#pragma once

// Single-operator WebSocket bridge for interactive runs.
//
// Outbound (10 Hz):  {"schema_version":1,"type":"state", ...}   see state_frame()
// Inbound:           {"type":"joystick","x_norm":X,"y_norm":Y}  applied at the next tick
//
// With no operator connected the joystick reads as centered.

#include <atomic>
#include <chrono>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <nlohmann/json.hpp>

#include "simulation.hpp"

namespace wcsim {

inline constexpr int kStateFrameSchemaVersion = 1;

inline nlohmann::ordered_json state_frame(const Simulation& sim) {
  nlohmann::ordered_json f;
  f["schema_version"] = kStateFrameSchemaVersion;
  f["type"] = "state";
  f["t_ms"] = sim.now();
  const Pose& p = sim.pose();
  f["pose"] = {{"x", p.x}, {"y", p.y}, {"heading", p.heading}};
  const VitalsSample v = sim.firmware().vitals(sim.now());
  f["vitals"] = {{"heart_rate", v.heart_rate ? nlohmann::ordered_json(*v.heart_rate) : nlohmann::ordered_json()},
                 {"sys", v.sys},
                 {"dia", v.dia},
                 {"temp", v.temp},
                 {"steps", v.steps}};
  f["distance"] = v.distance ? nlohmann::ordered_json(*v.distance) : nlohmann::ordered_json();
  const auto& out = sim.last_output();
  const PinFrame pins = out ? out->pins : command_to_pins(MotorCommand::Stop);
  f["pins"] = pins.to_string();
  f["command"] = to_string(out ? out->command : MotorCommand::Stop);
  f["safety"] = to_string(sim.firmware().safety().mode);
  f["display"] = out ? nlohmann::ordered_json::array({out->display[0], out->display[1]})
                     : nlohmann::ordered_json::array({"", ""});
  if (!sim.uploads().empty()) {
    const auto& r = sim.uploads().back().result;
    f["last_upload"] = {{"status", at::to_string(r.status)}, {"entry_id", r.entry_id}};
  } else {
    f["last_upload"] = nullptr;
  }
  f["obstacles"] = nlohmann::ordered_json::array();
  for (const auto& o : sim.scenario().obstacles)
    f["obstacles"].push_back({{"cx", o.cx}, {"cy", o.cy}, {"radius", o.radius}});
  return f;
}

class Bridge {
  using tcp = boost::asio::ip::tcp;
  using WsStream = boost::beast::websocket::stream<boost::beast::tcp_stream>;

 public:
  explicit Bridge(int port, const std::string& host = "127.0.0.1")
      : acceptor_(ioc_, tcp::endpoint(boost::asio::ip::make_address(host), static_cast<unsigned short>(port))) {
    port_ = acceptor_.local_endpoint().port();
  }

  ~Bridge() { stop(); }
  Bridge(const Bridge&) = delete;
  Bridge& operator=(const Bridge&) = delete;

  int port() const { return port_; }

  void start() {
    do_accept();
    thread_ = std::thread([this] { ioc_.run(); });
  }

  void stop() {
    if (stopped_.exchange(true)) return;
    ioc_.stop();
    if (thread_.joinable()) thread_.join();
    boost::system::error_code ec;
    acceptor_.close(ec);
    if (active_) {
      active_->close_now();
      active_.reset();
    }
  }

  /// Latest operator input; centered when nobody is connected.
  std::pair<double, double> input() const {
    std::lock_guard g(mu_);
    return connected_ ? input_ : std::pair<double, double>{0.0, 0.0};
  }

  bool connected() const {
    std::lock_guard g(mu_);
    return connected_;
  }

  void publish(std::string frame) {
    boost::asio::post(ioc_, [this, f = std::move(frame)]() mutable {
      if (active_) active_->send(std::move(f));
    });
  }

 private:
  class Session : public std::enable_shared_from_this<Session> {
   public:
    Session(tcp::socket sock, Bridge& owner, bool reject)
        : ws_(std::move(sock)), owner_(owner), reject_(reject) {}

    void run() {
      ws_.set_option(boost::beast::websocket::stream_base::timeout::suggested(boost::beast::role_type::server));
      ws_.async_accept([self = shared_from_this()](boost::beast::error_code ec) { self->on_accept(ec); });
    }

    void send(std::string frame) {
      queue_.push_back(std::move(frame));
      if (queue_.size() > 16) queue_.pop_front();  // drop stale frames for a slow client
      if (!writing_) do_write();
    }

    void close_now() {
      boost::beast::error_code ec;
      boost::beast::get_lowest_layer(ws_).socket().close(ec);
    }

   private:
    void on_accept(boost::beast::error_code ec) {
      if (ec) return;
      if (reject_) {
        ws_.async_close({boost::beast::websocket::close_code::policy_error, "single operator only"},
                        [self = shared_from_this()](boost::beast::error_code) {});
        return;
      }
      owner_.on_connect(shared_from_this());
      do_read();
    }

    void do_read() {
      ws_.async_read(buffer_, [self = shared_from_this()](boost::beast::error_code ec, std::size_t) {
        if (ec) {
          self->owner_.on_disconnect(self.get());
          return;
        }
        self->owner_.on_message(boost::beast::buffers_to_string(self->buffer_.data()));
        self->buffer_.consume(self->buffer_.size());
        self->do_read();
      });
    }

    void do_write() {
      if (queue_.empty()) {
        writing_ = false;
        return;
      }
      writing_ = true;
      ws_.text(true);
      ws_.async_write(boost::asio::buffer(queue_.front()),
                      [self = shared_from_this()](boost::beast::error_code ec, std::size_t) {
                        self->queue_.pop_front();
                        if (ec) {
                          self->writing_ = false;
                          return;
                        }
                        self->do_write();
                      });
    }

    WsStream ws_;
    Bridge& owner_;
    bool reject_;
    boost::beast::flat_buffer buffer_;
    std::deque<std::string> queue_;
    bool writing_ = false;
  };

  void do_accept() {
    acceptor_.async_accept([this](boost::system::error_code ec, tcp::socket sock) {
      if (ec) return;
      std::make_shared<Session>(std::move(sock), *this, active_ != nullptr)->run();
      do_accept();
    });
  }

  void on_connect(std::shared_ptr<Session> s) {
    active_ = std::move(s);
    std::lock_guard g(mu_);
    connected_ = true;
    input_ = {0.0, 0.0};
  }

  void on_disconnect(Session* s) {
    if (active_.get() != s) return;
    active_.reset();
    std::lock_guard g(mu_);
    connected_ = false;
    input_ = {0.0, 0.0};
  }

  void on_message(const std::string& text) {
    auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object() || j.value("type", "") != "joystick") return;
    const auto& x = j["x_norm"];
    const auto& y = j["y_norm"];
    if (!x.is_number() || !y.is_number()) return;
    std::lock_guard g(mu_);
    input_ = {std::clamp(x.get<double>(), -1.0, 1.0), std::clamp(y.get<double>(), -1.0, 1.0)};
  }

  boost::asio::io_context ioc_;
  tcp::acceptor acceptor_;
  int port_ = 0;
  std::thread thread_;
  std::atomic<bool> stopped_{false};
  std::shared_ptr<Session> active_;  // io thread only

  mutable std::mutex mu_;
  bool connected_ = false;
  std::pair<double, double> input_{0.0, 0.0};
};

/// Real-time paced loop: one tick per tick_ms of wall time, a state frame every 100 ms.
inline void run_interactive(Simulation& sim, Bridge& bridge, const std::atomic<bool>& stop_flag,
                            bool pace = true) {
  using clock = std::chrono::steady_clock;
  sim.set_interactive(true);
  const auto tick = std::chrono::milliseconds(sim.scenario().tick_ms);
  auto next = clock::now();
  while (!sim.finished() && !stop_flag.load()) {
    const auto [x, y] = bridge.input();
    sim.set_operator_input(x, y);
    const Millis t = sim.now();
    sim.step();
    if (t % 100 == 0) bridge.publish(state_frame(sim).dump());
    if (pace) {
      next += tick;
      std::this_thread::sleep_until(next);
    }
  }
}

}  // namespace wcsim
