#include <gtest/gtest.h>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "wcsim/bridge.hpp"

using namespace wcsim;
namespace beast = boost::beast;
namespace websocket = boost::beast::websocket;
using tcp = boost::asio::ip::tcp;

namespace {

struct Client {
  boost::asio::io_context ioc;
  websocket::stream<tcp::socket> ws{ioc};

  explicit Client(int port) {
    tcp::resolver resolver(ioc);
    boost::asio::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws.handshake("127.0.0.1:" + std::to_string(port), "/");
  }
  void send(const std::string& s) { ws.write(boost::asio::buffer(s)); }
  std::string read() {
    beast::flat_buffer buf;
    ws.read(buf);
    return beast::buffers_to_string(buf.data());
  }
};

template <typename Pred>
bool eventually(Pred p, int ms = 3000) {
  for (int i = 0; i < ms / 5; ++i) {
    if (p()) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  return p();
}

Scenario open_floor() {
  Scenario s;
  s.duration_s = 5;
  s.obstacles = {{4.0, 0.0, 0.3}};
  return s;
}

}  // namespace

TEST(Bridge, JoystickFrameDrivesForwardWithinOneTick) {
  Bridge bridge(0);
  bridge.start();
  Client c(bridge.port());
  ASSERT_TRUE(eventually([&] { return bridge.connected(); }));
  c.send(R"({"type":"joystick","x_norm":0,"y_norm":1})");
  ASSERT_TRUE(eventually([&] { return bridge.input() == std::pair<double, double>{0.0, 1.0}; }));

  Simulation sim(open_floor(), {.no_cloud = true});
  sim.set_interactive(true);
  // Joystick is sampled every 20 ms; the next sampling tick must already latch Forward.
  sim.step();
  const auto [x, y] = bridge.input();
  sim.set_operator_input(x, y);
  sim.step();
  sim.step();
  ASSERT_TRUE(sim.last_output());
  EXPECT_EQ(sim.last_output()->command, MotorCommand::Forward);
  EXPECT_EQ(sim.last_output()->pins, command_to_pins(MotorCommand::Forward));
  bridge.stop();
}

TEST(Bridge, StateFramesReachClient) {
  Bridge bridge(0);
  bridge.start();
  Client c(bridge.port());
  ASSERT_TRUE(eventually([&] { return bridge.connected(); }));
  Simulation sim(open_floor(), {.no_cloud = true});
  sim.step();
  bridge.publish(state_frame(sim).dump());
  auto j = nlohmann::json::parse(c.read());
  EXPECT_EQ(j["schema_version"], 1);
  EXPECT_EQ(j["type"], "state");
  EXPECT_EQ(j["t_ms"], 10);
  for (auto key : {"pose", "vitals", "distance", "pins", "command", "safety", "display", "last_upload", "obstacles"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["obstacles"].size(), 1u);
  EXPECT_EQ(j["safety"], "Free");
  bridge.stop();
}

TEST(Bridge, SecondOperatorRejected) {
  Bridge bridge(0);
  bridge.start();
  Client first(bridge.port());
  ASSERT_TRUE(eventually([&] { return bridge.connected(); }));
  Client second(bridge.port());
  beast::flat_buffer buf;
  beast::error_code ec;
  second.ws.read(buf, ec);
  EXPECT_EQ(ec, websocket::error::closed);
  EXPECT_EQ(second.ws.reason().code, websocket::close_code::policy_error);
  // First operator keeps control.
  first.send(R"({"type":"joystick","x_norm":-1,"y_norm":0})");
  EXPECT_TRUE(eventually([&] { return bridge.input() == std::pair<double, double>{-1.0, 0.0}; }));
  bridge.stop();
}

TEST(Bridge, DisconnectRecentersInput) {
  Bridge bridge(0);
  bridge.start();
  {
    Client c(bridge.port());
    ASSERT_TRUE(eventually([&] { return bridge.connected(); }));
    c.send(R"({"type":"joystick","x_norm":0.5,"y_norm":1})");
    ASSERT_TRUE(eventually([&] { return bridge.input().second == 1.0; }));
    c.ws.close(websocket::close_code::normal);
  }
  EXPECT_TRUE(eventually([&] { return !bridge.connected(); }));
  EXPECT_EQ(bridge.input(), (std::pair<double, double>{0.0, 0.0}));
  // A new operator may take over.
  Client again(bridge.port());
  EXPECT_TRUE(eventually([&] { return bridge.connected(); }));
  bridge.stop();
}

TEST(Bridge, MalformedMessagesIgnored) {
  Bridge bridge(0);
  bridge.start();
  Client c(bridge.port());
  ASSERT_TRUE(eventually([&] { return bridge.connected(); }));
  c.send(R"({"type":"joystick","x_norm":0,"y_norm":1})");
  ASSERT_TRUE(eventually([&] { return bridge.input().second == 1.0; }));
  c.send("not json");
  c.send(R"({"type":"joystick","x_norm":"left","y_norm":0})");
  c.send(R"({"type":"honk"})");
  c.send(R"({"type":"joystick","x_norm":9,"y_norm":-9})");
  EXPECT_TRUE(eventually([&] { return bridge.input() == std::pair<double, double>{1.0, -1.0}; }));
  bridge.stop();
}

TEST(Bridge, IdleWithoutClientRunsCentered) {
  Bridge bridge(0);
  bridge.start();
  Simulation sim(open_floor(), {.no_cloud = true});
  std::atomic<bool> stop{false};
  run_interactive(sim, bridge, stop, false);
  EXPECT_TRUE(sim.finished());
  EXPECT_EQ(sim.pose().x, 0.0);
  EXPECT_EQ(sim.last_output()->command, MotorCommand::Stop);
  bridge.stop();
}
