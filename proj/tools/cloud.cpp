// cloud: ThingSpeak-compatible channel service.
//
//   cloud serve --port P --data D [--min-interval S] [--seed N] [--server-time]
//   cloud create-channel --data D --name NAME [--field F]... [--seed N] [--private]

#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "wcsim/cloud_server.hpp"

namespace {

wcsim::cloud::CloudServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->http().stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Channel telemetry service"};
  app.require_subcommand(1);

  int port = 8080;
  std::string data_dir;
  double min_interval = 15.0;
  std::uint64_t seed = 0;
  bool server_time = false;

  auto* serve = app.add_subcommand("serve", "Serve the HTTP API");
  serve->add_option("--port", port, "Listen port")->required();
  serve->add_option("--data", data_dir, "Data directory")->required();
  serve->add_option("--min-interval", min_interval, "Minimum seconds between writes per channel");
  serve->add_option("--seed", seed, "Seed for write-key generation");
  serve->add_flag("--server-time", server_time, "Ignore client-supplied created_at");

  std::string name;
  std::vector<std::string> fields;
  bool priv = false;
  auto* create = app.add_subcommand("create-channel", "Create a channel offline and print it");
  create->add_option("--data", data_dir, "Data directory")->required();
  create->add_option("--name", name, "Channel name")->required();
  create->add_option("--field", fields, "Field label (repeatable, up to 8)");
  create->add_option("--seed", seed, "Seed for write-key generation");
  create->add_flag("--private", priv, "Require a read key for feeds");

  CLI11_PARSE(app, argc, argv);

  wcsim::cloud::ServiceConfig cfg{data_dir, min_interval, seed, server_time};
  try {
    wcsim::cloud::ChannelService service(cfg);
    if (*create) {
      auto c = service.create_channel(name, fields, priv);
      std::cout << wcsim::cloud::channel_record(c).dump() << "\n";
      return 0;
    }
    wcsim::cloud::CloudServer server(service);
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cerr << "serving on 127.0.0.1:" << port << " data=" << data_dir
              << " channels=" << service.channel_count() << "\n";
    server.run(port);
  } catch (const std::exception& e) {
    std::cerr << "fatal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
