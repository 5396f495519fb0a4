// sim: run scenarios headless or interactively, and replay traces.
//
//   sim run --scenario F [--out F] [--no-cloud] [--interactive --port P]
//   sim replay F

#include <csignal>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "wcsim/bridge.hpp"
#include "wcsim/replay.hpp"
#include "wcsim/scenario.hpp"
#include "wcsim/simulation.hpp"

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

bool write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  return static_cast<bool>(out);
}

int cmd_run(const std::string& scenario_path, const std::string& out_path, bool no_cloud,
            bool interactive, int port) {
  wcsim::Scenario sc;
  try {
    sc = wcsim::load_scenario(scenario_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  wcsim::RunOptions opts;
  opts.no_cloud = no_cloud;
  int exit_code = 0;
  wcsim::Trace trace;

  if (interactive || sc.interactive) {
    wcsim::Simulation sim(sc, opts);
    wcsim::Bridge bridge(port);
    bridge.start();
    std::cerr << "bridge listening on ws://127.0.0.1:" << bridge.port() << "\n";
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    wcsim::run_interactive(sim, bridge, g_stop);
    bridge.stop();
    exit_code = sim.safety_violations() > 0 ? 2 : 0;
    trace = sim.trace();
  } else {
    auto r = wcsim::run_scenario(sc, opts);
    exit_code = r.exit_code;
    trace = std::move(r.trace);
    int accepted = 0;
    for (const auto& u : r.uploads)
      if (u.result.status == wcsim::at::UploadStatus::Accepted) ++accepted;
    std::cerr << "ticks=" << sc.duration_ms() / sc.tick_ms << " uploads=" << r.uploads.size()
              << " accepted=" << accepted << " safety_violations=" << r.safety_violations << "\n";
  }

  if (!out_path.empty() && !write_file(out_path, trace.to_ndjson())) {
    std::cerr << "error: cannot write trace " << out_path << "\n";
    return 1;
  }
  return exit_code;
}

int cmd_replay(const std::string& path) {
  wcsim::ReplaySummary sum;
  try {
    sum = wcsim::replay_file(path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  for (const auto& c : sum.corrupt_lines) std::cout << "CORRUPT " << c << "\n";
  for (const auto& w : sum.warnings) std::cout << "WARN " << w << "\n";
  for (const auto& c : sum.checks)
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << (c.detail.empty() ? "" : ": " + c.detail)
              << "\n";
  std::cout << sum.events << " events\n";
  return sum.all_passed() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wheelchair / vitals telemetry simulator"};
  app.require_subcommand(1);

  std::string scenario, out;
  bool no_cloud = false, interactive = false;
  int port = 8765;
  auto* run = app.add_subcommand("run", "Run a scenario");
  run->add_option("--scenario", scenario, "Scenario JSON file")->required();
  run->add_option("--out", out, "Trace output (NDJSON)");
  run->add_flag("--no-cloud", no_cloud, "Skip the modem/cloud upload path");
  run->add_flag("--interactive", interactive, "Steer live through the WebSocket bridge");
  run->add_option("--port", port, "WebSocket bridge port (interactive)");

  std::string trace_path;
  auto* replay = app.add_subcommand("replay", "Re-check invariants from a trace file");
  replay->add_option("trace", trace_path, "Trace NDJSON")->required();

  CLI11_PARSE(app, argc, argv);

  if (*run) return cmd_run(scenario, out, no_cloud, interactive, port);
  return cmd_replay(trace_path);
}
