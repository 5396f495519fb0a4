#pragma once

// HTTP/1.1 front end for ChannelService.
//
//   GET|POST /update                       -> "entry_id" | "0"
//   GET /channels/{id}/feeds.json?results=N[&api_key=K]
//   GET /channels/{id}/feeds.csv?results=N[&api_key=K]
//   POST /admin/channels  {"name": "...", "field_names": [...], "private": false}

#include <atomic>
#include <charconv>
#include <memory>
#include <stdexcept>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "cloud.hpp"

namespace wcsim::cloud {

inline std::optional<QueryPairs> query_of_target(const std::string& target) {
  auto q = target.find('?');
  if (q == std::string::npos) return QueryPairs{};
  return parse_query(std::string_view(target).substr(q + 1));
}

inline std::optional<std::string> lookup(const QueryPairs& q, std::string_view key) {
  for (const auto& [k, v] : q)
    if (k == key) return v;
  return std::nullopt;
}

class CloudServer {
 public:
  explicit CloudServer(ChannelService& service) : service_(service) { install_routes(); }

  ~CloudServer() { stop(); }

  CloudServer(const CloudServer&) = delete;
  CloudServer& operator=(const CloudServer&) = delete;

  /// Binds 127.0.0.1 (port 0 picks a free port) and serves on a background thread.
  int start(int port = 0, const std::string& host = "127.0.0.1") {
    port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (port_ < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  /// Serves on the calling thread until stop().
  void run(int port, const std::string& host = "127.0.0.1") {
    if (!server_.bind_to_port(host, port))
      throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    port_ = port;
    server_.listen_after_bind();
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }
  httplib::Server& http() { return server_; }

 private:
  static void send(httplib::Response& res, const Reply& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  }

  void on_update(const httplib::Request& req, httplib::Response& res) {
    auto query = query_of_target(req.target);
    if (!query) return send(res, {400, "malformed query string"});
    if (req.method == "POST" && !req.body.empty()) {
      auto form = parse_query(req.body);
      if (!form) return send(res, {400, "malformed form body"});
      query->insert(query->end(), form->begin(), form->end());
    }
    send(res, service_.handle_update(*query));
  }

  void on_feeds(const httplib::Request& req, httplib::Response& res, FeedFormat fmt) {
    std::int64_t id = 0;
    const std::string& m = req.matches[1].str();
    auto [p, ec] = std::from_chars(m.data(), m.data() + m.size(), id);
    if (ec != std::errc()) return send(res, {404, "not found"});
    auto query = query_of_target(req.target);
    if (!query) return send(res, {400, "malformed query string"});
    std::optional<std::size_t> results;
    if (auto r = lookup(*query, "results")) {
      std::size_t n = 0;
      auto [rp, rec] = std::from_chars(r->data(), r->data() + r->size(), n);
      if (rec != std::errc() || rp != r->data() + r->size()) return send(res, {400, "bad results"});
      results = n;
    }
    send(res, service_.get_feeds(id, results, fmt, lookup(*query, "api_key")));
  }

  void on_create(const httplib::Request& req, httplib::Response& res) {
    auto body = nlohmann::json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object() || !body.contains("name"))
      return send(res, {400, R"({"error":"expected {name, field_names}"})", "application/json"});
    try {
      std::vector<std::string> names;
      if (body.contains("field_names")) names = body.at("field_names").get<std::vector<std::string>>();
      const bool priv = body.value("private", false);
      Channel c = service_.create_channel(body.at("name").get<std::string>(), names, priv);
      send(res, {200, channel_record(c).dump(), "application/json"});
    } catch (const std::exception& e) {
      send(res, {400, nlohmann::json{{"error", e.what()}}.dump(), "application/json"});
    }
  }

  void install_routes() {
    server_.Get("/update", [this](const auto& req, auto& res) { on_update(req, res); });
    server_.Post("/update", [this](const auto& req, auto& res) { on_update(req, res); });
    server_.Get(R"(/channels/(\d+)/feeds\.json)",
                [this](const auto& req, auto& res) { on_feeds(req, res, FeedFormat::json); });
    server_.Get(R"(/channels/(\d+)/feeds\.csv)",
                [this](const auto& req, auto& res) { on_feeds(req, res, FeedFormat::csv); });
    server_.Post("/admin/channels", [this](const auto& req, auto& res) { on_create(req, res); });
  }

  ChannelService& service_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace wcsim::cloud
