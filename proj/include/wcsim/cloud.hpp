#pragma once

// ThingSpeak-compatible channel service: keyed writes, per-channel rate
// limiting, gapless entry numbering, JSON/CSV feeds and NDJSON persistence.
// Transport-free; cloud_server.hpp puts it behind HTTP.

#include <fcntl.h>
#include <unistd.h>

#include <array>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <shared_mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iso8601.hpp"
#include "query.hpp"
#include "simcore.hpp"

namespace wcsim::cloud {

inline constexpr std::size_t kMaxFields = 8;
inline constexpr std::size_t kDefaultResults = 100;
inline constexpr std::size_t kMaxResults = 8000;

struct Channel {
  std::int64_t id = 0;
  std::string name;
  std::string write_key;
  std::optional<std::string> read_key;
  std::vector<std::string> field_names;
  EpochMillis created_at = 0;
};

struct FeedEntry {
  std::int64_t entry_id = 0;
  EpochMillis created_at = 0;
  std::array<std::optional<std::string>, kMaxFields> fields;

  bool operator==(const FeedEntry&) const = default;
};

struct ServiceConfig {
  std::filesystem::path data_dir;  // empty: in-memory only
  double min_interval_s = 15.0;
  std::uint64_t seed = 0;
  bool force_server_time = false;
};

using ServerClock = std::function<EpochMillis()>;
using Logger = std::function<void(const std::string&)>;

inline EpochMillis system_now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

struct Reply {
  int status = 200;
  std::string body;
  std::string content_type = "text/plain";
};

enum class FeedFormat { json, csv };

// ---------------------------------------------------------------------------
// Serialization of stored records
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json channel_record(const Channel& c) {
  nlohmann::ordered_json j;
  j["id"] = c.id;
  j["name"] = c.name;
  j["write_key"] = c.write_key;
  j["read_key"] = c.read_key ? nlohmann::ordered_json(*c.read_key) : nlohmann::ordered_json();
  j["field_names"] = c.field_names;
  j["created_at"] = format_iso8601(c.created_at);
  return j;
}

inline Channel channel_from_record(const nlohmann::json& j) {
  Channel c;
  c.id = j.at("id").get<std::int64_t>();
  c.name = j.at("name").get<std::string>();
  c.write_key = j.at("write_key").get<std::string>();
  if (!j.at("read_key").is_null()) c.read_key = j.at("read_key").get<std::string>();
  c.field_names = j.at("field_names").get<std::vector<std::string>>();
  auto t = parse_iso8601(j.at("created_at").get<std::string>());
  if (!t) throw std::invalid_argument("bad channel created_at");
  c.created_at = *t;
  return c;
}

inline nlohmann::ordered_json entry_record(const FeedEntry& e) {
  nlohmann::ordered_json j;
  j["created_at"] = format_iso8601(e.created_at);
  j["entry_id"] = e.entry_id;
  for (std::size_t i = 0; i < kMaxFields; ++i)
    j["field" + std::to_string(i + 1)] =
        e.fields[i] ? nlohmann::ordered_json(*e.fields[i]) : nlohmann::ordered_json();
  return j;
}

inline FeedEntry entry_from_record(const nlohmann::json& j) {
  FeedEntry e;
  e.entry_id = j.at("entry_id").get<std::int64_t>();
  auto t = parse_iso8601(j.at("created_at").get<std::string>());
  if (!t) throw std::invalid_argument("bad entry created_at");
  e.created_at = *t;
  for (std::size_t i = 0; i < kMaxFields; ++i) {
    const auto& v = j.at("field" + std::to_string(i + 1));
    if (!v.is_null()) e.fields[i] = v.get<std::string>();
  }
  return e;
}

inline bool is_decimal(const std::string& s) {
  static const std::regex re(R"(^[-+]?(\d+(\.\d*)?|\.\d+)$)");
  return std::regex_match(s, re);
}

// ---------------------------------------------------------------------------
// Append-only file
// ---------------------------------------------------------------------------

class AppendFile {
 public:
  explicit AppendFile(const std::filesystem::path& p) {
    fd_ = ::open(p.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) throw std::runtime_error("cannot open " + p.string() + " for append");
  }
  ~AppendFile() {
    if (fd_ >= 0) ::close(fd_);
  }
  AppendFile(const AppendFile&) = delete;
  AppendFile& operator=(const AppendFile&) = delete;

  bool append_line(const std::string& line) {
    std::string buf = line + "\n";
    std::string_view rest = buf;
    while (!rest.empty()) {
      const ssize_t n = ::write(fd_, rest.data(), rest.size());
      if (n < 0) {
        if (errno == EINTR) continue;
        return false;
      }
      rest.remove_prefix(static_cast<std::size_t>(n));
    }
    return true;
  }

 private:
  int fd_ = -1;
};

// ---------------------------------------------------------------------------
// Service
// ---------------------------------------------------------------------------

class ChannelService {
 public:
  explicit ChannelService(ServiceConfig cfg, ServerClock clock = system_now_ms,
                          Logger log = default_logger())
      : cfg_(std::move(cfg)), clock_(std::move(clock)), log_(std::move(log)), keygen_(cfg_.seed) {
    if (cfg_.min_interval_s < 0) throw std::invalid_argument("min_interval must be >= 0");
    if (!cfg_.data_dir.empty()) recover();
  }

  static Logger default_logger() {
    return [](const std::string& m) { std::cerr << "[cloud] " << m << "\n"; };
  }

  const ServiceConfig& config() const { return cfg_; }

  Channel create_channel(const std::string& name, const std::vector<std::string>& field_names,
                         bool private_channel = false) {
    if (name.empty()) throw std::invalid_argument("channel name must be non-empty");
    if (field_names.size() > kMaxFields)
      throw std::invalid_argument("at most 8 field names per channel");

    std::unique_lock lock(registry_mu_);
    Channel c;
    c.id = next_channel_id_;
    c.name = name;
    c.field_names = field_names;
    c.write_key = fresh_key();
    if (private_channel) c.read_key = fresh_key();
    c.created_at = clock_();
    if (channels_file_ && !channels_file_->append_line(channel_record(c).dump()))
      throw std::runtime_error("failed to persist channel");
    ++next_channel_id_;
    auto slot = std::make_unique<Slot>();
    slot->channel = c;
    if (!cfg_.data_dir.empty()) slot->file = std::make_unique<AppendFile>(entries_path(c.id));
    by_key_[c.write_key] = slot.get();
    slots_[c.id] = std::move(slot);
    return c;
  }

  std::optional<Channel> channel(std::int64_t id) const {
    std::shared_lock lock(registry_mu_);
    auto it = slots_.find(id);
    if (it == slots_.end()) return std::nullopt;
    return it->second->channel;
  }

  std::size_t channel_count() const {
    std::shared_lock lock(registry_mu_);
    return slots_.size();
  }

  std::vector<FeedEntry> entries(std::int64_t id) const {
    std::shared_lock lock(registry_mu_);
    auto it = slots_.find(id);
    if (it == slots_.end()) return {};
    std::lock_guard g(it->second->mu);
    return it->second->entries;
  }

  /// Body is the new entry_id, or "0" for an in-band rejection. Malformed input is 400.
  Reply handle_update(const QueryPairs& query) {
    std::optional<std::string> key;
    std::optional<EpochMillis> created_at;
    std::array<std::optional<std::string>, kMaxFields> fields;
    bool any_field = false;

    for (const auto& [k, v] : query) {
      if (k == "api_key" || k == "key") {
        if (key) return {400, "duplicate api_key"};
        key = v;
      } else if (k == "created_at") {
        if (created_at) return {400, "duplicate created_at"};
        created_at = parse_iso8601(v);
        if (!created_at) return {400, "malformed created_at"};
      } else if (k.size() == 6 && k.starts_with("field") && k[5] >= '1' && k[5] <= '8') {
        const std::size_t idx = static_cast<std::size_t>(k[5] - '1');
        if (fields[idx]) return {400, "duplicate " + k};
        if (v.empty()) continue;
        if (!is_decimal(v)) return {400, "non-decimal value for " + k};
        fields[idx] = v;
        any_field = true;
      }
      // Other ThingSpeak parameters (status, lat, long, ...) are accepted and ignored.
    }

    Slot* slot = nullptr;
    {
      std::shared_lock lock(registry_mu_);
      if (key) {
        auto it = by_key_.find(*key);
        if (it != by_key_.end()) slot = it->second;
      }
    }
    if (!slot || !any_field) return {200, "0"};

    // Server time is read under the channel lock so concurrent writers stamp in order.
    std::lock_guard g(slot->mu);
    const EpochMillis stamp = (cfg_.force_server_time || !created_at) ? clock_() : *created_at;
    if (!slot->entries.empty()) {
      const EpochMillis last = slot->entries.back().created_at;
      const auto min_gap = static_cast<EpochMillis>(std::llround(cfg_.min_interval_s * 1000.0));
      if (stamp < last || stamp - last < min_gap) return {200, "0"};
    }
    FeedEntry e;
    e.entry_id = static_cast<std::int64_t>(slot->entries.size()) + 1;
    e.created_at = stamp;
    e.fields = fields;
    if (slot->file && !slot->file->append_line(entry_record(e).dump())) {
      log_("write failed for channel " + std::to_string(slot->channel.id));
      return {200, "0"};
    }
    slot->entries.push_back(std::move(e));
    return {200, std::to_string(slot->entries.size())};
  }

  Reply get_feeds(std::int64_t id, std::optional<std::size_t> results, FeedFormat format,
                  const std::optional<std::string>& api_key) const {
    Channel ch;
    std::vector<FeedEntry> tail;
    {
      std::shared_lock lock(registry_mu_);
      auto it = slots_.find(id);
      if (it == slots_.end()) return {404, R"({"status":"404","error":"channel not found"})", "application/json"};
      const Slot& s = *it->second;
      ch = s.channel;
      if (ch.read_key && (!api_key || (*api_key != *ch.read_key && *api_key != ch.write_key)))
        return {401, R"({"status":"401","error":"read key required"})", "application/json"};
      std::lock_guard g(s.mu);
      const std::size_t n = std::min(results.value_or(kDefaultResults), kMaxResults);
      const std::size_t start = s.entries.size() > n ? s.entries.size() - n : 0;
      tail.assign(s.entries.begin() + static_cast<std::ptrdiff_t>(start), s.entries.end());
    }
    if (format == FeedFormat::csv) return {200, render_csv(tail), "text/csv"};
    return {200, render_json(ch, tail), "application/json"};
  }

  static std::string render_json(const Channel& ch, const std::vector<FeedEntry>& feeds) {
    nlohmann::ordered_json c;
    c["id"] = ch.id;
    c["name"] = ch.name;
    for (std::size_t i = 0; i < ch.field_names.size(); ++i)
      c["field" + std::to_string(i + 1)] = ch.field_names[i];
    c["created_at"] = format_iso8601(ch.created_at);
    c["updated_at"] = format_iso8601(feeds.empty() ? ch.created_at : feeds.back().created_at);
    c["last_entry_id"] = feeds.empty() ? nlohmann::ordered_json() : nlohmann::ordered_json(feeds.back().entry_id);
    nlohmann::ordered_json doc;
    doc["channel"] = c;
    doc["feeds"] = nlohmann::ordered_json::array();
    for (const auto& e : feeds) doc["feeds"].push_back(entry_record(e));
    return doc.dump();
  }

  static std::string render_csv(const std::vector<FeedEntry>& feeds) {
    std::string out = "created_at,entry_id,field1,field2,field3,field4,field5,field6,field7,field8\n";
    for (const auto& e : feeds) {
      out += format_iso8601(e.created_at) + "," + std::to_string(e.entry_id);
      for (const auto& f : e.fields) out += "," + f.value_or("");
      out += "\n";
    }
    return out;
  }

 private:
  struct Slot {
    Channel channel;
    std::vector<FeedEntry> entries;
    std::unique_ptr<AppendFile> file;
    mutable std::mutex mu;
  };

  std::filesystem::path entries_path(std::int64_t id) const {
    return cfg_.data_dir / ("channel_" + std::to_string(id) + ".ndjson");
  }

  std::string fresh_key() {
    static constexpr char alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
    for (;;) {
      std::string k;
      for (int i = 0; i < 16; ++i) k += alphabet[keygen_.next_u64() % 36];
      bool taken = by_key_.count(k) > 0;
      for (const auto& [id, s] : slots_)
        if (s->channel.read_key == k) taken = true;
      if (!taken) return k;
    }
  }

  // Valid lines of an NDJSON file; a damaged tail is cut back to the last good line.
  std::vector<nlohmann::json> load_lines(const std::filesystem::path& p) {
    std::vector<nlohmann::json> out;
    std::ifstream in(p, std::ios::binary);
    if (!in) return out;
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t pos = 0, good_end = 0;
    bool damaged = false;
    while (pos < text.size()) {
      auto nl = text.find('\n', pos);
      if (nl == std::string::npos) {
        damaged = true;  // unterminated final line
        break;
      }
      auto j = nlohmann::json::parse(text.begin() + static_cast<std::ptrdiff_t>(pos),
                                     text.begin() + static_cast<std::ptrdiff_t>(nl), nullptr, false);
      if (j.is_discarded()) {
        damaged = true;
        break;
      }
      out.push_back(std::move(j));
      pos = nl + 1;
      good_end = pos;
    }
    if (damaged) {
      log_("warning: dropping damaged record(s) at byte " + std::to_string(good_end) + " of " +
           p.string());
      std::filesystem::resize_file(p, good_end);
    }
    return out;
  }

  void recover() {
    std::error_code ec;
    std::filesystem::create_directories(cfg_.data_dir, ec);
    if (ec || !std::filesystem::is_directory(cfg_.data_dir))
      throw std::runtime_error("data dir " + cfg_.data_dir.string() + " is not usable");
    const auto chan_path = cfg_.data_dir / "channels.ndjson";
    for (const auto& j : load_lines(chan_path)) {
      Channel c;
      try {
        c = channel_from_record(j);
      } catch (const std::exception& e) {
        log_(std::string("warning: skipping bad channel record: ") + e.what());
        continue;
      }
      auto slot = std::make_unique<Slot>();
      slot->channel = c;
      for (const auto& ej : load_lines(entries_path(c.id))) {
        FeedEntry e;
        try {
          e = entry_from_record(ej);
        } catch (const std::exception& ex) {
          log_(std::string("warning: stopping at bad entry record: ") + ex.what());
          break;
        }
        if (e.entry_id != static_cast<std::int64_t>(slot->entries.size()) + 1) {
          log_("warning: entry numbering gap in channel " + std::to_string(c.id));
          break;
        }
        slot->entries.push_back(std::move(e));
      }
      slot->file = std::make_unique<AppendFile>(entries_path(c.id));
      by_key_[c.write_key] = slot.get();
      next_channel_id_ = std::max(next_channel_id_, c.id + 1);
      slots_[c.id] = std::move(slot);
    }
    channels_file_ = std::make_unique<AppendFile>(chan_path);  // throws if unwritable
  }

  ServiceConfig cfg_;
  ServerClock clock_;
  Logger log_;
  Rng keygen_;

  mutable std::shared_mutex registry_mu_;
  std::map<std::int64_t, std::unique_ptr<Slot>> slots_;
  std::map<std::string, Slot*> by_key_;
  std::int64_t next_channel_id_ = 1;
  std::unique_ptr<AppendFile> channels_file_;
};

}  // namespace wcsim::cloud
