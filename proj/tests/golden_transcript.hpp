#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "wcsim/atlink.hpp"

// Checked-in modem transcripts: one event per line, "<direction> <kind> <bytes>",
// with \r, \n and \\ escaped. Lines starting with '#' are comments.
inline std::vector<wcsim::at::AtEvent> load_transcript(const std::string& path) {
  using namespace wcsim::at;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<AtEvent> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string dir, kind;
    ls >> dir >> kind;
    const std::string raw = line.substr(dir.size() + kind.size() + 2);
    std::string bytes;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] == '\\' && i + 1 < raw.size()) {
        const char n = raw[++i];
        bytes += n == 'r' ? '\r' : n == 'n' ? '\n' : n;
      } else {
        bytes += raw[i];
      }
    }
    AtEventKind k = AtEventKind::response;
    bool known = false;
    for (auto cand : {AtEventKind::command, AtEventKind::response, AtEventKind::prompt,
                      AtEventKind::payload, AtEventKind::ipd})
      if (kind == to_string(cand)) {
        k = cand;
        known = true;
      }
    if (!known || (dir != "to_modem" && dir != "from_modem"))
      throw std::runtime_error("bad transcript line: " + line);
    out.push_back({dir == "to_modem" ? Direction::to_modem : Direction::from_modem, k, bytes});
  }
  return out;
}
