#pragma once

#include <cstdint>
#include <cstdio>
#include <ctime>
#include <optional>
#include <string>
#include <string_view>

namespace wcsim {

/// Milliseconds since the Unix epoch.
using EpochMillis = std::int64_t;

inline constexpr EpochMillis kDefaultScenarioEpoch = 1704067200000LL;  // 2024-01-01T00:00:00Z

/// "YYYY-MM-DDTHH:MM:SSZ", with ".mmm" inserted only when the milliseconds are non-zero.
inline std::string format_iso8601(EpochMillis ms) {
  std::int64_t secs = ms / 1000;
  int frac = static_cast<int>(ms % 1000);
  if (frac < 0) {
    frac += 1000;
    secs -= 1;
  }
  const std::time_t tt = static_cast<std::time_t>(secs);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[96];
  if (frac == 0)
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                  tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
  else
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, frac);
  return buf;
}

inline std::optional<EpochMillis> parse_iso8601(std::string_view s) {
  auto digits = [&](std::size_t pos, std::size_t n) -> std::optional<int> {
    if (pos + n > s.size()) return std::nullopt;
    int v = 0;
    for (std::size_t i = pos; i < pos + n; ++i) {
      if (s[i] < '0' || s[i] > '9') return std::nullopt;
      v = v * 10 + (s[i] - '0');
    }
    return v;
  };
  // YYYY-MM-DDTHH:MM:SS
  if (s.size() < 20 || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ') ||
      s[13] != ':' || s[16] != ':')
    return std::nullopt;
  auto year = digits(0, 4), mon = digits(5, 2), day = digits(8, 2);
  auto hh = digits(11, 2), mm = digits(14, 2), ss = digits(17, 2);
  if (!year || !mon || !day || !hh || !mm || !ss) return std::nullopt;
  if (*mon < 1 || *mon > 12 || *day < 1 || *day > 31 || *hh > 23 || *mm > 59 || *ss > 60)
    return std::nullopt;
  std::size_t pos = 19;
  int frac = 0;
  if (pos < s.size() && s[pos] == '.') {
    auto f = digits(pos + 1, 3);
    if (!f) return std::nullopt;
    frac = *f;
    pos += 4;
  }
  if (pos + 1 != s.size() || s[pos] != 'Z') return std::nullopt;

  std::tm tm{};
  tm.tm_year = *year - 1900;
  tm.tm_mon = *mon - 1;
  tm.tm_mday = *day;
  tm.tm_hour = *hh;
  tm.tm_min = *mm;
  tm.tm_sec = *ss;
  const std::time_t secs = timegm(&tm);
  return static_cast<EpochMillis>(secs) * 1000 + frac;
}

}  // namespace wcsim
