#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <string>

#include "vigil/errors.hpp"

namespace vigil {

/// UTC instant at millisecond resolution. All timestamps in the runtime are
/// zone-qualified; naive inputs are interpreted as UTC at the parse boundary.
using Instant = std::chrono::sys_time<std::chrono::milliseconds>;

struct ParsedInstant {
  Instant value;
  bool was_naive = false;  // source carried no zone designator
};

namespace time_detail {

inline bool read_digits(const std::string& s, std::size_t& pos, int count, int& out) {
  int v = 0;
  for (int i = 0; i < count; ++i) {
    if (pos >= s.size() || s[pos] < '0' || s[pos] > '9') return false;
    v = v * 10 + (s[pos] - '0');
    ++pos;
  }
  out = v;
  return true;
}

inline bool expect(const std::string& s, std::size_t& pos, char c) {
  if (pos >= s.size() || s[pos] != c) return false;
  ++pos;
  return true;
}

}  // namespace time_detail

/// Parse an ISO-8601 timestamp: `YYYY-MM-DDTHH:MM:SS[.fff][Z|±HH[:]MM]`.
/// A missing zone designator yields `was_naive = true` with the wall time
/// taken as UTC. Throws errc::timestamp on malformed input.
inline ParsedInstant parse_iso8601(const std::string& text) {
  using namespace std::chrono;
  namespace d = time_detail;

  std::size_t pos = 0;
  int year = 0, month = 0, day = 0, hour = 0, minute = 0, second = 0;
  bool ok = d::read_digits(text, pos, 4, year) && d::expect(text, pos, '-') &&
            d::read_digits(text, pos, 2, month) && d::expect(text, pos, '-') &&
            d::read_digits(text, pos, 2, day);
  if (ok) {
    if (pos >= text.size() || (text[pos] != 'T' && text[pos] != ' ')) ok = false;
    else ++pos;
  }
  ok = ok && d::read_digits(text, pos, 2, hour) && d::expect(text, pos, ':') &&
       d::read_digits(text, pos, 2, minute) && d::expect(text, pos, ':') &&
       d::read_digits(text, pos, 2, second);
  if (!ok || month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 || minute > 59 ||
      second > 60) {
    throw error(errc::timestamp, "unparseable timestamp: " + text);
  }

  int millis = 0;
  if (pos < text.size() && text[pos] == '.') {
    ++pos;
    int scale = 100;
    bool any = false;
    while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
      if (scale > 0) millis += (text[pos] - '0') * scale;
      scale /= 10;
      any = true;
      ++pos;
    }
    if (!any) throw error(errc::timestamp, "unparseable timestamp: " + text);
  }

  bool naive = false;
  minutes zone_offset{0};
  if (pos == text.size()) {
    naive = true;
  } else if (text[pos] == 'Z' || text[pos] == 'z') {
    ++pos;
  } else if (text[pos] == '+' || text[pos] == '-') {
    const int sign = text[pos] == '+' ? 1 : -1;
    ++pos;
    int oh = 0, om = 0;
    if (!d::read_digits(text, pos, 2, oh)) {
      throw error(errc::timestamp, "unparseable timestamp: " + text);
    }
    if (pos < text.size() && text[pos] == ':') ++pos;
    if (pos < text.size()) {
      if (!d::read_digits(text, pos, 2, om)) {
        throw error(errc::timestamp, "unparseable timestamp: " + text);
      }
    }
    zone_offset = minutes{sign * (oh * 60 + om)};
  }
  if (pos != text.size()) {
    throw error(errc::timestamp, "unparseable timestamp: " + text);
  }

  const sys_days days = sys_days{year_month_day{std::chrono::year{year},
                                                std::chrono::month{unsigned(month)},
                                                std::chrono::day{unsigned(day)}}};
  Instant instant = days + hours{hour} + minutes{minute} + seconds{second} +
                    milliseconds{millis} - zone_offset;
  return ParsedInstant{instant, naive};
}

/// Format as `YYYY-MM-DDTHH:MM:SS[.fff]Z`, or without the `Z` when
/// `zone_qualified` is false (used to round-trip naive source timestamps).
inline std::string format_iso8601(Instant t, bool zone_qualified = true) {
  using namespace std::chrono;
  const sys_days days = floor<std::chrono::days>(t);
  const year_month_day ymd{days};
  const auto tod = t - days;
  const auto h = duration_cast<hours>(tod);
  const auto m = duration_cast<minutes>(tod - h);
  const auto s = duration_cast<seconds>(tod - h - m);
  const auto ms = duration_cast<milliseconds>(tod - h - m - s);

  char buf[48];
  if (ms.count() != 0) {
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02lld:%02lld:%02lld.%03lld",
                  int(ymd.year()), unsigned(ymd.month()), unsigned(ymd.day()),
                  static_cast<long long>(h.count()), static_cast<long long>(m.count()),
                  static_cast<long long>(s.count()), static_cast<long long>(ms.count()));
  } else {
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02lld:%02lld:%02lld", int(ymd.year()),
                  unsigned(ymd.month()), unsigned(ymd.day()), static_cast<long long>(h.count()),
                  static_cast<long long>(m.count()), static_cast<long long>(s.count()));
  }
  std::string out{buf};
  if (zone_qualified) out.push_back('Z');
  return out;
}

/// Compact UTC stamp `YYYYMMDDTHHMMSSZ`, used for run ids and artifact names.
inline std::string format_compact(Instant t) {
  using namespace std::chrono;
  const sys_days days = floor<std::chrono::days>(t);
  const year_month_day ymd{days};
  const auto tod = t - days;
  const auto h = duration_cast<hours>(tod);
  const auto m = duration_cast<minutes>(tod - h);
  const auto s = duration_cast<seconds>(tod - h - m);
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%04d%02u%02uT%02lld%02lld%02lldZ", int(ymd.year()),
                unsigned(ymd.month()), unsigned(ymd.day()), static_cast<long long>(h.count()),
                static_cast<long long>(m.count()), static_cast<long long>(s.count()));
  return std::string{buf};
}

inline double hours_between(Instant earlier, Instant later) {
  return std::chrono::duration<double, std::ratio<3600>>(later - earlier).count();
}

inline Instant system_now() {
  return std::chrono::time_point_cast<std::chrono::milliseconds>(
      std::chrono::system_clock::now());
}

}  // namespace vigil
