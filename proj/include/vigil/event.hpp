#pragma once

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <string>
#include <vector>

#include "vigil/errors.hpp"
#include "vigil/time.hpp"

namespace vigil {

/// One behavioral record from the supervised agent's JSONL log.
struct Event {
  Instant ts{};
  std::string kind;             // dotted event name, e.g. "reminder.toast"
  std::string status = "info";  // preserved verbatim; unknown values appraise as "info"
  nlohmann::json payload = nlohmann::json::object();
  bool ts_was_naive = false;    // source timestamp carried no zone designator

  bool operator==(const Event& other) const {
    return ts == other.ts && kind == other.kind && status == other.status &&
           payload == other.payload && ts_was_naive == other.ts_was_naive;
  }
};

inline const std::vector<std::string>& known_statuses() {
  static const std::vector<std::string> statuses{"success", "ok", "delay",
                                                 "fail",    "info", "error"};
  return statuses;
}

/// Parse one JSONL line into an Event. Naive timestamps are read as UTC and
/// flagged; kind must be non-empty without whitespace. Missing status defaults
/// to "info" and missing payload to {}.
inline Event parse_event(const std::string& line) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw error(errc::parse, "malformed JSON at byte " + std::to_string(e.byte) + ": " +
                                 std::string(e.what()));
  }
  if (!doc.is_object()) {
    throw error(errc::parse, "event line is not a JSON object");
  }
  if (!doc.contains("ts")) throw error(errc::schema, "missing field: ts");
  if (!doc.contains("kind")) throw error(errc::schema, "missing field: kind");
  if (!doc["ts"].is_string()) throw error(errc::timestamp, "ts is not a string");
  if (!doc["kind"].is_string()) throw error(errc::schema, "kind is not a string");

  Event e;
  const ParsedInstant parsed = parse_iso8601(doc["ts"].get<std::string>());
  e.ts = parsed.value;
  e.ts_was_naive = parsed.was_naive;
  e.kind = doc["kind"].get<std::string>();
  if (e.kind.empty() ||
      std::any_of(e.kind.begin(), e.kind.end(),
                  [](unsigned char c) { return std::isspace(c) != 0; })) {
    throw error(errc::schema, "invalid kind: must be non-empty without whitespace");
  }
  if (doc.contains("status")) {
    if (!doc["status"].is_string()) throw error(errc::schema, "status is not a string");
    e.status = doc["status"].get<std::string>();
  }
  if (doc.contains("payload")) {
    e.payload = doc["payload"];
  }
  return e;
}

/// Serialize to one JSON line (no trailing newline). Naive-source timestamps
/// are written back without a zone designator so parse(serialize(e)) == e.
inline std::string serialize_event(const Event& e) {
  nlohmann::json doc;
  doc["ts"] = format_iso8601(e.ts, /*zone_qualified=*/!e.ts_was_naive);
  doc["kind"] = e.kind;
  doc["status"] = e.status;
  doc["payload"] = e.payload;
  return doc.dump();
}

struct EventWindow {
  std::vector<Event> events;   // ascending by ts, all within [now - window, now]
  std::size_t skipped = 0;     // malformed lines tolerated and counted
};

/// Read the JSONL log and return the most recent `max_events` events whose
/// timestamps fall in [now - window_hours, now], ascending. Malformed lines
/// are skipped and counted rather than aborting the scan.
inline EventWindow load_window(const std::string& path, Instant now, double window_hours = 24.0,
                               std::size_t max_events = 500) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error(errc::io, "cannot read event log: " + path);

  const Instant window_start =
      now - std::chrono::milliseconds(static_cast<long long>(window_hours * 3600.0 * 1000.0));

  EventWindow result;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    Event e;
    try {
      e = parse_event(line);
    } catch (const error&) {
      ++result.skipped;
      continue;
    }
    if (e.ts < window_start || e.ts > now) continue;
    result.events.push_back(std::move(e));
  }

  std::stable_sort(result.events.begin(), result.events.end(),
                   [](const Event& a, const Event& b) { return a.ts < b.ts; });
  if (result.events.size() > max_events) {
    result.events.erase(result.events.begin(),
                        result.events.end() - static_cast<std::ptrdiff_t>(max_events));
  }
  return result;
}

/// Append one event as a single line. The parent directory must already
/// exist; existing content is never touched.
inline void append_event(const std::string& path, const Event& e) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw error(errc::io, "cannot append to event log: " + path);
  out << serialize_event(e) << '\n';
  out.flush();
  if (!out) throw error(errc::io, "write failed: " + path);
}

}  // namespace vigil
