#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "vigil/errors.hpp"
#include "vigil/event.hpp"
#include "vigil/time.hpp"

namespace vigil {

/// Parameters for a synthetic supervised-agent trace. Delays are a pure
/// function of (n_reminders, mean, max, seed).
struct Scenario {
  int n_reminders = 12;
  double mean_delay_sec = 97.0;
  double max_delay_sec = 180.0;
  bool premature_toasts = true;      // toast emitted before its receipt
  bool mix_timestamp_formats = true; // alternate zoned and naive timestamps
  std::uint64_t seed = 7;
  bool post_fix = false;             // receipt-gated behavior, small latency

  /// post_fix forces receipt-gated ordering and a small mean latency.
  void normalize() {
    if (post_fix) {
      premature_toasts = false;
      mean_delay_sec = std::min(mean_delay_sec, 10.0);
      max_delay_sec = std::max(max_delay_sec > 0 ? std::min(max_delay_sec, 12.0) : 10.0,
                               mean_delay_sec);
    }
  }

  static Scenario before_preset() { return Scenario{}; }

  static Scenario after_preset() {
    Scenario s;
    s.mean_delay_sec = 8.0;
    s.max_delay_sec = 10.0;
    s.premature_toasts = false;
    s.mix_timestamp_formats = false;
    s.post_fix = true;
    s.normalize();
    return s;
  }
};

struct SimReport {
  int events_written = 0;
  int n_reminders = 0;
  int premature_count = 0;       // reminders whose toast precedes its receipt
  double mean_delay_sec = 0.0;
  double max_delay_sec = 0.0;
};

namespace sim_detail {

/// Symmetric triangular quantile spread around the mean, then one delay is
/// forced up to max_delay with the smallest compensated down so the mean is
/// preserved exactly. Ranks are deterministic; the seed only permutes which
/// reminder receives which delay.
inline std::vector<double> delay_multiset(int n, double mean, double max_delay) {
  std::vector<double> delays(std::size_t(n > 0 ? n : 0));
  if (n <= 0) return delays;
  if (n == 1) {
    delays[0] = std::min(mean, max_delay);
    return delays;
  }
  const double width = std::max(0.0, std::min(max_delay - mean, mean));
  for (int i = 0; i < n; ++i) {
    const double t = (i + 0.5) / n;
    const double quantile =
        t < 0.5 ? std::sqrt(2.0 * t) - 1.0 : 1.0 - std::sqrt(2.0 * (1.0 - t));
    delays[std::size_t(i)] = mean + width * quantile;
  }
  if (width > 0.0) {
    const auto max_it = std::max_element(delays.begin(), delays.end());
    const auto min_it = std::min_element(delays.begin(), delays.end());
    const double bump = max_delay - *max_it;
    if (bump > 0.0 && *min_it - bump >= 0.0) {
      *min_it -= bump;
      *max_it = max_delay;
    }
  }
  for (double& d : delays) d = std::clamp(d, 0.0, max_delay);
  return delays;
}

/// Fisher-Yates with an explicit draw so the permutation is identical on
/// every platform (std::shuffle is implementation-defined).
template <typename T>
inline void deterministic_shuffle(std::vector<T>& values, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = values.size(); i > 1; --i) {
    const std::size_t j = std::size_t(rng() % i);
    std::swap(values[i - 1], values[j]);
  }
}

inline Instant plus_seconds(Instant t, double seconds) {
  return t + std::chrono::milliseconds(static_cast<long long>(std::llround(seconds * 1000.0)));
}

}  // namespace sim_detail

/// Emit schedule/toast/receipt event triplets for each reminder into a fresh
/// JSONL log. The reminder with the largest delay lands in the final slot so
/// the worst regression is also the most recent.
inline SimReport generate_log(Scenario s, const std::string& out_path, Instant now) {
  namespace fs = std::filesystem;
  s.normalize();

  SimReport report;
  report.n_reminders = s.n_reminders;

  const fs::path out{out_path};
  if (out.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(out.parent_path(), ec);
  }
  std::ofstream file(out, std::ios::binary | std::ios::trunc);
  if (!file) throw error(errc::io, "cannot write log: " + out_path);
  if (s.n_reminders <= 0) return report;

  std::vector<double> delays =
      sim_detail::delay_multiset(s.n_reminders, s.mean_delay_sec, s.max_delay_sec);
  // Fail/delay split by rank: the worst ~2/3 of delays produce hard failures.
  std::vector<double> sorted = delays;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t fail_count = std::size_t((2 * s.n_reminders + 2) / 3);
  const double fail_threshold =
      sorted[sorted.size() - std::min(fail_count, sorted.size())];

  sim_detail::deterministic_shuffle(delays, s.seed);
  const auto max_it = std::max_element(delays.begin(), delays.end());
  std::swap(*max_it, delays.back());

  const double window_sec = 22.0 * 3600.0;
  const double tail_sec = 200.0;
  const double spacing =
      s.n_reminders > 1 ? (window_sec - tail_sec) / (s.n_reminders - 1) : 0.0;

  int event_index = 0;
  double delay_sum = 0.0;
  auto emit = [&](Instant ts, const std::string& kind, const std::string& status,
                  nlohmann::json payload) {
    Event e;
    e.ts = ts;
    e.kind = kind;
    e.status = status;
    e.payload = std::move(payload);
    e.ts_was_naive = s.mix_timestamp_formats && (event_index % 2 == 1);
    file << serialize_event(e) << '\n';
    ++event_index;
  };

  for (int i = 0; i < s.n_reminders; ++i) {
    const double d = delays[std::size_t(i)];
    delay_sum += d;
    report.max_delay_sec = std::max(report.max_delay_sec, d);
    const Instant base = s.n_reminders > 1
                             ? sim_detail::plus_seconds(now, -window_sec + spacing * i)
                             : sim_detail::plus_seconds(now, -tail_sec);

    emit(base, "reminder.schedule", "info", {{"reminder_id", i}});
    if (s.premature_toasts) {
      const std::string status = d >= fail_threshold ? "fail" : "delay";
      emit(sim_detail::plus_seconds(base, 2.0), "reminder.toast", status,
           {{"reminder_id", i}, {"delayed_by_sec", d}});
      emit(sim_detail::plus_seconds(base, 2.0 + d), "reminder.receipt", "ok",
           {{"reminder_id", i}});
      ++report.premature_count;
    } else {
      emit(sim_detail::plus_seconds(base, d), "reminder.receipt", "ok",
           {{"reminder_id", i}});
      emit(sim_detail::plus_seconds(base, d + 1.0), "reminder.toast", "success",
           {{"reminder_id", i}, {"delayed_by_sec", d}});
    }
  }
  file.flush();
  if (!file) throw error(errc::io, "write failed: " + out_path);

  report.events_written = event_index;
  report.mean_delay_sec = delay_sum / s.n_reminders;
  return report;
}

namespace sim_detail {

struct FixtureFile {
  const char* path;
  const char* content;
};

inline const std::vector<FixtureFile>& defective_fixture() {
  static const std::vector<FixtureFile> files{
      {"agent/reminders.py",
       R"py("""Reminder scheduling for the toy agent."""

from datetime import datetime

from agent import backend
from agent import notify


def schedule_reminder(message, minutes):
    scheduled_at = datetime.now()
    stamp = scheduled_at.strftime("%Y-%m-%d %H:%M:%S")
    backend.enqueue(message, stamp, minutes)
    notify.toast("Reminder set: " + message)
    return stamp
)py"},
      {"agent/notify.py",
       R"py("""Toast notification helpers."""

import requests


def toast(message):
    response = requests.post("http://backend.local/toast", json={"message": message})
    return response
)py"},
      {"agent/backend.py",
       R"py("""Pretend backend queue for the toy agent."""

_QUEUE = []


def enqueue(message, stamp, minutes):
    _QUEUE.append((message, stamp, minutes))
    return {"id": len(_QUEUE), "stamp": stamp}


def receipt_status(stamp):
    for _message, queued_stamp, _minutes in _QUEUE:
        if queued_stamp == stamp:
            return {"confirmed": True, "stamp": stamp}
    return {"confirmed": False, "stamp": stamp}
)py"},
  };
  return files;
}

inline const std::vector<FixtureFile>& clean_fixture() {
  static const std::vector<FixtureFile> files{
      {"agent/reminders.py",
       R"py("""Reminder scheduling for the receipt-gated toy agent."""

from datetime import datetime, timezone

from agent import backend
from agent import notify


def schedule_reminder(message, minutes):
    scheduled_at = datetime.now(timezone.utc)
    stamp = scheduled_at.strftime("%Y-%m-%dT%H:%M:%S%z")
    backend.enqueue(message, stamp, minutes)
    receipt = backend.receipt_status(stamp)
    if receipt.get("confirmed"):
        notify.toast("Reminder set: " + message)
    return stamp
)py"},
      {"agent/notify.py",
       R"py("""Toast notification helpers with retry protection."""

import requests


def toast(message):
    for attempt in range(2):  # one retry guards against transient failures
        response = requests.post("http://backend.local/toast",
                                 json={"message": message}, timeout=5)
        if response.ok:
            return True
    return False
)py"},
      {"agent/backend.py",
       R"py("""Pretend backend queue for the toy agent."""

_QUEUE = []


def enqueue(message, stamp, minutes):
    _QUEUE.append((message, stamp, minutes))
    return {"id": len(_QUEUE), "stamp": stamp}


def receipt_status(stamp):
    for _message, queued_stamp, _minutes in _QUEUE:
        if queued_stamp == stamp:
            return {"confirmed": True, "stamp": stamp}
    return {"confirmed": False, "stamp": stamp}
)py"},
  };
  return files;
}

}  // namespace sim_detail

/// Write the toy agent repo the scanner runs against. The defective variant
/// carries exactly the hotspot patterns the default rules target; the clean
/// variant is the receipt-gated rewrite with none. Never clobbers: the root
/// must be absent or empty.
inline std::vector<std::string> generate_fixture_repo(const std::string& root, bool defective) {
  namespace fs = std::filesystem;
  const fs::path root_path{root};
  if (fs::exists(root_path)) {
    if (!fs::is_directory(root_path)) {
      throw error(errc::config, "fixture root is not a directory: " + root);
    }
    if (!fs::is_empty(root_path)) {
      throw error(errc::config, "refusing to write fixture into non-empty directory: " + root);
    }
  }

  const auto& files = defective ? sim_detail::defective_fixture() : sim_detail::clean_fixture();
  std::vector<std::string> written;
  for (const auto& f : files) {
    const fs::path target = root_path / f.path;
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
    std::ofstream out(target, std::ios::binary | std::ios::trunc);
    if (!out) throw error(errc::io, "cannot write fixture file: " + target.string());
    out << f.content;
    out.flush();
    if (!out) throw error(errc::io, "write failed: " + target.string());
    written.push_back(f.path);
  }
  std::sort(written.begin(), written.end());
  return written;
}

}  // namespace vigil
