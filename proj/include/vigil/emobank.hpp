#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vigil/appraisal.hpp"
#include "vigil/errors.hpp"
#include "vigil/time.hpp"

namespace vigil {

/// One physical row of the bank file. The file is strictly append-only:
/// coalescing and decay are applied at read time, never by rewriting rows.
struct BankEntry {
  Instant ts{};
  std::string emotion;
  double intensity = 0.0;
  double valence = 0.0;
  std::string cause;
  std::string episode;
  std::int64_t entry_id = 0;
  std::optional<std::int64_t> coalesced_with;  // amplifies the referenced row
  bool synthetic = false;                      // rebound shadow entries only

  nlohmann::json to_json() const {
    nlohmann::json doc;
    doc["ts"] = format_iso8601(ts);
    doc["emotion"] = emotion;
    doc["intensity"] = intensity;
    doc["valence"] = valence;
    doc["cause"] = cause;
    doc["episode"] = episode;
    doc["entry_id"] = entry_id;
    if (coalesced_with) doc["coalesced_with"] = *coalesced_with;
    if (synthetic) doc["synthetic"] = true;
    return doc;
  }

  static BankEntry from_json(const nlohmann::json& doc) {
    BankEntry e;
    e.ts = parse_iso8601(doc.at("ts").get<std::string>()).value;
    e.emotion = doc.at("emotion").get<std::string>();
    e.intensity = doc.at("intensity").get<double>();
    e.valence = doc.at("valence").get<double>();
    e.cause = doc.at("cause").get<std::string>();
    e.episode = doc.value("episode", std::string{});
    e.entry_id = doc.at("entry_id").get<std::int64_t>();
    if (doc.contains("coalesced_with")) e.coalesced_with = doc["coalesced_with"].get<std::int64_t>();
    e.synthetic = doc.value("synthetic", false);
    return e;
  }
};

/// Exponential half-life decay: intensity * 0.5^(elapsed / half_life).
inline double half_life_decay(double intensity, double elapsed_hours, double half_life_hours) {
  if (half_life_hours <= 0.0) throw error(errc::config, "half-life must be positive");
  if (elapsed_hours < 0.0) {
    throw error(errc::internal, "decay requires now >= entry ts (clock skew at caller)");
  }
  return intensity * std::pow(0.5, elapsed_hours / half_life_hours);
}

inline double decayed_intensity(const BankEntry& entry, Instant now, double half_life_hours) {
  return half_life_decay(entry.intensity, hours_between(entry.ts, now), half_life_hours);
}

/// A head row merged with its amplification chain. Each coalesced row adds a
/// fixed +0.1 boost; the effective raw intensity is capped at 1.0 and decays
/// from the head row's timestamp.
struct LogicalEntry {
  BankEntry head;
  int boost_count = 0;
  std::vector<std::int64_t> evidence;  // head id plus amplification row ids
  Instant last_ts{};                   // ts of the newest row in the chain

  static constexpr double kBoostPerCoalesce = 0.1;

  double effective_raw_intensity() const {
    return std::min(1.0, head.intensity + kBoostPerCoalesce * boost_count);
  }
};

inline double decayed_intensity(const LogicalEntry& entry, Instant now, double half_life_hours) {
  return half_life_decay(entry.effective_raw_intensity(), hours_between(entry.head.ts, now),
                         half_life_hours);
}

enum class DepositKind { stored, discarded_noise, coalesced, stored_with_rebound };

struct DepositOutcome {
  DepositKind kind = DepositKind::stored;
  std::optional<std::int64_t> coalesced_with;   // prior row amplified, when coalesced
  std::vector<std::int64_t> appended_ids;       // physical rows written by this deposit
};

inline const char* to_string(DepositKind k) {
  switch (k) {
    case DepositKind::stored: return "stored";
    case DepositKind::discarded_noise: return "discarded_noise";
    case DepositKind::coalesced: return "coalesced";
    case DepositKind::stored_with_rebound: return "stored_with_rebound";
  }
  return "?";
}

/// Weights for the composite snapshot signals. Kept in one place so tests can
/// pin exact values and configs can override them.
struct CompositeWeights {
  double stress_frustration = 0.7;
  double stress_anxiety = 0.7;
  double energy_joy = 0.5;
  double energy_pride = 0.5;
  double energy_curiosity = 0.3;
  double energy_determination = 0.4;
  double motivation_determination = 0.6;
  double motivation_curiosity = 0.4;
  double motivation_pride = 0.3;
  double focus_calm = 0.5;

  static CompositeWeights from_json(const nlohmann::json& doc) {
    CompositeWeights w;
    auto get = [&](const char* key, double& slot) {
      if (doc.contains(key)) slot = doc[key].get<double>();
    };
    get("stress_frustration", w.stress_frustration);
    get("stress_anxiety", w.stress_anxiety);
    get("energy_joy", w.energy_joy);
    get("energy_pride", w.energy_pride);
    get("energy_curiosity", w.energy_curiosity);
    get("energy_determination", w.energy_determination);
    get("motivation_determination", w.motivation_determination);
    get("motivation_curiosity", w.motivation_curiosity);
    get("motivation_pride", w.motivation_pride);
    get("focus_calm", w.focus_calm);
    return w;
  }
};

/// Decayed aggregate of recent affect.
struct EmoSnapshot {
  std::string mood = "neutral";
  std::vector<std::pair<std::string, double>> dominant_emotions;  // <= 3, descending
  double energy = 0.0;
  double stress = 0.0;
  double motivation = 0.0;
  double focus = 0.5;
  Instant as_of{};
  double half_life_hours = 12.0;

  nlohmann::json to_json() const {
    nlohmann::json doc;
    doc["mood"] = mood;
    doc["dominant_emotions"] = nlohmann::json::array();
    for (const auto& [emotion, value] : dominant_emotions) {
      doc["dominant_emotions"].push_back({{"emotion", emotion}, {"intensity", value}});
    }
    doc["energy"] = energy;
    doc["stress"] = stress;
    doc["motivation"] = motivation;
    doc["focus"] = focus;
    doc["as_of"] = format_iso8601(as_of);
    doc["half_life_hours"] = half_life_hours;
    return doc;
  }

  static EmoSnapshot from_json(const nlohmann::json& doc) {
    EmoSnapshot s;
    s.mood = doc.at("mood").get<std::string>();
    for (const auto& item : doc.at("dominant_emotions")) {
      s.dominant_emotions.emplace_back(item.at("emotion").get<std::string>(),
                                       item.at("intensity").get<double>());
    }
    s.energy = doc.at("energy").get<double>();
    s.stress = doc.at("stress").get<double>();
    s.motivation = doc.at("motivation").get<double>();
    s.focus = doc.at("focus").get<double>();
    s.as_of = parse_iso8601(doc.at("as_of").get<std::string>()).value;
    s.half_life_hours = doc.at("half_life_hours").get<double>();
    return s;
  }
};

/// Append-only affective memory over one JSONL file. Single writer per file;
/// readers are independent and tolerate a truncated final line.
class EmoBank {
 public:
  static constexpr double kNoiseFloor = 0.25;
  static constexpr std::chrono::minutes kCoalesceWindow{5};
  static constexpr std::chrono::minutes kReboundWindow{10};

  explicit EmoBank(std::string path) : path_(std::move(path)) { load(); }

  const std::string& path() const { return path_; }
  const std::vector<BankEntry>& rows() const { return rows_; }
  const std::vector<LogicalEntry>& logical_entries() const { return logical_; }
  std::size_t skipped_rows() const { return skipped_rows_; }

  /// Apply the deposit policy, in order: noise floor (unless the valence
  /// inverts the most recent same-cause entry), coalescing within 5 minutes,
  /// plain store, rebound shadow within 10 minutes of a negative entry.
  DepositOutcome deposit(const Appraisal& a) {
    DepositOutcome outcome;
    const BankEntry* last = rows_.empty() ? nullptr : &rows_.back();
    const BankEntry* last_same_cause = find_last_with_cause(a.cause);

    if (a.intensity < kNoiseFloor) {
      const bool inverts = last_same_cause != nullptr &&
                           ((a.valence > 0.0 && last_same_cause->valence < 0.0) ||
                            (a.valence < 0.0 && last_same_cause->valence > 0.0));
      if (!inverts) {
        outcome.kind = DepositKind::discarded_noise;
        return outcome;
      }
    }

    if (last != nullptr && last->emotion == a.emotion && last->cause == a.cause &&
        a.ts - last->ts <= kCoalesceWindow) {
      BankEntry row = make_row(a);
      row.coalesced_with = last->entry_id;
      append_rows({row});
      outcome.kind = DepositKind::coalesced;
      outcome.coalesced_with = last->entry_id;
      outcome.appended_ids = {row.entry_id};
      return outcome;
    }

    std::vector<BankEntry> to_write;
    to_write.push_back(make_row(a));
    bool rebound = false;
    if (last != nullptr && a.valence > 0.0 && last->valence < 0.0 &&
        a.ts - last->ts <= kReboundWindow) {
      rebound = true;
      BankEntry shadow;
      shadow.ts = a.ts;
      shadow.emotion = "determination";
      shadow.valence = 0.4;
      shadow.intensity = last->intensity >= 0.6 ? 0.4 : 0.3;
      shadow.cause = a.cause;
      shadow.episode = episode_id(a.cause);
      shadow.entry_id = to_write.front().entry_id + 1;
      shadow.synthetic = true;
      to_write.push_back(shadow);
    }
    append_rows(to_write);
    for (const auto& row : to_write) outcome.appended_ids.push_back(row.entry_id);
    outcome.kind = rebound ? DepositKind::stored_with_rebound : DepositKind::stored;
    return outcome;
  }

  /// Decayed aggregate over logical entries whose head timestamp falls in
  /// [now - window, now]. Empty window yields the neutral sentinel.
  EmoSnapshot snapshot(Instant now, double window_hours, double half_life_hours,
                       const CompositeWeights& weights = {}) const {
    EmoSnapshot snap;
    snap.as_of = now;
    snap.half_life_hours = half_life_hours;

    struct Agg {
      double mass = 0.0;
      Instant last_ts{};
    };
    std::map<std::string, Agg> by_emotion;
    const Instant window_start =
        now - std::chrono::milliseconds(static_cast<long long>(window_hours * 3600.0 * 1000.0));
    for (const auto& entry : logical_) {
      if (entry.head.ts < window_start || entry.head.ts > now) continue;
      auto& agg = by_emotion[entry.head.emotion];
      agg.mass += decayed_intensity(entry, now, half_life_hours);
      agg.last_ts = std::max(agg.last_ts, entry.last_ts);
    }

    std::vector<std::pair<std::string, Agg>> ranked(by_emotion.begin(), by_emotion.end());
    std::erase_if(ranked, [](const auto& p) { return p.second.mass <= 0.0; });
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.second.mass != b.second.mass) return a.second.mass > b.second.mass;
      if (a.second.last_ts != b.second.last_ts) return a.second.last_ts > b.second.last_ts;
      return a.first < b.first;
    });

    auto w = [&](const char* emotion) {
      const auto it = by_emotion.find(emotion);
      return it == by_emotion.end() ? 0.0 : std::min(1.0, it->second.mass);
    };
    snap.stress = std::min(1.0, weights.stress_frustration * w("frustration") +
                                    weights.stress_anxiety * w("anxiety"));
    snap.energy = std::min(1.0, weights.energy_joy * w("joy") + weights.energy_pride * w("pride") +
                                    weights.energy_curiosity * w("curiosity") +
                                    weights.energy_determination * w("determination"));
    snap.motivation = std::min(1.0, weights.motivation_determination * w("determination") +
                                        weights.motivation_curiosity * w("curiosity") +
                                        weights.motivation_pride * w("pride"));
    snap.focus = std::clamp(0.5 + weights.focus_calm * w("calm") - 0.5 * snap.stress, 0.0, 1.0);

    if (!ranked.empty()) {
      snap.mood = ranked.front().first;
      for (std::size_t i = 0; i < ranked.size() && i < 3; ++i) {
        snap.dominant_emotions.emplace_back(ranked[i].first,
                                            std::min(1.0, ranked[i].second.mass));
      }
    }
    return snap;
  }

 private:
  BankEntry make_row(const Appraisal& a) const {
    BankEntry row;
    row.ts = a.ts;
    row.emotion = a.emotion;
    row.intensity = a.intensity;
    row.valence = a.valence;
    row.cause = a.cause;
    row.episode = a.episode.empty() ? episode_id(a.cause) : a.episode;
    row.entry_id = next_entry_id();
    return row;
  }

  std::int64_t next_entry_id() const {
    return rows_.empty() ? 0 : rows_.back().entry_id + 1;
  }

  const BankEntry* find_last_with_cause(const std::string& cause) const {
    const auto it = last_row_by_cause_.find(cause);
    return it == last_row_by_cause_.end() ? nullptr : &rows_[it->second];
  }

  void load() {
    rows_.clear();
    logical_.clear();
    last_row_by_cause_.clear();
    logical_index_by_row_.clear();
    skipped_rows_ = 0;

    std::ifstream in(path_, std::ios::binary);
    if (!in) return;  // absent bank file means an empty bank
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      try {
        index_row(BankEntry::from_json(nlohmann::json::parse(line)));
      } catch (...) {
        // Tolerate a truncated or torn row (concurrent writer mid-append).
        ++skipped_rows_;
      }
    }
  }

  void index_row(BankEntry row) {
    rows_.push_back(std::move(row));
    const BankEntry& stored = rows_.back();
    const std::size_t row_pos = rows_.size() - 1;
    last_row_by_cause_[stored.cause] = row_pos;

    if (stored.coalesced_with) {
      const auto it = logical_index_by_row_.find(*stored.coalesced_with);
      if (it != logical_index_by_row_.end()) {
        LogicalEntry& logical = logical_[it->second];
        logical.boost_count += 1;
        logical.evidence.push_back(stored.entry_id);
        logical.last_ts = std::max(logical.last_ts, stored.ts);
        logical_index_by_row_[stored.entry_id] = it->second;
        return;
      }
      // Dangling amplification pointer: degrade to a standalone entry.
    }
    LogicalEntry logical;
    logical.head = stored;
    logical.evidence = {stored.entry_id};
    logical.last_ts = stored.ts;
    logical_.push_back(std::move(logical));
    logical_index_by_row_[stored.entry_id] = logical_.size() - 1;
  }

  void append_rows(const std::vector<BankEntry>& batch) {
    std::string payload;
    for (const auto& row : batch) {
      payload += row.to_json().dump();
      payload += '\n';
    }
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw error(errc::io, "cannot append to bank file: " + path_);
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    out.flush();
    if (!out) throw error(errc::io, "write failed: " + path_);
    for (const auto& row : batch) index_row(row);
  }

  std::string path_;
  std::vector<BankEntry> rows_;
  std::vector<LogicalEntry> logical_;
  std::unordered_map<std::string, std::size_t> last_row_by_cause_;
  std::unordered_map<std::int64_t, std::size_t> logical_index_by_row_;
  std::size_t skipped_rows_ = 0;
};

}  // namespace vigil
