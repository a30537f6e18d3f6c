#pragma once

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "vigil/errors.hpp"
#include "vigil/event.hpp"
#include "vigil/sha256.hpp"
#include "vigil/time.hpp"

namespace vigil {

inline const std::vector<std::string>& emotion_taxonomy() {
  static const std::vector<std::string> emotions{
      "frustration", "anxiety", "relief",    "pride",        "joy",
      "gratitude",   "calm",    "curiosity", "determination"};
  return emotions;
}

/// Canonical valence per emotion label, used where an emotion appears without
/// an accompanying appraisal (snapshot-based fallback classification).
inline double canonical_valence(const std::string& emotion) {
  if (emotion == "frustration") return -1.0;
  if (emotion == "anxiety") return -0.6;
  if (emotion == "curiosity") return 0.2;
  if (emotion == "determination") return 0.4;
  return 0.6;  // relief, pride, joy, gratitude, calm
}

/// Structured emotion derived from one event.
struct Appraisal {
  Instant ts{};
  std::string emotion;
  double valence = 0.0;    // [-1, +1]
  double intensity = 0.0;  // [0, 1]
  std::string cause;       // "{kind}:{status}"
  std::string episode;     // 12-hex stable hash of cause
};

/// 12-hex-char prefix of SHA-256(cause); stable across runs and platforms.
inline std::string episode_id(const std::string& cause) {
  return sha256_hex(cause).substr(0, 12);
}

/// One first-match appraisal rule. With a delay present and a positive
/// per-second slope the intensity is min(cap, slope * delayed_by_sec);
/// otherwise it falls back to the base value.
struct AppraisalRule {
  std::optional<std::string> match_status;  // exact status match when set
  std::optional<std::string> match_kind;    // exact kind match when set
  std::string emotion;
  double valence = 0.0;
  double intensity_base = 0.0;
  double intensity_per_sec = 0.0;
  double cap = 1.0;

  bool matches(const Event& e) const {
    if (match_status && *match_status != e.status) return false;
    if (match_kind && *match_kind != e.kind) return false;
    return true;
  }
};

class AppraisalRuleTable {
 public:
  static AppraisalRuleTable defaults() {
    AppraisalRuleTable t;
    t.rules_ = {
        {"fail", std::nullopt, "frustration", -1.0, 0.5, 1.0 / 200.0, 1.0},
        {"delay", std::nullopt, "anxiety", -0.6, 0.2, 1.0 / 200.0, 1.0},
        {"success", std::nullopt, "relief", 0.6, 0.3, 0.0, 1.0},
        {"ok", std::nullopt, "relief", 0.6, 0.3, 0.0, 1.0},
        {"error", std::nullopt, "frustration", -1.0, 0.7, 0.0, 1.0},
        // Catch-all: info plus any status outside the enumerated set.
        {std::nullopt, std::nullopt, "curiosity", 0.2, 0.3, 0.0, 1.0},
    };
    return t;
  }

  /// Load an override table from JSON:
  ///   [{"matcher": {"status": "fail"}, "emotion": "frustration",
  ///     "valence": -1.0, "intensity_base": 0.5,
  ///     "intensity_per_sec": 0.005, "cap": 1.0}, ...]
  /// The table must stay total over the enumerated statuses and monotone
  /// in delayed_by_sec (per_sec >= 0).
  static AppraisalRuleTable from_json(const nlohmann::json& doc) {
    if (!doc.is_array()) throw error(errc::config, "appraisal rules: expected an array");
    AppraisalRuleTable t;
    for (const auto& item : doc) {
      AppraisalRule r;
      if (item.contains("matcher")) {
        const auto& m = item["matcher"];
        if (m.contains("status")) r.match_status = m["status"].get<std::string>();
        if (m.contains("kind")) r.match_kind = m["kind"].get<std::string>();
      }
      r.emotion = item.at("emotion").get<std::string>();
      r.valence = item.at("valence").get<double>();
      r.intensity_base = item.value("intensity_base", 0.0);
      r.intensity_per_sec = item.value("intensity_per_sec", 0.0);
      r.cap = item.value("cap", 1.0);
      if (r.intensity_per_sec < 0.0) {
        throw error(errc::config, "appraisal rules: intensity_per_sec must be >= 0");
      }
      if (std::find(emotion_taxonomy().begin(), emotion_taxonomy().end(), r.emotion) ==
          emotion_taxonomy().end()) {
        throw error(errc::config, "appraisal rules: unknown emotion " + r.emotion);
      }
      t.rules_.push_back(std::move(r));
    }
    t.validate_total();
    return t;
  }

  const std::vector<AppraisalRule>& rules() const { return rules_; }

  const AppraisalRule* first_match(const Event& e) const {
    for (const auto& r : rules_) {
      if (r.matches(e)) return &r;
    }
    return nullptr;
  }

 private:
  void validate_total() const {
    for (const auto& status : known_statuses()) {
      Event probe;
      probe.kind = "probe.kind";
      probe.status = status;
      if (first_match(probe) == nullptr) {
        throw error(errc::config, "appraisal rules: no rule matches status " + status);
      }
    }
  }

  std::vector<AppraisalRule> rules_;
};

inline std::optional<double> delayed_by_sec(const Event& e) {
  if (!e.payload.is_object() || !e.payload.contains("delayed_by_sec")) return std::nullopt;
  const auto& v = e.payload["delayed_by_sec"];
  if (!v.is_number()) return std::nullopt;
  const double d = v.get<double>();
  return d < 0.0 ? 0.0 : d;
}

/// Deterministically map an event to an appraisal via the first matching
/// rule. Returns nullopt when the computed intensity is exactly zero.
inline std::optional<Appraisal> appraise_event(const Event& e, const AppraisalRuleTable& table) {
  const AppraisalRule* rule = table.first_match(e);
  if (rule == nullptr) return std::nullopt;  // unreachable with a validated table

  double intensity = rule->intensity_base;
  if (const auto delay = delayed_by_sec(e); delay && rule->intensity_per_sec > 0.0) {
    intensity = std::min(rule->cap, rule->intensity_per_sec * *delay);
  }
  intensity = std::clamp(intensity, 0.0, 1.0);
  if (intensity == 0.0) return std::nullopt;

  Appraisal a;
  a.ts = e.ts;
  a.emotion = rule->emotion;
  a.valence = std::clamp(rule->valence, -1.0, 1.0);
  a.intensity = intensity;
  a.cause = e.kind + ":" + e.status;
  a.episode = episode_id(a.cause);
  return a;
}

}  // namespace vigil
