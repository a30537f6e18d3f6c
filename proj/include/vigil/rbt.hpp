#pragma once

#include <json.hpp>

#include <algorithm>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <utility>
#include <vector>

#include "vigil/emobank.hpp"
#include "vigil/event.hpp"
#include "vigil/time.hpp"

namespace vigil {

enum class RbtClass { none, rose, bud, thorn };

inline const std::vector<std::string>& rose_emotions() {
  static const std::vector<std::string> set{"pride", "joy", "gratitude", "relief", "calm"};
  return set;
}

/// Threshold classification. `intensity` is the decayed intensity at
/// diagnosis time; valence does not decay.
inline RbtClass classify(const std::string& emotion, double valence, double intensity) {
  const bool in_rose_set =
      std::find(rose_emotions().begin(), rose_emotions().end(), emotion) != rose_emotions().end();
  if (in_rose_set && intensity >= 0.5) return RbtClass::rose;
  if ((in_rose_set && valence >= 0.2) || (emotion == "curiosity" && intensity >= 0.3)) {
    return RbtClass::bud;
  }
  if ((emotion == "frustration" || emotion == "anxiety") && intensity >= 0.4) {
    return RbtClass::thorn;
  }
  return RbtClass::none;
}

/// One classified (cause, emotion) group with its decayed-intensity mass.
struct RbtGroup {
  std::string cause;
  std::string emotion;
  double score = 0.0;
  std::vector<std::int64_t> evidence;

  nlohmann::json to_json() const {
    return {{"cause", cause}, {"emotion", emotion}, {"score", score}, {"evidence", evidence}};
  }

  static RbtGroup from_json(const nlohmann::json& doc) {
    RbtGroup g;
    g.cause = doc.at("cause").get<std::string>();
    g.emotion = doc.at("emotion").get<std::string>();
    g.score = doc.at("score").get<double>();
    for (const auto& id : doc.value("evidence", nlohmann::json::array())) {
      g.evidence.push_back(id.get<std::int64_t>());
    }
    return g;
  }
};

struct RbtDiagnosis {
  std::vector<RbtGroup> roses;
  std::vector<RbtGroup> buds;
  std::vector<RbtGroup> thorns;
  std::optional<std::string> top_thorn;
  std::vector<std::string> prompt_rules_to_add;
  bool fallback = false;
  Instant as_of{};

  nlohmann::json to_json() const {
    nlohmann::json doc;
    auto dump = [](const std::vector<RbtGroup>& groups) {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& g : groups) arr.push_back(g.to_json());
      return arr;
    };
    doc["roses"] = dump(roses);
    doc["buds"] = dump(buds);
    doc["thorns"] = dump(thorns);
    if (top_thorn) doc["top_thorn"] = *top_thorn;
    doc["prompt_rules_to_add"] = prompt_rules_to_add;
    doc["fallback"] = fallback;
    doc["as_of"] = format_iso8601(as_of);
    return doc;
  }

  static RbtDiagnosis from_json(const nlohmann::json& doc) {
    RbtDiagnosis d;
    auto read = [](const nlohmann::json& arr, std::vector<RbtGroup>& out) {
      for (const auto& item : arr) out.push_back(RbtGroup::from_json(item));
    };
    read(doc.at("roses"), d.roses);
    read(doc.at("buds"), d.buds);
    read(doc.at("thorns"), d.thorns);
    if (doc.contains("top_thorn")) d.top_thorn = doc["top_thorn"].get<std::string>();
    for (const auto& r : doc.at("prompt_rules_to_add")) {
      d.prompt_rules_to_add.push_back(r.get<std::string>());
    }
    d.fallback = doc.at("fallback").get<bool>();
    d.as_of = parse_iso8601(doc.at("as_of").get<std::string>()).value;
    return d;
  }
};

/// Maps a thorn cause onto concrete prompt rules. Unknown causes get a
/// generic investigation rule.
class PromptRuleTable {
 public:
  static PromptRuleTable defaults() {
    static const std::vector<std::string> reminder_rules{
        "Gate all success toasts on receipt confirmation from the backend.",
        "Log receipt_lag_ms for observability.",
        "Normalize all timestamps to UTC ISO-8601.",
        "Retry failed tool calls once with jittered exponential backoff.",
        "On repeated failure, emit structured error toasts with stable reason codes.",
    };
    PromptRuleTable t;
    t.by_cause_["reminder.toast:fail"] = reminder_rules;
    t.by_cause_["reminder.toast:delay"] = reminder_rules;
    return t;
  }

  /// Override entries from JSON: {"cause": ["rule", ...], ...}
  static PromptRuleTable from_json(const nlohmann::json& doc) {
    PromptRuleTable t = defaults();
    for (auto it = doc.begin(); it != doc.end(); ++it) {
      std::vector<std::string> rules;
      for (const auto& r : it.value()) rules.push_back(r.get<std::string>());
      t.by_cause_[it.key()] = std::move(rules);
    }
    return t;
  }

  std::vector<std::string> rules_for(const std::string& cause) const {
    const auto it = by_cause_.find(cause);
    if (it != by_cause_.end()) return it->second;
    return {"Investigate recurring failures of " + cause + "."};
  }

 private:
  std::map<std::string, std::vector<std::string>> by_cause_;
};

namespace rbt_detail {

inline void sort_groups(std::vector<RbtGroup>& groups) {
  std::sort(groups.begin(), groups.end(), [](const RbtGroup& a, const RbtGroup& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.cause != b.cause) return a.cause < b.cause;
    return a.emotion < b.emotion;
  });
}

inline std::vector<std::string> derive_prompt_rules(const std::vector<RbtGroup>& thorns,
                                                    const PromptRuleTable& table) {
  std::vector<std::string> rules;
  for (const auto& thorn : thorns) {
    for (const auto& rule : table.rules_for(thorn.cause)) {
      if (std::find(rules.begin(), rules.end(), rule) == rules.end()) rules.push_back(rule);
    }
  }
  return rules;
}

}  // namespace rbt_detail

/// Fresh diagnosis over the bank's logical entries within the window.
/// Each entry is classified at its decayed intensity, grouped by
/// (cause, emotion), and scored by summed decayed intensity. An empty
/// prompt_rules_to_add signals a stable, non-degraded agent.
inline RbtDiagnosis diagnose(const EmoBank& bank, const std::vector<Event>& /*events*/,
                             Instant now, double half_life_hours, double window_hours = 24.0,
                             const PromptRuleTable& rule_table = PromptRuleTable::defaults()) {
  RbtDiagnosis diagnosis;
  diagnosis.as_of = now;

  const Instant window_start =
      now - std::chrono::milliseconds(static_cast<long long>(window_hours * 3600.0 * 1000.0));
  std::map<std::pair<std::string, std::string>, RbtGroup> roses, buds, thorns;
  for (const auto& entry : bank.logical_entries()) {
    if (entry.head.ts < window_start || entry.head.ts > now) continue;
    const double decayed = decayed_intensity(entry, now, half_life_hours);
    const RbtClass cls = classify(entry.head.emotion, entry.head.valence, decayed);
    if (cls == RbtClass::none) continue;
    auto& bucket = cls == RbtClass::rose ? roses : cls == RbtClass::bud ? buds : thorns;
    RbtGroup& group = bucket[{entry.head.cause, entry.head.emotion}];
    group.cause = entry.head.cause;
    group.emotion = entry.head.emotion;
    group.score += decayed;
    group.evidence.insert(group.evidence.end(), entry.evidence.begin(), entry.evidence.end());
  }

  auto collect = [](std::map<std::pair<std::string, std::string>, RbtGroup>& bucket) {
    std::vector<RbtGroup> out;
    out.reserve(bucket.size());
    for (auto& [key, group] : bucket) out.push_back(std::move(group));
    rbt_detail::sort_groups(out);
    return out;
  };
  diagnosis.roses = collect(roses);
  diagnosis.buds = collect(buds);
  diagnosis.thorns = collect(thorns);
  if (!diagnosis.thorns.empty()) diagnosis.top_thorn = diagnosis.thorns.front().cause;
  diagnosis.prompt_rules_to_add = rbt_detail::derive_prompt_rules(diagnosis.thorns, rule_table);
  return diagnosis;
}

/// Degraded diagnosis built only from the cached snapshot and the cue carried
/// forward from the bank-update stage. This path must never throw.
inline RbtDiagnosis fallback_diagnose(const EmoSnapshot& snapshot, const std::string& cue,
                                      const PromptRuleTable& rule_table =
                                          PromptRuleTable::defaults()) noexcept {
  RbtDiagnosis diagnosis;
  diagnosis.fallback = true;
  diagnosis.as_of = snapshot.as_of;
  try {
    for (const auto& [emotion, value] : snapshot.dominant_emotions) {
      const RbtClass cls = classify(emotion, canonical_valence(emotion), value);
      if (cls == RbtClass::none) continue;
      RbtGroup group;
      group.cause = cue;
      group.emotion = emotion;
      group.score = value;
      auto& bucket = cls == RbtClass::rose ? diagnosis.roses
                     : cls == RbtClass::bud ? diagnosis.buds
                                            : diagnosis.thorns;
      bucket.push_back(std::move(group));
    }
    rbt_detail::sort_groups(diagnosis.roses);
    rbt_detail::sort_groups(diagnosis.buds);
    rbt_detail::sort_groups(diagnosis.thorns);
    if (!diagnosis.thorns.empty()) diagnosis.top_thorn = diagnosis.thorns.front().cause;
    diagnosis.prompt_rules_to_add =
        rbt_detail::derive_prompt_rules(diagnosis.thorns, rule_table);
  } catch (...) {
    // Degraded output stays usable even if something above misbehaves.
  }
  return diagnosis;
}

/// Structured record of a failure inside the reflective pipeline itself.
struct InternalThorn {
  std::string type;                       // e.g. "internal.schema_conflict"
  std::string tool;                       // failing stage tool
  std::string file;                       // source path when extractable
  std::string excerpt;                    // verbatim line from the trace
  std::vector<std::string> suggestions;   // at least one remediation
  std::string trace;

  nlohmann::json to_json() const {
    nlohmann::json doc;
    doc["type"] = type;
    doc["tool"] = tool;
    if (!file.empty()) doc["file"] = file;
    doc["excerpt"] = excerpt;
    doc["suggestions"] = suggestions;
    doc["trace"] = trace;
    return doc;
  }

  static InternalThorn from_json(const nlohmann::json& doc) {
    InternalThorn t;
    t.type = doc.at("type").get<std::string>();
    t.tool = doc.at("tool").get<std::string>();
    t.file = doc.value("file", std::string{});
    t.excerpt = doc.at("excerpt").get<std::string>();
    for (const auto& s : doc.at("suggestions")) t.suggestions.push_back(s.get<std::string>());
    t.trace = doc.at("trace").get<std::string>();
    return t;
  }
};

namespace rbt_detail {

inline std::string line_around(const std::string& text, std::size_t pos) {
  std::size_t begin = text.rfind('\n', pos);
  begin = begin == std::string::npos ? 0 : begin + 1;
  std::size_t end = text.find('\n', pos);
  if (end == std::string::npos) end = text.size();
  return text.substr(begin, end - begin);
}

inline std::string last_nonempty_line(const std::string& text) {
  std::size_t end = text.size();
  while (end > 0) {
    std::size_t begin = text.rfind('\n', end - 1);
    const std::size_t line_begin = begin == std::string::npos ? 0 : begin + 1;
    std::string line = text.substr(line_begin, end - line_begin);
    if (line.find_first_not_of(" \t\r\n") != std::string::npos) {
      while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
      return line;
    }
    if (begin == std::string::npos) break;
    end = begin;
  }
  return text;
}

inline std::string extract_source_path(const std::string& trace) {
  static const std::regex python_loc(R"re(File "([^"]+)", line \d+)re");
  static const std::regex generic_loc(R"re((^|\s)([A-Za-z0-9_./\\-]+\.[A-Za-z]{1,4}):\d+)re");
  std::string found;
  for (auto it = std::sregex_iterator(trace.begin(), trace.end(), python_loc);
       it != std::sregex_iterator(); ++it) {
    found = (*it)[1].str();
  }
  if (!found.empty()) return found;
  for (auto it = std::sregex_iterator(trace.begin(), trace.end(), generic_loc);
       it != std::sregex_iterator(); ++it) {
    found = (*it)[2].str();
  }
  return found;
}

}  // namespace rbt_detail

/// Scan a captured error trace against an ordered signature table and build
/// a structured internal thorn. Unrecognized traces classify as a generic
/// tool failure with a single inspect-the-trace suggestion.
inline InternalThorn capture_internal_failure(const std::string& tool, const std::string& trace) {
  InternalThorn thorn;
  thorn.tool = tool;
  thorn.trace = trace;
  thorn.file = rbt_detail::extract_source_path(trace);

  static const std::regex schema_conflict(R"re(got multiple values for argument '([^']+)')re");
  std::smatch match;
  if (std::regex_search(trace, match, schema_conflict)) {
    const std::string arg = match[1].str();
    thorn.type = "internal.schema_conflict";
    thorn.excerpt = rbt_detail::line_around(trace, static_cast<std::size_t>(match.position(0)));
    thorn.suggestions = {
        "Remove the duplicated '" + arg + "' keyword argument at the " + tool + " call site.",
        "Add a default value for '" + arg +
            "' in the callee's signature so the call site may omit it.",
    };
    return thorn;
  }

  thorn.type = "internal.tool_failure";
  thorn.excerpt = rbt_detail::last_nonempty_line(trace);
  thorn.suggestions = {"Inspect the captured trace for " + tool + " and re-run the stage."};
  return thorn;
}

}  // namespace vigil
