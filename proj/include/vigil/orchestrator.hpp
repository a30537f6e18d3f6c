#pragma once

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vigil/appraisal.hpp"
#include "vigil/emobank.hpp"
#include "vigil/errors.hpp"
#include "vigil/event.hpp"
#include "vigil/prompt_patch.hpp"
#include "vigil/proposal.hpp"
#include "vigil/rbt.hpp"
#include "vigil/time.hpp"

namespace vigil {

// ---------------------------------------------------------------------------
// Stage machine

enum class Stage { start, eb_updated, diagnosed, prompt_done, diff_done };

inline const char* to_string(Stage s) {
  switch (s) {
    case Stage::start: return "start";
    case Stage::eb_updated: return "eb_updated";
    case Stage::diagnosed: return "diagnosed";
    case Stage::prompt_done: return "prompt_done";
    case Stage::diff_done: return "diff_done";
  }
  return "?";
}

inline Stage stage_from_string(const std::string& name) {
  for (Stage s : {Stage::start, Stage::eb_updated, Stage::diagnosed, Stage::prompt_done,
                  Stage::diff_done}) {
    if (name == to_string(s)) return s;
  }
  throw error(errc::schema, "unknown stage: " + name);
}

enum class StageTool { update_emobank, diagnose_rbt, build_prompt_patch, build_code_proposal };

inline const char* to_string(StageTool t) {
  switch (t) {
    case StageTool::update_emobank: return "update_emobank";
    case StageTool::diagnose_rbt: return "diagnose_rbt";
    case StageTool::build_prompt_patch: return "build_prompt_patch";
    case StageTool::build_code_proposal: return "build_code_proposal";
  }
  return "?";
}

inline const std::vector<StageTool>& stage_tools() {
  static const std::vector<StageTool> tools{
      StageTool::update_emobank, StageTool::diagnose_rbt, StageTool::build_prompt_patch,
      StageTool::build_code_proposal};
  return tools;
}

inline std::optional<StageTool> stage_tool_from_string(const std::string& name) {
  for (StageTool t : stage_tools()) {
    if (name == to_string(t)) return t;
  }
  return std::nullopt;
}

/// The stage each tool requires; tools advance the machine exactly one step.
inline Stage required_stage(StageTool t) {
  switch (t) {
    case StageTool::update_emobank: return Stage::start;
    case StageTool::diagnose_rbt: return Stage::eb_updated;
    case StageTool::build_prompt_patch: return Stage::diagnosed;
    case StageTool::build_code_proposal: return Stage::prompt_done;
  }
  return Stage::start;
}

inline Stage next_stage(Stage s) {
  switch (s) {
    case Stage::start: return Stage::eb_updated;
    case Stage::eb_updated: return Stage::diagnosed;
    case Stage::diagnosed: return Stage::prompt_done;
    case Stage::prompt_done: return Stage::diff_done;
    case Stage::diff_done: return Stage::diff_done;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Run manifest

struct ArtifactRecord {
  std::string path;
  std::string kind;  // emobank | rbt | prompt | proposal | remediation
  bool provisional = false;

  nlohmann::json to_json() const {
    nlohmann::json doc{{"path", path}, {"kind", kind}};
    if (provisional) doc["provisional"] = true;
    return doc;
  }

  static ArtifactRecord from_json(const nlohmann::json& doc) {
    return {doc.at("path").get<std::string>(), doc.at("kind").get<std::string>(),
            doc.value("provisional", false)};
  }
};

/// Persisted pipeline state; lets each stage run as a separate process
/// invocation while the stage machine stays enforced.
struct RunManifest {
  std::string run_id;  // compact UTC stamp of the run start
  Stage stage = Stage::start;
  std::optional<std::string> cue;  // top cause carried from the bank update
  bool fallback_used = false;
  std::vector<InternalThorn> internal_thorns;
  std::vector<ArtifactRecord> artifacts;
  std::optional<nlohmann::json> snapshot_json;  // cached EmoSnapshot for fallback
  std::optional<std::string> diagnosis_path;

  nlohmann::json to_json() const {
    nlohmann::json doc;
    doc["run_id"] = run_id;
    doc["stage"] = to_string(stage);
    if (cue) doc["cue"] = *cue;
    doc["fallback_used"] = fallback_used;
    doc["internal_thorns"] = nlohmann::json::array();
    for (const auto& t : internal_thorns) doc["internal_thorns"].push_back(t.to_json());
    doc["artifacts"] = nlohmann::json::array();
    for (const auto& a : artifacts) doc["artifacts"].push_back(a.to_json());
    if (snapshot_json) doc["snapshot"] = *snapshot_json;
    if (diagnosis_path) doc["diagnosis_path"] = *diagnosis_path;
    return doc;
  }

  static RunManifest from_json(const nlohmann::json& doc) {
    RunManifest m;
    m.run_id = doc.at("run_id").get<std::string>();
    m.stage = stage_from_string(doc.at("stage").get<std::string>());
    if (doc.contains("cue")) m.cue = doc["cue"].get<std::string>();
    m.fallback_used = doc.value("fallback_used", false);
    for (const auto& t : doc.value("internal_thorns", nlohmann::json::array())) {
      m.internal_thorns.push_back(InternalThorn::from_json(t));
    }
    for (const auto& a : doc.value("artifacts", nlohmann::json::array())) {
      m.artifacts.push_back(ArtifactRecord::from_json(a));
    }
    if (doc.contains("snapshot")) m.snapshot_json = doc["snapshot"];
    if (doc.contains("diagnosis_path")) {
      m.diagnosis_path = doc["diagnosis_path"].get<std::string>();
    }
    return m;
  }
};

/// Verify the tool is permitted at the manifest's stage; throws the
/// illegal-transition error naming both stages otherwise.
inline void require_permitted(const RunManifest& manifest, StageTool tool) {
  const Stage required = required_stage(tool);
  if (manifest.stage != required) {
    throw illegal_transition_error(to_string(required), to_string(manifest.stage));
  }
}

/// The pure transition: permitted tools advance the stage one step.
inline RunManifest advance(RunManifest manifest, StageTool tool) {
  require_permitted(manifest, tool);
  manifest.stage = next_stage(manifest.stage);
  return manifest;
}

// ---------------------------------------------------------------------------
// Configuration and rule overrides

struct Config {
  std::string log_path = "logs/events.jsonl";
  std::string prompt_path;
  std::string repo_root;
  std::string out_dir = "output";
  std::optional<Instant> now_override;
  double window_hours = 24.0;
  double half_life_hours = 12.0;
  std::optional<std::string> inject_fault;  // stage-tool name, drills only
  std::optional<std::string> rules_path;
  std::string reasoner = "strategy-engine";

  Instant now() const { return now_override ? *now_override : system_now(); }

  std::string bank_path() const {
    const std::filesystem::path log{log_path};
    return (log.has_parent_path() ? log.parent_path() / "emobank.jsonl"
                                  : std::filesystem::path("emobank.jsonl"))
        .string();
  }

  std::string state_path() const {
    return (std::filesystem::path(out_dir) / "run_state.json").string();
  }
};

/// All override-able rule tables, resolved once per run from --rules.
struct Toolset {
  AppraisalRuleTable appraisal = AppraisalRuleTable::defaults();
  PatternTable patterns = PatternTable::defaults();
  PromptRuleTable prompt_rules = PromptRuleTable::defaults();
  CompositeWeights weights;

  static Toolset load(const std::optional<std::string>& rules_path) {
    Toolset t;
    if (!rules_path) return t;
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(read_file(*rules_path));
    } catch (const error&) {
      throw error(errc::config, "cannot read rules file: " + *rules_path);
    } catch (const nlohmann::json::parse_error& e) {
      throw error(errc::config, "rules file is not valid JSON: " + std::string(e.what()));
    }
    try {
      if (doc.contains("appraisal")) t.appraisal = AppraisalRuleTable::from_json(doc["appraisal"]);
      t.patterns = PatternTable::from_json(doc);
      if (doc.contains("prompt_rules")) {
        t.prompt_rules = PromptRuleTable::from_json(doc["prompt_rules"]);
      }
      if (doc.contains("composite_weights")) {
        t.weights = CompositeWeights::from_json(doc["composite_weights"]);
      }
    } catch (const error&) {
      throw;
    } catch (const std::exception& e) {
      throw error(errc::config, "bad rules file: " + std::string(e.what()));
    }
    return t;
  }
};

// ---------------------------------------------------------------------------
// Reasoner hook

/// Adapter slot for diff synthesis. The deterministic strategy engine is the
/// only shipped implementation; alternates get the LLM_ artifact prefixes.
class Reasoner {
 public:
  virtual ~Reasoner() = default;
  virtual const std::string& name() const = 0;
  virtual std::optional<PatchProposal> propose(const RbtDiagnosis& diagnosis,
                                               const std::vector<Hotspot>& hotspots,
                                               const std::string& repo_root, Instant now) = 0;
};

class StrategyEngineReasoner : public Reasoner {
 public:
  const std::string& name() const override {
    static const std::string n = "strategy-engine";
    return n;
  }

  std::optional<PatchProposal> propose(const RbtDiagnosis& diagnosis,
                                       const std::vector<Hotspot>& hotspots,
                                       const std::string& repo_root, Instant now) override {
    const auto registry = default_strategies();
    const Strategy* strategy = select_strategy(diagnosis, hotspots, registry);
    if (strategy == nullptr) return std::nullopt;
    return generate_proposal(*strategy, repo_root, hotspots, diagnosis, now);
  }
};

// ---------------------------------------------------------------------------
// Output-directory lock

/// One run owns its output directory; concurrent owners fail fast.
class DirLock {
 public:
  explicit DirLock(const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    path_ = (fs::path(out_dir) / ".vigil.lock").string();
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (f == nullptr) {
      throw error(errc::io, "output directory locked by another run: " + out_dir);
    }
    std::fclose(f);
    owned_ = true;
  }

  ~DirLock() {
    if (owned_) {
      std::error_code ec;
      std::filesystem::remove(path_, ec);
    }
  }

  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::string path_;
  bool owned_ = false;
};

// ---------------------------------------------------------------------------
// Orchestrator

struct StageOutcome {
  StageTool tool{};
  bool ok = true;  // false: degraded, completed via fallback
  std::optional<InternalThorn> thorn;
  std::string note;
};

struct RunResult {
  RunManifest manifest;
  std::vector<StageOutcome> outcomes;
};

namespace orch_detail {

inline std::string synthetic_fault_trace(StageTool tool) {
  if (tool == StageTool::diagnose_rbt) {
    return "Traceback (most recent call last):\n"
           "  File \"tools/diagnose_rbt.py\", line 42, in diagnose_rbt\n"
           "    events = _fetch_recent_events(hours=24)\n"
           "TypeError: _fetch_recent_events() got multiple values for argument 'hours'\n";
  }
  const std::string name = to_string(tool);
  return "Traceback (most recent call last):\n"
         "  File \"tools/" + name + ".py\", line 17, in " + name + "\n"
         "    raise RuntimeError(\"injected fault\")\n"
         "RuntimeError: injected fault\n";
}

/// Cause with the highest decayed mass over in-window logical entries,
/// negative-valence causes first: the cue seeds the fallback thorn list, so
/// it names the dominant failing cause when one exists.
inline std::optional<std::string> top_cause(const EmoBank& bank, Instant now,
                                            double window_hours, double half_life_hours) {
  struct Agg {
    double negative_mass = 0.0;
    double total_mass = 0.0;
    Instant last_ts{};
  };
  std::map<std::string, Agg> by_cause;
  const Instant window_start =
      now - std::chrono::milliseconds(static_cast<long long>(window_hours * 3600.0 * 1000.0));
  for (const auto& entry : bank.logical_entries()) {
    if (entry.head.ts < window_start || entry.head.ts > now) continue;
    auto& agg = by_cause[entry.head.cause];
    const double mass = decayed_intensity(entry, now, half_life_hours);
    agg.total_mass += mass;
    if (entry.head.valence < 0.0) agg.negative_mass += mass;
    agg.last_ts = std::max(agg.last_ts, entry.last_ts);
  }

  std::optional<std::string> best;
  Agg best_agg;
  auto consider = [&](double Agg::*field) {
    for (const auto& [cause, agg] : by_cause) {
      if (agg.*field <= 0.0) continue;
      if (!best || agg.*field > best_agg.*field ||
          (agg.*field == best_agg.*field && agg.last_ts > best_agg.last_ts)) {
        best = cause;
        best_agg = agg;
      }
    }
  };
  consider(&Agg::negative_mass);
  if (!best) consider(&Agg::total_mass);
  return best;
}

}  // namespace orch_detail

class Orchestrator {
 public:
  explicit Orchestrator(Config cfg) : cfg_(std::move(cfg)), toolset_(Toolset::load(cfg_.rules_path)) {
    register_reasoner(std::make_unique<StrategyEngineReasoner>());
    if (cfg_.inject_fault && !stage_tool_from_string(*cfg_.inject_fault)) {
      throw error(errc::config, "unknown --inject-fault stage: " + *cfg_.inject_fault);
    }
    if (cfg_.window_hours <= 0.0) throw error(errc::config, "--window-hours must be positive");
    if (cfg_.half_life_hours <= 0.0) throw error(errc::config, "--half-life must be positive");
  }

  const Config& config() const { return cfg_; }
  const Toolset& toolset() const { return toolset_; }

  void register_reasoner(std::unique_ptr<Reasoner> reasoner) {
    const std::string name = reasoner->name();
    reasoners_[name] = std::move(reasoner);
  }

  /// Config problems surface before a stage runs, not inside the boundary.
  void validate_for_tool(StageTool tool) const {
    namespace fs = std::filesystem;
    switch (tool) {
      case StageTool::update_emobank:
      case StageTool::diagnose_rbt:
        if (!fs::is_regular_file(cfg_.log_path)) {
          throw error(errc::config, "event log not found: " + cfg_.log_path);
        }
        break;
      case StageTool::build_prompt_patch:
        if (cfg_.prompt_path.empty() || !fs::is_regular_file(cfg_.prompt_path)) {
          throw error(errc::config, "prompt file not found: " + cfg_.prompt_path);
        }
        break;
      case StageTool::build_code_proposal:
        if (cfg_.repo_root.empty() || !fs::is_directory(cfg_.repo_root)) {
          throw error(errc::config, "target repo not found: " + cfg_.repo_root);
        }
        if (reasoners_.find(cfg_.reasoner) == reasoners_.end()) {
          throw error(errc::config, "unknown reasoner: " + cfg_.reasoner);
        }
        break;
    }
  }

  /// Preflight for run_all: every stage input must resolve before any stage
  /// runs.
  void validate_full_config() const {
    namespace fs = std::filesystem;
    if (!fs::is_regular_file(cfg_.log_path)) {
      throw error(errc::config, "event log not found: " + cfg_.log_path);
    }
    if (cfg_.prompt_path.empty() || !fs::is_regular_file(cfg_.prompt_path)) {
      throw error(errc::config, "prompt file not found: " + cfg_.prompt_path);
    }
    if (cfg_.repo_root.empty() || !fs::is_directory(cfg_.repo_root)) {
      throw error(errc::config, "target repo not found: " + cfg_.repo_root);
    }
    if (reasoners_.find(cfg_.reasoner) == reasoners_.end()) {
      throw error(errc::config, "unknown reasoner: " + cfg_.reasoner);
    }
  }

  /// Execute one stage tool inside the meta-repair boundary. Failures become
  /// internal thorns plus a remediation artifact; the stage fallback runs and
  /// the machine still advances. Core-identity guard aborts are not repairable
  /// and propagate.
  StageOutcome run_stage_guarded(RunManifest& manifest, StageTool tool) {
    require_permitted(manifest, tool);

    StageOutcome outcome;
    outcome.tool = tool;
    try {
      if (cfg_.inject_fault && *cfg_.inject_fault == to_string(tool)) {
        throw error(errc::internal, orch_detail::synthetic_fault_trace(tool));
      }
      outcome.note = execute_stage(manifest, tool);
    } catch (const guard_abort_error&) {
      throw;
    } catch (const illegal_transition_error&) {
      throw;
    } catch (const std::exception& e) {
      InternalThorn thorn = capture_internal_failure(to_string(tool), e.what());
      write_remediation(manifest, thorn);
      outcome.note = run_fallback(manifest, tool);
      outcome.ok = false;
      outcome.thorn = thorn;
      manifest.internal_thorns.push_back(std::move(thorn));
      manifest.fallback_used = true;
    }
    manifest = advance(std::move(manifest), tool);
    persist_manifest(manifest);
    return outcome;
  }

  /// Load (or start) the persisted run and execute a single tool; used by the
  /// per-stage CLI subcommands.
  StageOutcome run_tool(StageTool tool) {
    DirLock lock(cfg_.out_dir);
    RunManifest manifest = load_or_start_manifest();
    return run_stage_guarded(manifest, tool);
  }

  /// The full pipeline under one lock: four stages, manifest persisted after
  /// each, always reaching diff_done unless the configuration itself is bad.
  RunResult run_all() {
    validate_full_config();
    DirLock lock(cfg_.out_dir);

    RunResult result;
    result.manifest.run_id = format_compact(cfg_.now());
    persist_manifest(result.manifest);
    for (StageTool tool : stage_tools()) {
      result.outcomes.push_back(run_stage_guarded(result.manifest, tool));
    }
    return result;
  }

  RunManifest load_or_start_manifest() const {
    namespace fs = std::filesystem;
    const std::string path = cfg_.state_path();
    if (fs::is_regular_file(path)) {
      try {
        return RunManifest::from_json(nlohmann::json::parse(read_file(path)));
      } catch (const std::exception& e) {
        throw error(errc::io, "unreadable run state " + path + ": " + e.what());
      }
    }
    RunManifest manifest;
    manifest.run_id = format_compact(cfg_.now());
    return manifest;
  }

 private:
  std::string artifact_path(const std::string& prefix, const std::string& ext) const {
    return (std::filesystem::path(cfg_.out_dir) / (prefix + format_compact(cfg_.now()) + ext))
        .string();
  }

  void persist_manifest(const RunManifest& manifest) const {
    try {
      atomic_write_file(cfg_.state_path(), manifest.to_json().dump(2) + "\n");
    } catch (const error&) {
      throw;  // manifest persistence is the one unrecoverable failure
    }
  }

  void write_remediation(RunManifest& manifest, const InternalThorn& thorn) {
    std::string doc;
    doc += "# Remediation: " + thorn.tool + " failed\n\n";
    doc += "- type: `" + thorn.type + "`\n";
    doc += "- tool: `" + thorn.tool + "`\n";
    if (!thorn.file.empty()) doc += "- file: `" + thorn.file + "`\n";
    doc += "\n## Error excerpt\n\n```\n" + thorn.excerpt + "\n```\n";
    doc += "\n## Suggested fixes\n\n";
    for (std::size_t i = 0; i < thorn.suggestions.size(); ++i) {
      doc += std::to_string(i + 1) + ". " + thorn.suggestions[i] + "\n";
    }
    doc += "\n## Captured trace\n\n```\n" + thorn.trace;
    if (doc.back() != '\n') doc += '\n';
    doc += "```\n";

    const std::string path = artifact_path("remediation_", ".md");
    atomic_write_file(path, doc);
    manifest.artifacts.push_back({path, "remediation", false});
  }

  std::string execute_stage(RunManifest& manifest, StageTool tool) {
    switch (tool) {
      case StageTool::update_emobank: return stage_update_emobank(manifest);
      case StageTool::diagnose_rbt: return stage_diagnose(manifest);
      case StageTool::build_prompt_patch: return stage_prompt_patch(manifest);
      case StageTool::build_code_proposal: return stage_code_proposal(manifest);
    }
    throw error(errc::internal, "unknown stage tool");
  }

  std::string stage_update_emobank(RunManifest& manifest) {
    const Instant now = cfg_.now();
    const EventWindow window =
        load_window(cfg_.log_path, now, cfg_.window_hours, 500);

    EmoBank bank(cfg_.bank_path());
    std::size_t appraised = 0, stored = 0, coalesced = 0, discarded = 0, rebounds = 0;
    for (const Event& event : window.events) {
      const auto appraisal = appraise_event(event, toolset_.appraisal);
      if (!appraisal) continue;
      ++appraised;
      const DepositOutcome outcome = bank.deposit(*appraisal);
      switch (outcome.kind) {
        case DepositKind::stored: ++stored; break;
        case DepositKind::coalesced: ++coalesced; break;
        case DepositKind::discarded_noise: ++discarded; break;
        case DepositKind::stored_with_rebound: ++stored; ++rebounds; break;
      }
    }

    const EmoSnapshot snapshot =
        bank.snapshot(now, cfg_.window_hours, cfg_.half_life_hours, toolset_.weights);
    manifest.snapshot_json = snapshot.to_json();
    manifest.cue = orch_detail::top_cause(bank, now, cfg_.window_hours, cfg_.half_life_hours);
    manifest.artifacts.push_back({cfg_.bank_path(), "emobank", false});

    return "events=" + std::to_string(window.events.size()) +
           " skipped_lines=" + std::to_string(window.skipped) +
           " appraised=" + std::to_string(appraised) + " stored=" + std::to_string(stored) +
           " coalesced=" + std::to_string(coalesced) +
           " discarded=" + std::to_string(discarded) +
           " rebounds=" + std::to_string(rebounds) + " mood=" + snapshot.mood;
  }

  std::string stage_diagnose(RunManifest& manifest) {
    const Instant now = cfg_.now();
    const EventWindow window =
        load_window(cfg_.log_path, now, cfg_.window_hours, 500);
    EmoBank bank(cfg_.bank_path());
    const RbtDiagnosis diagnosis = diagnose(bank, window.events, now, cfg_.half_life_hours,
                                            cfg_.window_hours, toolset_.prompt_rules);
    write_diagnosis(manifest, diagnosis, /*provisional=*/false);
    return "roses=" + std::to_string(diagnosis.roses.size()) +
           " buds=" + std::to_string(diagnosis.buds.size()) +
           " thorns=" + std::to_string(diagnosis.thorns.size()) +
           " top_thorn=" + diagnosis.top_thorn.value_or("(none)");
  }

  std::string stage_prompt_patch(RunManifest& manifest) {
    const RbtDiagnosis diagnosis = current_diagnosis(manifest);
    const std::string prompt_text = read_file(cfg_.prompt_path);
    const std::string out_path =
        (std::filesystem::path(cfg_.out_dir) / "new_prompt.txt").string();
    patch_prompt_file(prompt_text, diagnosis, out_path);
    manifest.artifacts.push_back({out_path, "prompt", false});
    return "rules=" + std::to_string(diagnosis.prompt_rules_to_add.size()) + " -> " + out_path;
  }

  std::string stage_code_proposal(RunManifest& manifest) {
    const RbtDiagnosis diagnosis = current_diagnosis(manifest);
    const ScanResult scan = scan_hotspots(cfg_.repo_root, toolset_.patterns);

    const auto it = reasoners_.find(cfg_.reasoner);
    if (it == reasoners_.end()) throw error(errc::config, "unknown reasoner: " + cfg_.reasoner);
    const bool default_reasoner = cfg_.reasoner == "strategy-engine";

    const auto proposal =
        it->second->propose(diagnosis, scan.hotspots, cfg_.repo_root, cfg_.now());
    if (!proposal) {
      return "hotspots=" + std::to_string(scan.hotspots.size()) + " strategy=none";
    }
    const std::string proposals_dir =
        (std::filesystem::path(cfg_.out_dir) / "proposals").string();
    const auto [diff_path, pr_path] =
        persist_proposal(*proposal, proposals_dir, default_reasoner ? "patch_" : "LLM_patch_",
                         default_reasoner ? "PR_" : "LLM_PR_");
    manifest.artifacts.push_back({diff_path, "proposal", false});
    manifest.artifacts.push_back({pr_path, "proposal", false});
    return "hotspots=" + std::to_string(scan.hotspots.size()) +
           " strategy=" + proposal->strategy + " -> " + diff_path;
  }

  // Fallbacks: every stage has a degraded path that still produces a usable
  // (provisional) artifact so the run reaches diff_done.
  std::string run_fallback(RunManifest& manifest, StageTool tool) {
    switch (tool) {
      case StageTool::update_emobank: {
        EmoSnapshot neutral;
        neutral.as_of = cfg_.now();
        neutral.half_life_hours = cfg_.half_life_hours;
        manifest.snapshot_json = neutral.to_json();
        manifest.artifacts.push_back({cfg_.bank_path(), "emobank", true});
        return "fallback: neutral snapshot";
      }
      case StageTool::diagnose_rbt: {
        EmoSnapshot snapshot;
        if (manifest.snapshot_json) {
          try {
            snapshot = EmoSnapshot::from_json(*manifest.snapshot_json);
          } catch (...) {
            snapshot.as_of = cfg_.now();
          }
        } else {
          snapshot.as_of = cfg_.now();
        }
        const RbtDiagnosis diagnosis =
            fallback_diagnose(snapshot, manifest.cue.value_or(""), toolset_.prompt_rules);
        write_diagnosis(manifest, diagnosis, /*provisional=*/true);
        return "fallback: diagnosis from cached snapshot, cue=" + manifest.cue.value_or("(none)");
      }
      case StageTool::build_prompt_patch: {
        std::string content;
        try {
          content = read_file(cfg_.prompt_path);
        } catch (const error&) {
          content = "provisional: prompt patch unavailable\n";
        }
        const std::string out_path =
            (std::filesystem::path(cfg_.out_dir) / "new_prompt.txt").string();
        atomic_write_file(out_path, content);
        manifest.artifacts.push_back({out_path, "prompt", true});
        return "fallback: provisional prompt artifact";
      }
      case StageTool::build_code_proposal: {
        const std::string proposals_dir =
            (std::filesystem::path(cfg_.out_dir) / "proposals").string();
        std::error_code ec;
        std::filesystem::create_directories(proposals_dir, ec);
        const std::string pr_path =
            (std::filesystem::path(proposals_dir) /
             ("PR_" + format_compact(cfg_.now()) + ".md"))
                .string();
        atomic_write_file(pr_path,
                          "# Provisional\n\nNo code proposal: the proposal stage degraded; "
                          "see the remediation artifact for the captured failure.\n");
        manifest.artifacts.push_back({pr_path, "proposal", true});
        return "fallback: provisional proposal note";
      }
    }
    return "fallback";
  }

  void write_diagnosis(RunManifest& manifest, const RbtDiagnosis& diagnosis, bool provisional) {
    const std::string path = artifact_path("rbt_", ".json");
    atomic_write_file(path, diagnosis.to_json().dump(2) + "\n");
    manifest.diagnosis_path = path;
    manifest.artifacts.push_back({path, "rbt", provisional});
  }

  RbtDiagnosis current_diagnosis(const RunManifest& manifest) const {
    if (!manifest.diagnosis_path) {
      throw error(errc::internal, "no diagnosis artifact recorded for this run");
    }
    return RbtDiagnosis::from_json(nlohmann::json::parse(read_file(*manifest.diagnosis_path)));
  }

  Config cfg_;
  Toolset toolset_;
  std::map<std::string, std::unique_ptr<Reasoner>> reasoners_;
};

}  // namespace vigil
