// Acceptance suite: one binary, one pass/fail line per criterion.
//
// Each criterion runs a real pipeline (or module) against the synthetic
// supervised-agent scenarios and checks the pinned tolerances. Exit code is
// the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "../support/test_util.hpp"
#include "vigil/orchestrator.hpp"
#include "vigil/robin_sim.hpp"

using namespace vigil;
using test_util::at;

namespace {

const Instant kNow = at("2025-10-31T23:59:59Z");

const std::string kPromptFixture =
    "# Robin-A prompt\n"
    "\n"
    "BEGIN_CORE_IDENTITY\n"
    "You are Robin-A, a reminder assistant.\n"
    "Never fabricate confirmations.\n"
    "END_CORE_IDENTITY\n"
    "\n"
    "## BEGIN_ADAPTIVE_SECTION\n"
    "(previous adaptive content)\n"
    "## END_ADAPTIVE_SECTION\n"
    "\n"
    "Tail notes stay untouched.\n";

class Check {
 public:
  void require(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
  }
  const std::vector<std::string>& failures() const { return failures_; }

 private:
  std::vector<std::string> failures_;
};

struct Sandbox {
  test_util::TempDir dir;
  Config config;
  SimReport report;

  explicit Sandbox(bool before) {
    report = generate_log(before ? Scenario::before_preset() : Scenario::after_preset(),
                          dir.str("logs/events.jsonl"), kNow);
    generate_fixture_repo(dir.str("repo"), /*defective=*/before);
    test_util::write_file(dir.str("prompt.txt"), kPromptFixture);
    config.log_path = dir.str("logs/events.jsonl");
    config.prompt_path = dir.str("prompt.txt");
    config.repo_root = dir.str("repo");
    config.out_dir = dir.str("out");
    config.now_override = kNow;
  }
};

std::vector<std::string> artifacts_of(const RunManifest& m, const std::string& kind) {
  std::vector<std::string> out;
  for (const auto& a : m.artifacts) {
    if (a.kind == kind) out.push_back(a.path);
  }
  return out;
}

double run_all_timed(Orchestrator& orchestrator, RunResult& result) {
  const auto begin = std::chrono::steady_clock::now();
  result = orchestrator.run_all();
  const auto end = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(end - begin).count();
}

// --------------------------------------------------------------------------
// 1. Before-scenario reproduction

void criterion_before(Check& check) {
  Sandbox box(true);
  check.require(box.report.premature_count == 12 && box.report.n_reminders == 12,
                "simulator must report 12/12 premature toasts");
  check.require(std::abs(box.report.mean_delay_sec - 97.0) <= 1.0,
                "mean delay must be 97 +/- 1s");

  Orchestrator orchestrator(box.config);
  RunResult result;
  const double seconds = run_all_timed(orchestrator, result);
  check.require(seconds < 5.0, "run-all must finish in under 5s");

  const auto rbt_paths = artifacts_of(result.manifest, "rbt");
  if (rbt_paths.size() != 1) {
    check.require(false, "expected exactly one diagnosis artifact");
    return;
  }
  const auto doc = nlohmann::json::parse(test_util::slurp(rbt_paths[0]));
  check.require(doc.value("top_thorn", std::string{}) == "reminder.toast:fail",
                "top thorn must be reminder.toast:fail");
  check.require(doc.at("roses").empty(), "no roses in the degraded trace");
  check.require(!doc.at("thorns").empty(), "thorns must be present");

  // At least one thorn-contributing appraisal carries raw intensity >= 0.9.
  EmoBank bank(box.config.bank_path());
  bool strong = false;
  for (const auto& thorn : doc.at("thorns")) {
    for (const auto& id : thorn.at("evidence")) {
      const std::int64_t entry_id = id.get<std::int64_t>();
      for (const auto& row : bank.rows()) {
        if (row.entry_id == entry_id && row.intensity >= 0.9) strong = true;
      }
    }
  }
  check.require(strong, "a thorn-contributing appraisal must reach intensity 0.9");
}

// --------------------------------------------------------------------------
// 2. After-scenario reproduction

void criterion_after(Check& check) {
  Sandbox box(false);
  check.require(box.report.premature_count == 0, "after preset must report 0/12 premature");
  check.require(std::abs(box.report.mean_delay_sec - 8.0) <= 1.0,
                "mean latency must be 8 +/- 1s");

  Orchestrator orchestrator(box.config);
  RunResult result;
  const double seconds = run_all_timed(orchestrator, result);
  check.require(seconds < 5.0, "run-all must finish in under 5s");

  const auto rbt_paths = artifacts_of(result.manifest, "rbt");
  if (rbt_paths.size() != 1) {
    check.require(false, "expected exactly one diagnosis artifact");
    return;
  }
  const auto doc = nlohmann::json::parse(test_util::slurp(rbt_paths[0]));
  check.require(doc.at("thorns").empty(), "no thorns after remediation");
  check.require(doc.at("prompt_rules_to_add").empty(), "prompt_rules_to_add must be empty");
}

// --------------------------------------------------------------------------
// 3. Decay suite

void criterion_decay(Check& check) {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> unit(0.001, 1.0);
  std::uniform_real_distribution<double> hl(0.01, 96.0);
  for (int i = 0; i < 1000; ++i) {
    const double intensity = unit(rng);
    const double half_life = hl(rng);
    if (std::abs(half_life_decay(intensity, half_life, half_life) - intensity / 2.0) >= 1e-9) {
      check.require(false, "exactness: intensity must halve at elapsed == half-life");
      return;
    }
    if (half_life_decay(intensity, 0.0, half_life) != intensity) {
      check.require(false, "identity: zero elapsed must be exact");
      return;
    }
    const double t1 = hl(rng);
    const double t2 = t1 + unit(rng);
    if (!(half_life_decay(intensity, t2, half_life) <
          half_life_decay(intensity, t1, half_life))) {
      check.require(false, "monotonicity: decayed intensity must strictly decrease");
      return;
    }
  }
}

// --------------------------------------------------------------------------
// 4. Deposit-policy suite

Appraisal appraisal_at(Instant ts, const std::string& emotion, double valence, double intensity,
                       const std::string& cause) {
  Appraisal a;
  a.ts = ts;
  a.emotion = emotion;
  a.valence = valence;
  a.intensity = intensity;
  a.cause = cause;
  a.episode = episode_id(cause);
  return a;
}

void criterion_deposit(Check& check) {
  const Instant t0 = kNow;

  {  // noise floor: same-sign 0.2 discarded, inversion retained
    test_util::TempDir dir;
    EmoBank bank(dir.str("bank.jsonl"));
    bank.deposit(appraisal_at(t0, "anxiety", -0.6, 0.5, "k:delay"));
    const auto same_sign =
        bank.deposit(appraisal_at(t0 + std::chrono::minutes(20), "anxiety", -0.6, 0.2, "k:delay"));
    check.require(same_sign.kind == DepositKind::discarded_noise,
                  "I=0.2 same-sign must be discarded");
    const auto inverted =
        bank.deposit(appraisal_at(t0 + std::chrono::minutes(40), "relief", 0.6, 0.2, "k:delay"));
    check.require(inverted.kind != DepositKind::discarded_noise,
                  "I=0.2 valence inversion must be retained");
  }

  {  // coalescing within 5 minutes amplifies with a 1.0 cap
    test_util::TempDir dir;
    EmoBank bank(dir.str("bank.jsonl"));
    bank.deposit(appraisal_at(t0, "frustration", -1.0, 0.95, "k:fail"));
    Instant t = t0;
    for (int i = 0; i < 3; ++i) {
      t = t + std::chrono::minutes(4);
      const auto outcome = bank.deposit(appraisal_at(t, "frustration", -1.0, 0.95, "k:fail"));
      check.require(outcome.kind == DepositKind::coalesced,
                    "rapid identical repeats must coalesce");
    }
    check.require(bank.logical_entries().size() == 1, "coalescing must not open new episodes");
    check.require(bank.logical_entries().front().effective_raw_intensity() == 1.0,
                  "effective intensity must cap at 1.0");
    check.require(bank.rows().size() == 4, "amplification rows must be appended, not merged");
  }

  {  // rebound: one synthetic determination row, context-dependent intensity
    test_util::TempDir dir;
    EmoBank bank(dir.str("bank.jsonl"));
    bank.deposit(appraisal_at(t0, "frustration", -1.0, 0.9, "k:fail"));
    const auto strong =
        bank.deposit(appraisal_at(t0 + std::chrono::minutes(8), "relief", 0.6, 0.35, "k:ok"));
    check.require(strong.kind == DepositKind::stored_with_rebound,
                  "positive within 10 min of a negative must rebound");
    int synthetic = 0;
    for (const auto& row : bank.rows()) synthetic += row.synthetic ? 1 : 0;
    check.require(synthetic == 1, "exactly one synthetic shadow row");
    const BankEntry& shadow = bank.rows().back();
    check.require(shadow.emotion == "determination" && shadow.valence == 0.4,
                  "shadow must be determination at +0.4 valence");
    check.require(shadow.intensity == 0.4, "prior intensity 0.9 selects shadow intensity 0.4");

    EmoBank weak_bank(dir.str("bank2.jsonl"));
    weak_bank.deposit(appraisal_at(t0, "anxiety", -0.6, 0.5, "k:delay"));
    weak_bank.deposit(appraisal_at(t0 + std::chrono::minutes(9), "relief", 0.6, 0.3, "k:ok"));
    check.require(weak_bank.rows().back().intensity == 0.3,
                  "prior intensity < 0.6 selects shadow intensity 0.3");
  }
}

// --------------------------------------------------------------------------
// 5. RBT boundary suite

enum class OracleClass { none, rose, bud, thorn };

OracleClass oracle_classify(const std::string& emotion, double valence, double intensity) {
  const bool positive_set = emotion == "pride" || emotion == "joy" || emotion == "gratitude" ||
                            emotion == "relief" || emotion == "calm";
  if (positive_set) {
    if (intensity >= 0.5) return OracleClass::rose;
    if (valence >= 0.2) return OracleClass::bud;
    return OracleClass::none;
  }
  if (emotion == "curiosity") return intensity >= 0.3 ? OracleClass::bud : OracleClass::none;
  if (emotion == "frustration" || emotion == "anxiety") {
    return intensity >= 0.4 ? OracleClass::thorn : OracleClass::none;
  }
  return OracleClass::none;
}

OracleClass as_oracle(RbtClass c) {
  switch (c) {
    case RbtClass::none: return OracleClass::none;
    case RbtClass::rose: return OracleClass::rose;
    case RbtClass::bud: return OracleClass::bud;
    case RbtClass::thorn: return OracleClass::thorn;
  }
  return OracleClass::none;
}

void criterion_rbt_boundaries(Check& check) {
  struct Case {
    const char* emotion;
    double valence;
    double intensity;
  };
  const std::vector<Case> boundaries{
      {"relief", 0.6, 0.5},   {"relief", 0.19, 0.49},     {"frustration", -1.0, 0.4},
      {"frustration", -1.0, 0.39}, {"curiosity", 0.2, 0.3}, {"curiosity", 0.2, 0.29},
      {"calm", 0.2, 0.2},     {"calm", 0.19, 0.2},        {"determination", 0.4, 1.0},
  };
  for (const auto& c : boundaries) {
    if (as_oracle(classify(c.emotion, c.valence, c.intensity)) !=
        oracle_classify(c.emotion, c.valence, c.intensity)) {
      check.require(false, std::string("boundary mismatch for ") + c.emotion);
    }
  }
  for (const auto& emotion : emotion_taxonomy()) {
    for (double valence = -1.0; valence <= 1.0 + 1e-9; valence += 0.01) {
      for (double intensity : {0.0, 0.29, 0.3, 0.39, 0.4, 0.49, 0.5, 0.75, 1.0}) {
        if (as_oracle(classify(emotion, valence, intensity)) !=
            oracle_classify(emotion, valence, intensity)) {
          check.require(false, "grid mismatch for " + emotion);
          return;
        }
      }
    }
  }
}

// --------------------------------------------------------------------------
// 6. Stage-machine exhaustion

void criterion_stage_machine(Check& check) {
  const std::vector<Stage> stages{Stage::start, Stage::eb_updated, Stage::diagnosed,
                                  Stage::prompt_done, Stage::diff_done};
  int legal = 0, rejected = 0;
  for (Stage stage : stages) {
    for (StageTool tool : stage_tools()) {
      RunManifest manifest;
      manifest.stage = stage;
      if (stage == required_stage(tool)) {
        try {
          if (advance(manifest, tool).stage != next_stage(stage)) {
            check.require(false, "legal transition must advance exactly one step");
          }
          ++legal;
        } catch (...) {
          check.require(false, "legal transition must not throw");
        }
      } else {
        try {
          advance(manifest, tool);
          check.require(false, std::string("missing rejection: ") + to_string(tool) + " at " +
                                   to_string(stage));
        } catch (const illegal_transition_error& e) {
          const std::string what = e.what();
          if (what.find(to_string(stage)) == std::string::npos ||
              what.find(to_string(required_stage(tool))) == std::string::npos) {
            check.require(false, "rejection must name both stages");
          }
          ++rejected;
        }
      }
    }
  }
  check.require(legal == 4 && rejected == 16, "exactly 4 legal and 16 illegal pairs");
}

// --------------------------------------------------------------------------
// 7. Core-identity guard

void criterion_guard(Check& check) {
  test_util::TempDir dir;
  std::mt19937_64 rng(131);

  RbtDiagnosis diagnosis;
  diagnosis.as_of = kNow;
  diagnosis.thorns.push_back({"reminder.toast:fail", "frustration", 2.0, {0}});
  diagnosis.top_thorn = "reminder.toast:fail";
  diagnosis.prompt_rules_to_add =
      PromptRuleTable::defaults().rules_for("reminder.toast:fail");

  for (int trial = 0; trial < 100; ++trial) {
    const std::string out = dir.str("mutated_" + std::to_string(trial) + ".txt");
    const TextMutator mutate = [&](std::string& text) {
      const PromptDocument doc = parse_prompt(text);
      const auto [begin, end] = *doc.core_span;
      const std::size_t pos = begin + rng() % (end - begin);
      char replacement = char('!' + rng() % 90);
      while (replacement == text[pos]) replacement = char('!' + rng() % 90);
      text[pos] = replacement;
    };
    bool aborted = false;
    try {
      patch_prompt_file(kPromptFixture, diagnosis, out, {}, mutate);
    } catch (const error&) {
      aborted = true;
    }
    if (!aborted || std::filesystem::exists(out)) {
      check.require(false, "mutation trial " + std::to_string(trial) +
                               " must abort with no output file");
      return;
    }
  }

  // A successful patch changes zero bytes outside the adaptive span.
  const std::string out = dir.str("good.txt");
  const std::string patched = patch_prompt_file(kPromptFixture, diagnosis, out);
  const PromptDocument before = parse_prompt(kPromptFixture);
  const PromptDocument after = parse_prompt(patched);
  check.require(
      patched.substr(0, before.adaptive_begin) == kPromptFixture.substr(0, before.adaptive_begin),
      "bytes before the adaptive span must be unchanged");
  check.require(patched.substr(after.adaptive_end) == kPromptFixture.substr(before.adaptive_end),
                "bytes after the adaptive span must be unchanged");
  check.require(std::filesystem::exists(out), "successful patch must write the output file");
}

// --------------------------------------------------------------------------
// 8. Proposal validity

void criterion_proposal(Check& check) {
  test_util::TempDir dir;
  const std::string repo = dir.str("repo");
  generate_fixture_repo(repo, true);
  const std::string hash_before = test_util::tree_hash(repo);

  RbtDiagnosis diagnosis;
  diagnosis.as_of = kNow;
  diagnosis.thorns.push_back({"reminder.toast:fail", "frustration", 4.0, {0}});
  diagnosis.top_thorn = "reminder.toast:fail";

  const ScanResult scan = scan_hotspots(repo);
  const auto registry = default_strategies();
  const Strategy* strategy = select_strategy(diagnosis, scan.hotspots, registry);
  if (strategy == nullptr || strategy->name() != "TZReceiptStrategy") {
    check.require(false, "TZReceiptStrategy must be selected for the defective fixture");
    return;
  }
  const PatchProposal proposal =
      generate_proposal(*strategy, repo, scan.hotspots, diagnosis, kNow);
  check.require(test_util::tree_hash(repo) == hash_before,
                "generation must leave the target repo byte-identical");

  for (const auto* fn : {"def to_utc_iso", "def call_with_retry", "def structured_toast",
                         "def wait_for_receipt", "def gate_success_on_receipt"}) {
    if (proposal.diff.find(fn) == std::string::npos) {
      check.require(false, std::string("reliability utility must define ") + fn);
    }
  }

  test_util::write_file(dir.str("repo/__p.diff"), proposal.diff);
  const std::string cmd = "cd '" + repo +
                          "' && patch -p1 -F0 --batch --quiet < __p.diff > /dev/null 2>&1";
  check.require(std::system(cmd.c_str()) == 0, "diff must apply with zero fuzz");
  std::filesystem::remove(dir.str("repo/__p.diff"));

  const ScanResult rescan = scan_hotspots(repo);
  for (const auto& h : rescan.hotspots) {
    if (h.pattern_id == "ungated_toast") {
      check.require(false, "patched tree must contain zero ungated_toast hotspots");
    }
  }
}

// --------------------------------------------------------------------------
// 9. Meta-repair drill

void criterion_meta_repair(Check& check) {
  Sandbox box(true);
  box.config.inject_fault = "diagnose_rbt";
  Orchestrator orchestrator(box.config);
  const RunResult result = orchestrator.run_all();

  if (result.manifest.internal_thorns.size() != 1) {
    check.require(false, "exactly one internal thorn expected");
    return;
  }
  const InternalThorn& thorn = result.manifest.internal_thorns[0];
  check.require(thorn.type == "internal.schema_conflict",
                "thorn type must be internal.schema_conflict");
  check.require(thorn.suggestions.size() == 2, "exactly two remediation suggestions");

  const auto remediation = artifacts_of(result.manifest, "remediation");
  if (remediation.size() == 1) {
    const std::string doc = test_util::slurp(remediation[0]);
    check.require(doc.find(thorn.excerpt) != std::string::npos,
                  "remediation artifact must contain the verbatim excerpt");
  } else {
    check.require(false, "expected one remediation artifact");
  }

  const auto rbt_paths = artifacts_of(result.manifest, "rbt");
  if (rbt_paths.size() == 1) {
    const auto doc = nlohmann::json::parse(test_util::slurp(rbt_paths[0]));
    check.require(doc.at("fallback") == true, "fallback diagnosis must be marked fallback");
  } else {
    check.require(false, "expected one diagnosis artifact");
  }
  check.require(result.manifest.stage == Stage::diff_done,
                "the degraded run must still reach diff_done");
  check.require(result.manifest.fallback_used, "fallback_used must be recorded");

  // Removing the fault closes the loop.
  Sandbox healed(true);
  Orchestrator rerun(healed.config);
  const RunResult clean = rerun.run_all();
  check.require(clean.manifest.stage == Stage::diff_done && !clean.manifest.fallback_used,
                "re-running without the fault must complete with fallback_used=false");
}

// --------------------------------------------------------------------------
// 10. Determinism

void criterion_determinism(Check& check) {
  Sandbox a(true);
  Sandbox b(true);
  const RunResult ra = Orchestrator(a.config).run_all();
  const RunResult rb = Orchestrator(b.config).run_all();

  const auto blob = [](const RunResult& r, const std::string& kind) {
    std::string out;
    for (const auto& path : artifacts_of(r.manifest, kind)) out += test_util::slurp(path);
    return out;
  };
  check.require(blob(ra, "rbt") == blob(rb, "rbt"), "rbt JSON must be byte-identical");
  check.require(blob(ra, "prompt") == blob(rb, "prompt"), "prompt must be byte-identical");
  check.require(!blob(ra, "proposal").empty() && blob(ra, "proposal") == blob(rb, "proposal"),
                "diff and PR note must be byte-identical");
}

struct Criterion {
  int id;
  std::string label;
  std::function<void(Check&)> body;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "before-scenario reproduction (top thorn, zero roses, 0.9 appraisal, 12/12, 97±1s)",
       criterion_before},
      {2, "after-scenario reproduction (no thorns, empty rules, 0/12, 8±1s)", criterion_after},
      {3, "decay suite (half-life exactness, identity, strict monotonicity x1000)",
       criterion_decay},
      {4, "deposit-policy suite (noise floor, coalescing cap, rebound shape)",
       criterion_deposit},
      {5, "rbt boundary suite (nine boundaries vs independent oracle)",
       criterion_rbt_boundaries},
      {6, "stage-machine exhaustion (4 legal, 16 rejected with both stages named)",
       criterion_stage_machine},
      {7, "core-identity guard (100 mutation trials abort; clean patch is span-local)",
       criterion_guard},
      {8, "proposal validity (zero-fuzz apply, five utilities, clean re-scan, repo untouched)",
       criterion_proposal},
      {9, "meta-repair drill (schema-conflict thorn, remediation, fallback, closure)",
       criterion_meta_repair},
      {10, "determinism (pinned clock yields byte-identical artifacts)",
       criterion_determinism},
  };

  int failed = 0;
  for (const auto& criterion : criteria) {
    Check check;
    try {
      criterion.body(check);
    } catch (const std::exception& e) {
      check.require(false, std::string("unexpected exception: ") + e.what());
    }
    if (check.failures().empty()) {
      std::cout << "PASS criterion " << criterion.id << ": " << criterion.label << "\n";
    } else {
      ++failed;
      std::cout << "FAIL criterion " << criterion.id << ": " << criterion.label << "\n";
      for (const auto& f : check.failures()) std::cout << "       - " << f << "\n";
    }
  }
  if (failed != 0) std::cout << failed << " criterion(s) failed\n";
  return failed;
}
