// vigil: reflective maintenance runtime for a supervised agent.
//
// Reads the agent's JSONL event log, maintains the decaying affective bank,
// derives a roses/buds/thorns diagnosis, and emits guarded prompt updates
// plus read-only code-patch proposals under a stage-gated pipeline.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "vigil/orchestrator.hpp"
#include "vigil/robin_sim.hpp"

namespace {

struct CliOptions {
  vigil::Config config;
  std::string now_text;
  std::string inject_fault;
  std::string rules_path;

  // simulate
  std::string preset;
  std::string fixture_repo;
  bool fixture_defective = false;
  vigil::Scenario scenario;
};

vigil::Config resolve_config(CliOptions& opt) {
  vigil::Config cfg = opt.config;
  if (!opt.now_text.empty()) cfg.now_override = vigil::parse_iso8601(opt.now_text).value;
  if (!opt.inject_fault.empty()) cfg.inject_fault = opt.inject_fault;
  if (!opt.rules_path.empty()) cfg.rules_path = opt.rules_path;
  return cfg;
}

void print_outcome(const vigil::StageOutcome& outcome) {
  std::cout << "stage " << vigil::to_string(outcome.tool) << ": "
            << (outcome.ok ? "ok" : "degraded") << " (" << outcome.note << ")\n";
  if (outcome.thorn) {
    std::cout << "  internal thorn: " << outcome.thorn->type << "\n";
    for (const auto& s : outcome.thorn->suggestions) {
      std::cout << "    suggestion: " << s << "\n";
    }
  }
}

int run_single_tool(CliOptions& opt, vigil::StageTool tool) {
  vigil::Orchestrator orchestrator(resolve_config(opt));
  orchestrator.validate_for_tool(tool);
  const vigil::StageOutcome outcome = orchestrator.run_tool(tool);
  print_outcome(outcome);
  return 0;
}

int run_all(CliOptions& opt) {
  vigil::Orchestrator orchestrator(resolve_config(opt));
  const vigil::RunResult result = orchestrator.run_all();
  for (const auto& outcome : result.outcomes) print_outcome(outcome);
  std::cout << "artifacts:\n";
  for (const auto& a : result.manifest.artifacts) {
    std::cout << "  " << a.path << " (" << a.kind << (a.provisional ? ", provisional" : "")
              << ")\n";
  }
  std::cout << "run " << result.manifest.run_id << ": stage "
            << vigil::to_string(result.manifest.stage)
            << ", fallback_used=" << (result.manifest.fallback_used ? "true" : "false") << "\n";
  return 0;
}

int run_simulate(CliOptions& opt) {
  vigil::Scenario scenario = opt.scenario;
  if (opt.preset == "before") {
    scenario = vigil::Scenario::before_preset();
  } else if (opt.preset == "after") {
    scenario = vigil::Scenario::after_preset();
  } else if (!opt.preset.empty()) {
    throw vigil::error(vigil::errc::config, "unknown preset: " + opt.preset);
  }
  scenario.normalize();

  const vigil::Config cfg = resolve_config(opt);
  const vigil::SimReport report = vigil::generate_log(scenario, cfg.log_path, cfg.now());
  std::cout << "wrote " << report.events_written << " events to " << cfg.log_path << "\n";
  std::cout << "premature toasts: " << report.premature_count << "/" << report.n_reminders
            << "\n";
  std::cout << "mean delay: " << report.mean_delay_sec << "s (max " << report.max_delay_sec
            << "s)\n";

  if (!opt.fixture_repo.empty()) {
    const bool defective =
        opt.preset == "before" || (opt.preset.empty() && opt.fixture_defective);
    const auto files = vigil::generate_fixture_repo(opt.fixture_repo, defective);
    std::cout << "fixture repo (" << (defective ? "defective" : "clean") << ") at "
              << opt.fixture_repo << ":\n";
    for (const auto& f : files) std::cout << "  " << f << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vigil: reflective maintenance runtime for a supervised agent"};
  app.require_subcommand(1);
  app.fallthrough();

  CliOptions opt;
  app.add_option("--log", opt.config.log_path, "event log path (JSONL)")
      ->capture_default_str();
  app.add_option("--prompt", opt.config.prompt_path, "agent prompt file");
  app.add_option("--repo", opt.config.repo_root, "target repo to scan");
  app.add_option("--out", opt.config.out_dir, "output directory")->capture_default_str();
  app.add_option("--now", opt.now_text, "pinned clock, ISO-8601 UTC");
  app.add_option("--window-hours", opt.config.window_hours, "event window in hours")
      ->capture_default_str();
  app.add_option("--half-life", opt.config.half_life_hours, "decay half-life in hours")
      ->capture_default_str();
  app.add_option("--inject-fault", opt.inject_fault,
                 "fail the named stage tool on purpose (drills)");
  app.add_option("--rules", opt.rules_path, "rule override file (appraisal/patterns)");
  app.add_option("--reasoner", opt.config.reasoner, "diff synthesis adapter")
      ->capture_default_str();

  auto* update = app.add_subcommand("update-emobank", "appraise recent events into the bank");
  auto* diagnose = app.add_subcommand("diagnose", "derive the roses/buds/thorns diagnosis");
  auto* patch_prompt = app.add_subcommand("patch-prompt", "rewrite the adaptive prompt section");
  auto* propose = app.add_subcommand("propose-diff", "emit a read-only code patch proposal");
  auto* runall = app.add_subcommand("run-all", "full pipeline: all four stages in order");

  auto* simulate = app.add_subcommand("simulate", "generate a synthetic supervised-agent trace");
  simulate->add_option("--preset", opt.preset, "before | after");
  simulate->add_option("--n-reminders", opt.scenario.n_reminders, "reminder count");
  simulate->add_option("--mean-delay", opt.scenario.mean_delay_sec, "mean delay seconds");
  simulate->add_option("--max-delay", opt.scenario.max_delay_sec, "max delay seconds");
  simulate->add_flag("--premature,!--no-premature", opt.scenario.premature_toasts,
                     "toasts precede receipts");
  simulate->add_flag("--mix-formats,!--no-mix-formats", opt.scenario.mix_timestamp_formats,
                     "alternate zoned and naive timestamps");
  simulate->add_option("--seed", opt.scenario.seed, "delay permutation seed");
  simulate->add_flag("--post-fix", opt.scenario.post_fix, "receipt-gated behavior");
  simulate->add_option("--fixture-repo", opt.fixture_repo, "also write the toy repo here");
  simulate->add_flag("--defective", opt.fixture_defective,
                     "fixture variant when no preset is given");

  CLI11_PARSE(app, argc, argv);

  try {
    if (update->parsed()) return run_single_tool(opt, vigil::StageTool::update_emobank);
    if (diagnose->parsed()) return run_single_tool(opt, vigil::StageTool::diagnose_rbt);
    if (patch_prompt->parsed()) return run_single_tool(opt, vigil::StageTool::build_prompt_patch);
    if (propose->parsed()) return run_single_tool(opt, vigil::StageTool::build_code_proposal);
    if (runall->parsed()) return run_all(opt);
    if (simulate->parsed()) return run_simulate(opt);
  } catch (const vigil::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return vigil::exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
