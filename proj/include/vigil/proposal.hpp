#pragma once

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vigil/diff.hpp"
#include "vigil/errors.hpp"
#include "vigil/prompt_patch.hpp"
#include "vigil/rbt.hpp"
#include "vigil/time.hpp"

namespace vigil {

/// A scanner-flagged code location matching a known defect pattern.
struct Hotspot {
  std::string file;  // relative to the scanned root
  int line = 0;      // 1-based
  std::string pattern_id;
  std::string excerpt;  // the verbatim line
};

/// Line-level scan rule; a line matches when `pattern` fires and `absent`
/// (when set) does not.
struct PatternRule {
  std::string id;
  std::string pattern;
  std::optional<std::string> absent;
};

class PatternTable {
 public:
  static PatternTable defaults() {
    PatternTable t;
    t.simple_rules_ = {
        {"naive_datetime", R"re(\bnow\(\)|\butcnow\(\)|\blocaltime\()re", std::nullopt},
        {"mixed_timestamp", R"re(strftime\s*\()re", std::string{R"re(%z)re"}},
    };
    t.ignore_dirs_ = {".git",   ".hg",         ".svn",   "__pycache__", "node_modules",
                      ".venv",  "venv",        "build",  "target",      "output"};
    t.compile();
    return t;
  }

  /// Override from JSON: {"patterns": [{"id", "pattern", "absent"?}],
  /// "ignore_dirs": [...]}. The context-aware toast/retry rules stay built in.
  static PatternTable from_json(const nlohmann::json& doc) {
    PatternTable t = defaults();
    if (doc.contains("patterns")) {
      t.simple_rules_.clear();
      for (const auto& item : doc["patterns"]) {
        PatternRule r;
        r.id = item.at("id").get<std::string>();
        r.pattern = item.at("pattern").get<std::string>();
        if (item.contains("absent")) r.absent = item["absent"].get<std::string>();
        t.simple_rules_.push_back(std::move(r));
      }
    }
    if (doc.contains("ignore_dirs")) {
      t.ignore_dirs_.clear();
      for (const auto& d : doc["ignore_dirs"]) t.ignore_dirs_.push_back(d.get<std::string>());
    }
    t.compile();
    return t;
  }

  const std::vector<PatternRule>& simple_rules() const { return simple_rules_; }
  const std::vector<std::string>& ignore_dirs() const { return ignore_dirs_; }

  bool ignored_dir(const std::string& name) const {
    return std::find(ignore_dirs_.begin(), ignore_dirs_.end(), name) != ignore_dirs_.end();
  }

  bool simple_match(std::size_t rule_index, const std::string& line) const {
    if (!std::regex_search(line, compiled_[rule_index])) return false;
    const auto& absent = simple_rules_[rule_index].absent;
    if (absent && std::regex_search(line, compiled_absent_[rule_index])) return false;
    return true;
  }

 private:
  void compile() {
    compiled_.clear();
    compiled_absent_.clear();
    for (const auto& r : simple_rules_) {
      try {
        compiled_.emplace_back(r.pattern);
        compiled_absent_.emplace_back(r.absent.value_or("$^"));
      } catch (const std::regex_error& e) {
        throw error(errc::config, "bad scan pattern '" + r.id + "': " + e.what());
      }
    }
  }

  std::vector<PatternRule> simple_rules_;
  std::vector<std::string> ignore_dirs_;
  std::vector<std::regex> compiled_;
  std::vector<std::regex> compiled_absent_;
};

namespace scan_detail {

inline const std::regex& toast_call_re() {
  static const std::regex re(R"re(\b(toast|notify|show_toast|send_toast)\s*\()re");
  return re;
}

inline const std::regex& api_call_re() {
  static const std::regex re(
      R"re(\b(requests\.(get|post)|api_call|call_tool|fetch|urlopen)\s*\()re");
  return re;
}

inline const std::regex& def_line_re() {
  static const std::regex re(R"re(^\s*(def|class|function)\b)re");
  return re;
}

inline std::size_t indent_of(const std::string& line) {
  std::size_t n = 0;
  while (n < line.size() && (line[n] == ' ' || line[n] == '\t')) ++n;
  return n;
}

inline bool blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

/// Start of the enclosing block, approximated by indentation: the nearest
/// preceding non-blank line with strictly smaller indentation (ideally a
/// def line); file start when indentation never decreases.
inline std::size_t block_start(const std::vector<std::string>& lines, std::size_t at) {
  const std::size_t indent = indent_of(lines[at]);
  for (std::size_t i = at; i-- > 0;) {
    if (blank(lines[i])) continue;
    if (indent_of(lines[i]) < indent) return i;
  }
  return 0;
}

inline bool span_contains(const std::vector<std::string>& lines, std::size_t begin,
                          std::size_t end_inclusive, const char* needle) {
  for (std::size_t i = begin; i <= end_inclusive && i < lines.size(); ++i) {
    if (lines[i].find(needle) != std::string::npos) return true;
  }
  return false;
}

inline bool looks_binary(const std::string& content) {
  const std::size_t probe = std::min<std::size_t>(content.size(), 4096);
  return content.substr(0, probe).find('\0') != std::string::npos;
}

}  // namespace scan_detail

struct ScanResult {
  std::vector<Hotspot> hotspots;  // ordered by (file, line, pattern)
  std::size_t files_scanned = 0;
  std::size_t files_skipped = 0;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error(errc::io, "cannot read: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

/// Scan one file's content; `rel_path` is used for reporting only.
inline void scan_content(const std::string& rel_path, const std::string& content,
                         const PatternTable& rules, std::vector<Hotspot>& out) {
  namespace sd = scan_detail;
  const auto parsed = diff_detail::split_lines(content);
  const auto& lines = parsed.lines;

  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    for (std::size_t r = 0; r < rules.simple_rules().size(); ++r) {
      if (rules.simple_match(r, line)) {
        out.push_back({rel_path, int(i) + 1, rules.simple_rules()[r].id, line});
      }
    }
    if (std::regex_search(line, sd::def_line_re())) continue;
    if (std::regex_search(line, sd::toast_call_re())) {
      const std::size_t begin = sd::block_start(lines, i);
      if (!sd::span_contains(lines, begin, i, "receipt")) {
        out.push_back({rel_path, int(i) + 1, "ungated_toast", line});
      }
    }
    if (std::regex_search(line, sd::api_call_re())) {
      const std::size_t begin = sd::block_start(lines, i);
      if (!sd::span_contains(lines, begin, i, "retry")) {
        out.push_back({rel_path, int(i) + 1, "bare_api_call", line});
      }
    }
  }
}

/// Walk the target repo and collect hotspots. Read-only; binary files and
/// ignore-dirs are skipped, unreadable files are counted and skipped.
inline ScanResult scan_hotspots(const std::string& root,
                                const PatternTable& rules = PatternTable::defaults()) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw error(errc::io, "not a scannable directory: " + root);

  ScanResult result;
  std::vector<std::pair<std::string, fs::path>> files;  // (relative, absolute)
  fs::recursive_directory_iterator it(root, fs::directory_options::skip_permission_denied);
  for (auto end = fs::recursive_directory_iterator(); it != end; ++it) {
    if (it->is_directory()) {
      if (rules.ignored_dir(it->path().filename().string())) it.disable_recursion_pending();
      continue;
    }
    if (!it->is_regular_file()) continue;
    files.emplace_back(fs::relative(it->path(), root).generic_string(), it->path());
  }
  std::sort(files.begin(), files.end());

  for (const auto& [rel, abs] : files) {
    std::string content;
    try {
      content = read_file(abs);
    } catch (const error&) {
      ++result.files_skipped;
      continue;
    }
    if (scan_detail::looks_binary(content)) {
      ++result.files_skipped;
      continue;
    }
    ++result.files_scanned;
    scan_content(rel, content, rules, result.hotspots);
  }

  std::sort(result.hotspots.begin(), result.hotspots.end(),
            [](const Hotspot& a, const Hotspot& b) {
              if (a.file != b.file) return a.file < b.file;
              if (a.line != b.line) return a.line < b.line;
              return a.pattern_id < b.pattern_id;
            });
  return result;
}

/// A scored, deterministic remediation generator. Transforms only compute
/// edits; nothing ever writes into the target repo.
class Strategy {
 public:
  virtual ~Strategy() = default;
  virtual const std::string& name() const = 0;
  virtual double score(const RbtDiagnosis& diagnosis,
                       const std::vector<Hotspot>& hotspots) const = 0;
  virtual std::vector<FileEdit> transform(const std::string& repo_root,
                                          const std::vector<Hotspot>& hotspots) const = 0;
  virtual std::string rationale(const RbtDiagnosis& diagnosis) const = 0;
};

namespace strategy_detail {

inline std::size_t count_pattern(const std::vector<Hotspot>& hotspots, const char* id) {
  return std::size_t(std::count_if(hotspots.begin(), hotspots.end(),
                                   [&](const Hotspot& h) { return h.pattern_id == id; }));
}

inline bool cause_mentions(const std::string& cause, std::initializer_list<const char*> words) {
  for (const char* w : words) {
    if (cause.find(w) != std::string::npos) return true;
  }
  return false;
}

/// Python source for the proposed utils/reliability module. The five function
/// names are the contract; backoff parameters are emitted as constants so
/// reviewers can tune them.
inline std::string reliability_module_py() {
  return R"py("""Reliability helpers for receipt-gated notification flows."""

import random
import time
from datetime import datetime, timezone

RETRY_MAX_RETRIES = 1
RETRY_BASE_DELAY_S = 1.0
RETRY_FACTOR = 2.0


def to_utc_iso(value):
    """Render a timestamp as UTC ISO-8601; naive datetimes are taken as UTC."""
    if isinstance(value, str):
        return value
    if value.tzinfo is None:
        value = value.replace(tzinfo=timezone.utc)
    return value.astimezone(timezone.utc).isoformat()


def call_with_retry(fn):
    """Call fn(); retry once on failure with full-jitter exponential backoff."""
    delay = RETRY_BASE_DELAY_S
    for attempt in range(RETRY_MAX_RETRIES + 1):
        try:
            return fn()
        except Exception:
            if attempt >= RETRY_MAX_RETRIES:
                raise
            time.sleep(random.uniform(0.0, delay))
            delay *= RETRY_FACTOR


def structured_toast(level, reason_code, message=""):
    """Build a toast payload with a stable reason code."""
    return {
        "level": level,
        "reason": reason_code,
        "message": message,
        "ts": to_utc_iso(datetime.now(timezone.utc)),
    }


def wait_for_receipt(poll, timeout_s=10.0, poll_interval_s=0.5):
    """Poll for backend confirmation until the timeout expires."""
    deadline = time.monotonic() + timeout_s
    while time.monotonic() < deadline:
        if poll():
            return True
        time.sleep(poll_interval_s)
    return False


def gate_success_on_receipt(poll, on_success, on_failure):
    """Emit the success toast only after a verified receipt."""
    if wait_for_receipt(poll):
        return on_success()
    return on_failure(structured_toast("error", "receipt.timeout"))
)py";
}

inline const std::regex& import_line_re() {
  static const std::regex re(R"re(^(from|import)\s)re");
  return re;
}

/// Insert `line` after the last top-level import, or at the top of the file.
inline void insert_import(std::vector<std::string>& lines, const std::string& import_line) {
  for (const auto& l : lines) {
    if (l == import_line) return;
  }
  std::size_t insert_at = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (std::regex_search(lines[i], import_line_re())) insert_at = i + 1;
  }
  lines.insert(lines.begin() + std::ptrdiff_t(insert_at), import_line);
}

inline std::string join_lines(const std::vector<std::string>& lines, bool final_newline) {
  std::string out;
  for (const auto& l : lines) {
    out += l;
    out += '\n';
  }
  if (!final_newline && !out.empty()) out.pop_back();
  return out;
}

}  // namespace strategy_detail

/// Remediation for premature success toasts: proposes the reliability
/// utility module and inserts a receipt gate above each ungated toast.
class TzReceiptStrategy : public Strategy {
 public:
  const std::string& name() const override {
    static const std::string n = "TZReceiptStrategy";
    return n;
  }

  double score(const RbtDiagnosis& diagnosis,
               const std::vector<Hotspot>& hotspots) const override {
    namespace sd = strategy_detail;
    if (!diagnosis.top_thorn ||
        !sd::cause_mentions(*diagnosis.top_thorn, {"toast", "receipt"})) {
      return 0.0;
    }
    const std::size_t relevant = sd::count_pattern(hotspots, "ungated_toast") +
                                 sd::count_pattern(hotspots, "naive_datetime");
    if (relevant == 0) return 0.0;
    return 2.0 + double(relevant);
  }

  std::vector<FileEdit> transform(const std::string& repo_root,
                                  const std::vector<Hotspot>& hotspots) const override {
    namespace sd = strategy_detail;
    namespace fs = std::filesystem;
    std::vector<FileEdit> edits;
    if (!fs::exists(fs::path(repo_root) / "utils" / "reliability.py")) {
      edits.push_back({"utils/reliability.py", std::nullopt, sd::reliability_module_py()});
    }

    std::map<std::string, std::vector<int>> gates;  // file -> hotspot lines
    for (const auto& h : hotspots) {
      if (h.pattern_id == "ungated_toast") gates[h.file].push_back(h.line);
    }
    for (auto& [file, hotspot_lines] : gates) {
      const std::string old_text = read_file(fs::path(repo_root) / file);
      auto parsed = diff_detail::split_lines(old_text);
      std::sort(hotspot_lines.rbegin(), hotspot_lines.rend());  // bottom-up keeps lines valid
      for (int line_no : hotspot_lines) {
        const std::size_t idx = std::size_t(line_no) - 1;
        if (idx >= parsed.lines.size()) continue;
        const std::string indent =
            parsed.lines[idx].substr(0, scan_detail::indent_of(parsed.lines[idx]));
        const std::vector<std::string> gate{
            indent + "if not reliability.wait_for_receipt(lambda: True):  "
                     "# wire to the real receipt probe",
            indent + "    return reliability.structured_toast(\"error\", \"receipt.timeout\")",
        };
        parsed.lines.insert(parsed.lines.begin() + std::ptrdiff_t(idx), gate.begin(), gate.end());
      }
      sd::insert_import(parsed.lines, "from utils import reliability");
      edits.push_back({file, old_text,
                       sd::join_lines(parsed.lines, parsed.ends_with_newline)});
    }
    return edits;
  }

  std::string rationale(const RbtDiagnosis& diagnosis) const override {
    std::string cause = diagnosis.top_thorn.value_or("(none)");
    return "Success toasts fire before backend receipts, producing the `" + cause +
           "` thorn. The patch adds a reliability module and gates each flagged toast on "
           "receipt confirmation, with UTC ISO-8601 helpers for the timestamp drift.";
  }
};

/// Remediation for unprotected network/tool calls: wraps each flagged call
/// in a retry helper (one retry, jittered exponential backoff).
class RetryErrorsStrategy : public Strategy {
 public:
  const std::string& name() const override {
    static const std::string n = "RetryErrorsStrategy";
    return n;
  }

  double score(const RbtDiagnosis& diagnosis,
               const std::vector<Hotspot>& hotspots) const override {
    namespace sd = strategy_detail;
    const std::size_t bare = sd::count_pattern(hotspots, "bare_api_call");
    if (bare == 0) return 0.0;
    bool failing_thorn = false;
    for (const auto& t : diagnosis.thorns) {
      if (sd::cause_mentions(t.cause, {":fail", ":error", "error", "fail"})) {
        failing_thorn = true;
        break;
      }
    }
    if (!failing_thorn) return 0.0;
    return 1.0 + double(bare);
  }

  std::vector<FileEdit> transform(const std::string& repo_root,
                                  const std::vector<Hotspot>& hotspots) const override {
    namespace sd = strategy_detail;
    namespace fs = std::filesystem;
    static const std::regex call_re(
        R"re(\b(requests\.(get|post)|api_call|call_tool|fetch|urlopen)\s*\([^()]*\))re");

    std::vector<FileEdit> edits;
    if (!fs::exists(fs::path(repo_root) / "utils" / "reliability.py")) {
      edits.push_back({"utils/reliability.py", std::nullopt, sd::reliability_module_py()});
    }

    std::map<std::string, std::vector<int>> wraps;
    for (const auto& h : hotspots) {
      if (h.pattern_id == "bare_api_call") wraps[h.file].push_back(h.line);
    }
    for (auto& [file, hotspot_lines] : wraps) {
      const std::string old_text = read_file(fs::path(repo_root) / file);
      auto parsed = diff_detail::split_lines(old_text);
      bool touched = false;
      for (int line_no : hotspot_lines) {
        const std::size_t idx = std::size_t(line_no) - 1;
        if (idx >= parsed.lines.size()) continue;
        std::smatch m;
        if (!std::regex_search(parsed.lines[idx], m, call_re)) continue;  // nested call, skip
        parsed.lines[idx] = m.prefix().str() + "reliability.call_with_retry(lambda: " +
                            m.str() + ")" + m.suffix().str();
        touched = true;
      }
      if (!touched) continue;
      sd::insert_import(parsed.lines, "from utils import reliability");
      edits.push_back({file, old_text,
                       sd::join_lines(parsed.lines, parsed.ends_with_newline)});
    }
    return edits;
  }

  std::string rationale(const RbtDiagnosis& diagnosis) const override {
    std::string cause = diagnosis.top_thorn.value_or("(none)");
    return "Failing calls behind the `" + cause +
           "` thorn run without retry protection. The patch wraps each flagged call in "
           "call_with_retry (one retry, jittered exponential backoff).";
  }
};

inline std::vector<std::unique_ptr<Strategy>> default_strategies() {
  std::vector<std::unique_ptr<Strategy>> out;
  out.push_back(std::make_unique<TzReceiptStrategy>());
  out.push_back(std::make_unique<RetryErrorsStrategy>());
  return out;
}

/// Highest-scoring strategy; registry order breaks ties, nullptr when every
/// score is zero (no proposal will be emitted).
inline const Strategy* select_strategy(const RbtDiagnosis& diagnosis,
                                       const std::vector<Hotspot>& hotspots,
                                       const std::vector<std::unique_ptr<Strategy>>& registry) {
  const Strategy* best = nullptr;
  double best_score = 0.0;
  for (const auto& s : registry) {
    const double score = s->score(diagnosis, hotspots);
    if (score > best_score) {
      best = s.get();
      best_score = score;
    }
  }
  return best;
}

/// Unified diff plus PR note, produced read-only against the target repo.
struct PatchProposal {
  std::string diff;
  std::string pr_note;
  Instant created_at{};
  std::string strategy;
};

inline PatchProposal generate_proposal(const Strategy& strategy, const std::string& repo_root,
                                       const std::vector<Hotspot>& hotspots,
                                       const RbtDiagnosis& diagnosis, Instant created_at) {
  PatchProposal p;
  p.created_at = created_at;
  p.strategy = strategy.name();
  p.diff = unified_diff(strategy.transform(repo_root, hotspots));

  std::string note;
  note += "# Patch proposal: " + strategy.name() + "\n\n";
  note += "Generated " + format_iso8601(created_at) + " by the vigil proposal engine.\n\n";
  note += "## Diagnosis\n\n";
  note += "- top thorn: `" + diagnosis.top_thorn.value_or("(none)") + "`\n";
  note += "- thorns: " + std::to_string(diagnosis.thorns.size()) +
          ", buds: " + std::to_string(diagnosis.buds.size()) +
          ", roses: " + std::to_string(diagnosis.roses.size()) + "\n";
  note += std::string("- fallback diagnosis: ") + (diagnosis.fallback ? "yes" : "no") + "\n\n";
  note += "## Hotspots\n\n";
  if (hotspots.empty()) {
    note += "(none)\n";
  } else {
    for (const auto& h : hotspots) {
      note += "- " + h.file + ":" + std::to_string(h.line) + " " + h.pattern_id + "\n";
    }
  }
  note += "\n## Rationale\n\n" + strategy.rationale(diagnosis) + "\n";
  p.pr_note = note;
  return p;
}

/// Write `<prefix><ts>.diff` and the matching PR note under out_dir, never
/// overwriting an existing pair (suffix -2, -3, ... on collision).
inline std::pair<std::string, std::string> persist_proposal(
    const PatchProposal& p, const std::string& out_dir,
    const std::string& diff_prefix = "patch_", const std::string& pr_prefix = "PR_") {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir)) throw error(errc::io, "cannot create: " + out_dir);

  const std::string ts = format_compact(p.created_at);
  for (int attempt = 1; attempt < 1000; ++attempt) {
    const std::string suffix = attempt == 1 ? "" : "-" + std::to_string(attempt);
    const fs::path diff_path = fs::path(out_dir) / (diff_prefix + ts + suffix + ".diff");
    const fs::path pr_path = fs::path(out_dir) / (pr_prefix + ts + suffix + ".md");
    if (fs::exists(diff_path) || fs::exists(pr_path)) continue;
    atomic_write_file(diff_path.string(), p.diff);
    try {
      atomic_write_file(pr_path.string(), p.pr_note);
    } catch (...) {
      fs::remove(diff_path, ec);  // never leave a partial pair behind
      throw;
    }
    return {diff_path.string(), pr_path.string()};
  }
  throw error(errc::io, "proposal name space exhausted in " + out_dir);
}

}  // namespace vigil
