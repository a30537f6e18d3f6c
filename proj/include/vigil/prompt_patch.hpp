#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vigil/errors.hpp"
#include "vigil/rbt.hpp"
#include "vigil/time.hpp"

namespace vigil {

/// A prompt split into byte spans around its marker lines. Serialization of
/// an unmodified document is the original text, byte for byte.
struct PromptDocument {
  std::string text;
  std::size_t adaptive_begin = 0;  // first byte after the BEGIN marker line
  std::size_t adaptive_end = 0;    // first byte of the END marker line
  // [begin, end) of the core-identity block, inclusive of both marker lines.
  std::optional<std::pair<std::size_t, std::size_t>> core_span;

  const std::string& serialize() const { return text; }

  std::string_view adaptive() const {
    return std::string_view(text).substr(adaptive_begin, adaptive_end - adaptive_begin);
  }

  std::string_view core_identity() const {
    if (!core_span) return {};
    return std::string_view(text).substr(core_span->first, core_span->second - core_span->first);
  }
};

namespace prompt_detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

/// Markers match whole lines, with or without the "## " heading prefix.
inline bool is_marker(std::string_view line, std::string_view name) {
  const std::string_view t = trim(line);
  if (t == name) return true;
  return t.size() > 3 && t.substr(0, 3) == "## " && trim(t.substr(3)) == name;
}

struct MarkerHit {
  std::size_t line_begin;  // byte offset of the marker line
  std::size_t line_end;    // byte offset one past its newline (or EOF)
};

struct MarkerScan {
  std::vector<MarkerHit> adaptive_begin, adaptive_end, core_begin, core_end;
};

inline MarkerScan scan_markers(const std::string& text) {
  MarkerScan scan;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    const std::size_t line_end = eol == std::string::npos ? text.size() : eol + 1;
    const std::string_view line =
        std::string_view(text).substr(pos, (eol == std::string::npos ? text.size() : eol) - pos);
    const MarkerHit hit{pos, line_end};
    if (is_marker(line, "BEGIN_ADAPTIVE_SECTION")) scan.adaptive_begin.push_back(hit);
    else if (is_marker(line, "END_ADAPTIVE_SECTION")) scan.adaptive_end.push_back(hit);
    else if (is_marker(line, "BEGIN_CORE_IDENTITY")) scan.core_begin.push_back(hit);
    else if (is_marker(line, "END_CORE_IDENTITY")) scan.core_end.push_back(hit);
    if (eol == std::string::npos) break;
    pos = line_end;
  }
  return scan;
}

}  // namespace prompt_detail

/// Locate the adaptive section and the optional core-identity block.
/// Throws errc::structural when markers are missing, duplicated, or
/// unbalanced.
inline PromptDocument parse_prompt(const std::string& text) {
  const auto scan = prompt_detail::scan_markers(text);

  if (scan.adaptive_begin.empty() && scan.adaptive_end.empty()) {
    throw error(errc::structural, "no adaptive section");
  }
  if (scan.adaptive_begin.size() > 1 || scan.adaptive_end.size() > 1) {
    throw error(errc::structural, "duplicate adaptive markers");
  }
  if (scan.adaptive_begin.empty() || scan.adaptive_end.empty()) {
    throw error(errc::structural, "unbalanced adaptive markers: BEGIN/END must pair");
  }
  if (scan.adaptive_end.front().line_begin < scan.adaptive_begin.front().line_end) {
    throw error(errc::structural, "adaptive END precedes BEGIN");
  }

  if (scan.core_begin.size() > 1 || scan.core_end.size() > 1) {
    throw error(errc::structural, "duplicate core-identity markers");
  }
  if (scan.core_begin.size() != scan.core_end.size()) {
    throw error(errc::structural, "unbalanced core-identity markers: BEGIN/END must pair");
  }

  PromptDocument doc;
  doc.text = text;
  doc.adaptive_begin = scan.adaptive_begin.front().line_end;
  doc.adaptive_end = scan.adaptive_end.front().line_begin;
  if (!scan.core_begin.empty()) {
    if (scan.core_end.front().line_begin < scan.core_begin.front().line_end) {
      throw error(errc::structural, "core-identity END precedes BEGIN");
    }
    doc.core_span = {scan.core_begin.front().line_begin, scan.core_end.front().line_end};
  }
  return doc;
}

/// Deterministic reflection block: a header carrying the diagnosis timestamp
/// and fallback flag, one bullet per prompt rule (or a no-op note), and a
/// top-thorn summary line.
inline std::string render_adaptive(const RbtDiagnosis& diagnosis) {
  std::string block = "[vigil reflection as_of=" + format_iso8601(diagnosis.as_of) +
                      " fallback=" + (diagnosis.fallback ? "yes" : "no") + "]\n";
  if (diagnosis.prompt_rules_to_add.empty()) {
    block += "no changes required\n";
  } else {
    for (const auto& rule : diagnosis.prompt_rules_to_add) {
      block += "- " + rule + "\n";
    }
  }
  if (diagnosis.top_thorn) {
    block += "top thorn: " + *diagnosis.top_thorn + "\n";
  }
  return block;
}

/// Re-parse the patched text and require its core-identity block to be byte
/// identical to the original's. Any divergence aborts with the offset of the
/// first differing byte.
inline void verify_core_identity(const std::string& original, const std::string& patched) {
  const PromptDocument before = parse_prompt(original);
  PromptDocument after;
  try {
    after = parse_prompt(patched);
  } catch (const error& e) {
    const std::size_t at = before.core_span ? before.core_span->first : 0;
    throw guard_abort_error(at, std::string("patched prompt no longer parses: ") + e.what());
  }

  if (before.core_span.has_value() != after.core_span.has_value()) {
    const std::size_t at =
        before.core_span ? before.core_span->first : after.core_span->first;
    throw guard_abort_error(at, before.core_span ? "core-identity block disappeared"
                                                 : "core-identity block appeared");
  }
  if (!before.core_span) return;  // nothing to guard

  const std::string_view a = before.core_identity();
  const std::string_view b = after.core_identity();
  const std::size_t common = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < common; ++i) {
    if (a[i] != b[i]) {
      throw guard_abort_error(before.core_span->first + i, "core-identity byte changed");
    }
  }
  if (a.size() != b.size()) {
    throw guard_abort_error(before.core_span->first + common, "core-identity length changed");
  }
}

using AdaptiveRenderer = std::function<std::string(const RbtDiagnosis&)>;

/// Replace only the adaptive span, then run the core-identity guard on the
/// result. Returns the new prompt text; nothing else in the document moves.
inline std::string apply_prompt_patch(const std::string& old_text, const RbtDiagnosis& diagnosis,
                                      const AdaptiveRenderer& renderer = {}) {
  const PromptDocument doc = parse_prompt(old_text);
  std::string block = renderer ? renderer(diagnosis) : render_adaptive(diagnosis);
  if (!block.empty() && block.back() != '\n') block += '\n';

  std::string patched;
  patched.reserve(old_text.size() + block.size());
  patched.append(old_text, 0, doc.adaptive_begin);
  patched.append(block);
  patched.append(old_text, doc.adaptive_end, old_text.size() - doc.adaptive_end);

  verify_core_identity(old_text, patched);
  return patched;
}

/// Write-temp-then-rename so readers never observe a half-written file.
inline void atomic_write_file(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target{path};
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
  }
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw error(errc::io, "cannot write: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw error(errc::io, "write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw error(errc::io, "cannot replace: " + path);
  }
}

/// Hook run on the fully patched text before the guard; used by fault
/// injection drills to prove the guard blocks the write path.
using TextMutator = std::function<void(std::string&)>;

/// Full prompt-patch step: render, splice, guard, then atomically write
/// `out_path`. On guard abort no file is produced.
inline std::string patch_prompt_file(const std::string& prompt_text,
                                     const RbtDiagnosis& diagnosis, const std::string& out_path,
                                     const AdaptiveRenderer& renderer = {},
                                     const TextMutator& pre_guard_mutator = {}) {
  const PromptDocument doc = parse_prompt(prompt_text);
  std::string block = renderer ? renderer(diagnosis) : render_adaptive(diagnosis);
  if (!block.empty() && block.back() != '\n') block += '\n';

  std::string patched;
  patched.reserve(prompt_text.size() + block.size());
  patched.append(prompt_text, 0, doc.adaptive_begin);
  patched.append(block);
  patched.append(prompt_text, doc.adaptive_end, prompt_text.size() - doc.adaptive_end);

  if (pre_guard_mutator) pre_guard_mutator(patched);
  verify_core_identity(prompt_text, patched);
  atomic_write_file(out_path, patched);
  return patched;
}

}  // namespace vigil
