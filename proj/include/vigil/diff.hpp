#pragma once

#include <optional>
#include <string>
#include <vector>

namespace vigil {

/// One whole-file edit to be rendered as a unified diff. `old_text` absent
/// means the file is newly created.
struct FileEdit {
  std::string path;  // repo-relative, '/' separators
  std::optional<std::string> old_text;
  std::string new_text;
};

namespace diff_detail {

struct Lines {
  std::vector<std::string> lines;
  bool ends_with_newline = true;
};

inline Lines split_lines(const std::string& text) {
  Lines out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) {
      out.lines.push_back(text.substr(pos));
      out.ends_with_newline = false;
      return out;
    }
    out.lines.push_back(text.substr(pos, eol - pos));
    pos = eol + 1;
  }
  return out;
}

struct Op {
  enum Kind { keep, del, ins } kind;
  std::size_t old_pos;  // 0-based old cursor (line index for keep/del)
  std::size_t new_pos;  // 0-based new cursor (line index for keep/ins)
};

/// LCS-based line diff; deterministic backtracking (prefer deletion).
/// Final lines missing their newline compare unequal across sides so the
/// "\ No newline" marker is always emitted where it matters.
inline std::vector<Op> diff_ops(const Lines& a, const Lines& b) {
  const std::size_t n = a.lines.size();
  const std::size_t m = b.lines.size();
  auto equal = [&](std::size_t i, std::size_t j) {
    if (a.lines[i] != b.lines[j]) return false;
    const bool a_chopped = (i + 1 == n) && !a.ends_with_newline;
    const bool b_chopped = (j + 1 == m) && !b.ends_with_newline;
    return a_chopped == b_chopped;
  };

  std::vector<std::vector<std::size_t>> dp(n + 1, std::vector<std::size_t>(m + 1, 0));
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = m; j-- > 0;) {
      dp[i][j] = equal(i, j) ? dp[i + 1][j + 1] + 1 : std::max(dp[i + 1][j], dp[i][j + 1]);
    }
  }

  std::vector<Op> ops;
  std::size_t i = 0, j = 0;
  while (i < n && j < m) {
    if (equal(i, j)) {
      ops.push_back({Op::keep, i, j});
      ++i;
      ++j;
    } else if (dp[i + 1][j] >= dp[i][j + 1]) {
      ops.push_back({Op::del, i, j});
      ++i;
    } else {
      ops.push_back({Op::ins, i, j});
      ++j;
    }
  }
  while (i < n) {
    ops.push_back({Op::del, i, j});
    ++i;
  }
  while (j < m) {
    ops.push_back({Op::ins, i, j});
    ++j;
  }
  return ops;
}

inline void append_body_line(std::string& out, char tag, const std::string& line, bool chopped) {
  out.push_back(tag);
  out += line;
  out.push_back('\n');
  if (chopped) out += "\\ No newline at end of file\n";
}

}  // namespace diff_detail

/// Render one file edit as unified-diff hunks with `context` context lines.
/// Emits nothing when old and new content are identical.
inline std::string unified_diff_for(const FileEdit& edit, int context = 3) {
  namespace d = diff_detail;
  const d::Lines old_lines = d::split_lines(edit.old_text.value_or(std::string{}));
  const d::Lines new_lines = d::split_lines(edit.new_text);
  const std::vector<d::Op> ops = d::diff_ops(old_lines, new_lines);

  std::vector<std::size_t> changes;
  for (std::size_t k = 0; k < ops.size(); ++k) {
    if (ops[k].kind != d::Op::keep) changes.push_back(k);
  }
  if (changes.empty()) return {};

  std::string out;
  out += edit.old_text ? "--- a/" + edit.path + "\n" : "--- /dev/null\n";
  out += "+++ b/" + edit.path + "\n";

  const std::size_t ctx = static_cast<std::size_t>(context);
  std::size_t cluster_begin = 0;
  while (cluster_begin < changes.size()) {
    std::size_t cluster_end = cluster_begin;  // inclusive index into `changes`
    while (cluster_end + 1 < changes.size() &&
           changes[cluster_end + 1] - changes[cluster_end] <= 2 * ctx + 1) {
      ++cluster_end;
    }

    const std::size_t first = changes[cluster_begin] >= ctx ? changes[cluster_begin] - ctx : 0;
    const std::size_t last = std::min(ops.size() - 1, changes[cluster_end] + ctx);

    std::size_t old_count = 0, new_count = 0;
    for (std::size_t k = first; k <= last; ++k) {
      if (ops[k].kind != d::Op::ins) ++old_count;
      if (ops[k].kind != d::Op::del) ++new_count;
    }
    const std::size_t old_start = old_count > 0 ? ops[first].old_pos + 1 : ops[first].old_pos;
    const std::size_t new_start = new_count > 0 ? ops[first].new_pos + 1 : ops[first].new_pos;

    out += "@@ -" + std::to_string(old_start) + "," + std::to_string(old_count) + " +" +
           std::to_string(new_start) + "," + std::to_string(new_count) + " @@\n";

    for (std::size_t k = first; k <= last; ++k) {
      const d::Op& op = ops[k];
      const bool old_chopped = !old_lines.ends_with_newline &&
                               op.kind != d::Op::ins &&
                               op.old_pos + 1 == old_lines.lines.size();
      const bool new_chopped = !new_lines.ends_with_newline &&
                               op.kind != d::Op::del &&
                               op.new_pos + 1 == new_lines.lines.size();
      switch (op.kind) {
        case d::Op::keep:
          d::append_body_line(out, ' ', old_lines.lines[op.old_pos], old_chopped || new_chopped);
          break;
        case d::Op::del:
          d::append_body_line(out, '-', old_lines.lines[op.old_pos], old_chopped);
          break;
        case d::Op::ins:
          d::append_body_line(out, '+', new_lines.lines[op.new_pos], new_chopped);
          break;
      }
    }
    cluster_begin = cluster_end + 1;
  }
  return out;
}

/// Concatenate per-file diffs in the given order.
inline std::string unified_diff(const std::vector<FileEdit>& edits, int context = 3) {
  std::string out;
  for (const auto& edit : edits) out += unified_diff_for(edit, context);
  return out;
}

}  // namespace vigil
