#include <catch2/catch.hpp>

#include <cstdlib>
#include <random>

#include "support/test_util.hpp"
#include "vigil/diff.hpp"

using namespace vigil;

namespace {

/// Apply a unified diff with the system patch tool at zero fuzz.
int apply_patch(const std::string& root, const std::string& diff) {
  const std::string diff_path = root + "/__patch.diff";
  test_util::write_file(diff_path, diff);
  const std::string cmd =
      "cd '" + root + "' && patch -p1 -F0 --batch --quiet < __patch.diff > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  std::filesystem::remove(diff_path);
  return rc;
}

}  // namespace

TEST_CASE("identical content produces no diff", "[diff]") {
  CHECK(unified_diff_for({"a.txt", std::string("same\n"), "same\n"}).empty());
}

TEST_CASE("single-line change renders one hunk with three context lines", "[diff]") {
  const std::string old_text = "a\nb\nc\nd\ne\nf\ng\nh\n";
  const std::string new_text = "a\nb\nc\nD\ne\nf\ng\nh\n";
  const std::string diff = unified_diff_for({"f.txt", old_text, new_text});
  CHECK(diff.find("--- a/f.txt\n") == 0);
  CHECK(diff.find("+++ b/f.txt\n") != std::string::npos);
  CHECK(diff.find("@@ -1,7 +1,7 @@\n") != std::string::npos);
  CHECK(diff.find("-d\n") != std::string::npos);
  CHECK(diff.find("+D\n") != std::string::npos);
}

TEST_CASE("new files diff against /dev/null and patch creates them", "[diff]") {
  test_util::TempDir dir;
  const std::string content = "line one\nline two\n";
  const std::string diff = unified_diff({{"sub/new.txt", std::nullopt, content}});
  CHECK(diff.find("--- /dev/null\n") == 0);
  CHECK(diff.find("@@ -0,0 +1,2 @@\n") != std::string::npos);
  REQUIRE(apply_patch(dir.str(), diff) == 0);
  CHECK(test_util::slurp(dir.str("sub/new.txt")) == content);
}

TEST_CASE("distant changes split into separate hunks", "[diff]") {
  std::string old_text, new_text;
  for (int i = 0; i < 30; ++i) {
    old_text += "line" + std::to_string(i) + "\n";
    new_text += (i == 2 || i == 27 ? "CHANGED" + std::to_string(i) : "line" + std::to_string(i)) + "\n";
  }
  const std::string diff = unified_diff_for({"f.txt", old_text, new_text});
  CHECK(std::count(diff.begin(), diff.end(), '@') == 8);  // two @@ ... @@ headers

  test_util::TempDir dir;
  test_util::write_file(dir.str("f.txt"), old_text);
  REQUIRE(apply_patch(dir.str(), diff) == 0);
  CHECK(test_util::slurp(dir.str("f.txt")) == new_text);
}

TEST_CASE("missing trailing newlines round-trip through patch", "[diff]") {
  test_util::TempDir dir;
  const std::string old_text = "a\nb";      // no trailing newline
  const std::string new_text = "a\nb\nc\n"; // gains one
  const std::string diff = unified_diff_for({"f.txt", old_text, new_text});
  CHECK(diff.find("\\ No newline at end of file\n") != std::string::npos);
  test_util::write_file(dir.str("f.txt"), old_text);
  REQUIRE(apply_patch(dir.str(), diff) == 0);
  CHECK(test_util::slurp(dir.str("f.txt")) == new_text);
}

TEST_CASE("multi-file diffs apply in order", "[diff]") {
  test_util::TempDir dir;
  test_util::write_file(dir.str("one.txt"), "1\n2\n3\n");
  const std::string diff = unified_diff({
      {"one.txt", std::string("1\n2\n3\n"), "1\ntwo\n3\n"},
      {"two.txt", std::nullopt, "fresh\n"},
  });
  REQUIRE(apply_patch(dir.str(), diff) == 0);
  CHECK(test_util::slurp(dir.str("one.txt")) == "1\ntwo\n3\n");
  CHECK(test_util::slurp(dir.str("two.txt")) == "fresh\n");
}

TEST_CASE("randomized edits always apply cleanly at zero fuzz", "[diff]") {
  std::mt19937_64 rng(47);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 1 + int(rng() % 40);
    std::vector<std::string> old_lines;
    for (int i = 0; i < n; ++i) {
      old_lines.push_back("ln" + std::to_string(i) + "_" + std::to_string(rng() % 5));
    }
    std::vector<std::string> new_lines = old_lines;
    const int edits = 1 + int(rng() % 6);
    for (int e = 0; e < edits && !new_lines.empty(); ++e) {
      const std::size_t pos = rng() % new_lines.size();
      switch (rng() % 3) {
        case 0: new_lines[pos] = "edited_" + std::to_string(rng() % 100); break;
        case 1: new_lines.erase(new_lines.begin() + std::ptrdiff_t(pos)); break;
        default:
          new_lines.insert(new_lines.begin() + std::ptrdiff_t(pos),
                           "inserted_" + std::to_string(rng() % 100));
          break;
      }
    }
    auto join = [](const std::vector<std::string>& lines) {
      std::string out;
      for (const auto& l : lines) out += l + "\n";
      return out;
    };
    const std::string old_text = join(old_lines);
    const std::string new_text = join(new_lines);

    test_util::TempDir dir;
    test_util::write_file(dir.str("f.txt"), old_text);
    const std::string diff = unified_diff_for({"f.txt", old_text, new_text});
    if (diff.empty()) {
      REQUIRE(old_text == new_text);
      continue;
    }
    REQUIRE(apply_patch(dir.str(), diff) == 0);
    REQUIRE(test_util::slurp(dir.str("f.txt")) == new_text);
  }
}
