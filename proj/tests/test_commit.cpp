#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>
#include <vector>

#include "commitlm/commit.hpp"
#include "commitlm/synthetic.hpp"

using namespace commitlm;

namespace {

const char* kShowFixture =
    "commit 1f2e3d4c5b6a79881f2e3d4c5b6a79881f2e3d4c\n"
    "Author: Jane Dev <jane@example.org>\n"
    "Date:   Mon Mar 3 10:11:12 2025 +0100\n"
    "\n"
    "    Bugfix: Pass threshold to binarizer\n"
    "\n"
    "    The binarizer silently ignored the threshold argument.\n"
    "\n"
    "--- a/tpot/tpot.py\n"
    "+++ b/tpot/tpot.py\n"
    "@@ -1025,7 +1025,7 @@ def _binarizer(self, X, threshold):\n"
    "     if not isinstance(X, np.ndarray):\n"
    "         X = np.array(X)\n"
    "     X = X.astype(np.float64)\n"
    "-    binarizer = Binarizer(copy=False)\n"
    "+    binarizer = Binarizer(copy=False, threshold=threshold)\n"
    "     X = binarizer.fit_transform(X)\n"
    "     X = X.reshape(X.shape)\n"
    "     return X\n";

CommitRecord two_file_record() {
    CommitRecord rec;
    rec.commit_id = "abcdefabcdefabcdefabcdefabcdefabcdefabcd";
    rec.message = "Split config loading.\n\nDetails follow here.";
    FileDiff f1;
    f1.path = "src/config.c";
    Hunk h1;
    h1.old_start = 3;
    h1.old_count = 4;
    h1.new_start = 3;
    h1.new_count = 5;
    h1.header_context = "int load(void)";
    h1.lines = {{LineKind::Context, "int load(void) {"},
                {LineKind::Deleted, "  return -1;"},
                {LineKind::Added, "  int rc = open_file();"},
                {LineKind::Added, "  return rc;"},
                {LineKind::Context, "}"},
                {LineKind::Context, ""}};
    f1.hunks.push_back(h1);
    FileDiff f2;
    f2.path = "include/config.h";
    Hunk h2;
    h2.old_start = 1;
    h2.old_count = 1;
    h2.new_start = 1;
    h2.new_count = 2;
    h2.lines = {{LineKind::Context, "#pragma once"},
                {LineKind::Added, "int load(void);"}};
    f2.hunks.push_back(h2);
    rec.files = {f1, f2};
    return rec;
}

}  // namespace

TEST_CASE("hunk header full form parses starts counts and context") {
    Hunk h = parse_hunk_header("@@ -1025,7 +1025,7 @@ def _binarizer(self, X, threshold):");
    CHECK(h.old_start == 1025);
    CHECK(h.old_count == 7);
    CHECK(h.new_start == 1025);
    CHECK(h.new_count == 7);
    CHECK(h.header_context == "def _binarizer(self, X, threshold):");
    CHECK(h.lines.empty());
}

TEST_CASE("hunk header short form defaults omitted counts to one") {
    Hunk h = parse_hunk_header("@@ -5 +9 @@");
    CHECK(h.old_start == 5);
    CHECK(h.old_count == 1);
    CHECK(h.new_start == 9);
    CHECK(h.new_count == 1);
    CHECK(h.header_context.empty());

    Hunk mixed = parse_hunk_header("@@ -5,0 +6 @@");
    CHECK(mixed.old_count == 0);
    CHECK(mixed.new_count == 1);
}

TEST_CASE("hunk header rejects malformed lines") {
    CHECK_THROWS_AS(parse_hunk_header("@@ -a,7 +1,7 @@"), MalformedHeaderError);
    CHECK_THROWS_AS(parse_hunk_header("@@ -1,7 +1,7"), MalformedHeaderError);
    CHECK_THROWS_AS(parse_hunk_header("@ -1,7 +1,7 @@"), MalformedHeaderError);
    CHECK_THROWS_AS(parse_hunk_header("@@ +1,7 -1,7 @@"), MalformedHeaderError);
    CHECK_THROWS_AS(parse_hunk_header(""), MalformedHeaderError);
}

TEST_CASE("unified diff parses files hunks and line kinds") {
    std::string diff = render_unified_diff(two_file_record().files);
    std::vector<FileDiff> files = parse_unified_diff(diff);
    REQUIRE(files.size() == 2);
    CHECK(files[0].path == "src/config.c");
    CHECK(files[1].path == "include/config.h");
    REQUIRE(files[0].hunks.size() == 1);
    const Hunk& h = files[0].hunks[0];
    CHECK(h.header_context == "int load(void)");
    REQUIRE(h.lines.size() == 6);
    CHECK(h.lines[0].kind == LineKind::Context);
    CHECK(h.lines[1].kind == LineKind::Deleted);
    CHECK(h.lines[2].kind == LineKind::Added);
    CHECK(h.lines[5].text == "");
    CHECK(files == two_file_record().files);
}

TEST_CASE("unified diff skips git metadata lines") {
    std::string diff =
        "diff --git a/m.py b/m.py\n"
        "index 89abcde..0123456 100644\n"
        "old mode 100644\n"
        "new mode 100755\n"
        "--- a/m.py\n"
        "+++ b/m.py\n"
        "@@ -1,2 +1,2 @@\n"
        " import os\n"
        "-x = 1\n"
        "+x = 2\n";
    std::vector<FileDiff> files = parse_unified_diff(diff);
    REQUIRE(files.size() == 1);
    CHECK(files[0].path == "m.py");
    REQUIRE(files[0].hunks.size() == 1);
    CHECK(files[0].hunks[0].lines.size() == 3);
}

TEST_CASE("unified diff skips binary file blocks") {
    std::string diff =
        "diff --git a/logo.png b/logo.png\n"
        "Binary files a/logo.png and b/logo.png differ\n"
        "--- a/m.py\n"
        "+++ b/m.py\n"
        "@@ -1,1 +1,1 @@\n"
        "-a = 1\n"
        "+a = 2\n";
    std::vector<FileDiff> files = parse_unified_diff(diff);
    REQUIRE(files.size() == 1);
    CHECK(files[0].path == "m.py");
}

TEST_CASE("unified diff drops no-newline markers") {
    std::string diff =
        "--- a/f.txt\n"
        "+++ b/f.txt\n"
        "@@ -1,1 +1,1 @@\n"
        "-old line\n"
        "\\ No newline at end of file\n"
        "+new line\n"
        "\\ No newline at end of file\n";
    std::vector<FileDiff> files = parse_unified_diff(diff);
    REQUIRE(files.size() == 1);
    REQUIRE(files[0].hunks.size() == 1);
    REQUIRE(files[0].hunks[0].lines.size() == 2);
    CHECK(files[0].hunks[0].lines[0].text == "old line");
    CHECK(files[0].hunks[0].lines[1].text == "new line");
}

TEST_CASE("unified diff handles dev null paths") {
    std::string added =
        "--- /dev/null\n"
        "+++ b/newfile.js\n"
        "@@ -0,0 +1,2 @@\n"
        "+let a = 1;\n"
        "+let b = 2;\n";
    std::vector<FileDiff> files = parse_unified_diff(added);
    REQUIRE(files.size() == 1);
    CHECK(files[0].path == "newfile.js");

    std::string deleted =
        "--- a/gone.js\n"
        "+++ /dev/null\n"
        "@@ -1,1 +0,0 @@\n"
        "-let a = 1;\n";
    files = parse_unified_diff(deleted);
    REQUIRE(files.size() == 1);
    CHECK(files[0].path == "gone.js");
}

TEST_CASE("unified diff enforces hunk line counts") {
    // Declares 2 old lines but provides only 1.
    std::string short_hunk =
        "--- a/f.c\n"
        "+++ b/f.c\n"
        "@@ -1,2 +1,1 @@\n"
        "-only one\n";
    CHECK_THROWS_AS(parse_unified_diff(short_hunk), MalformedDiffError);

    // Declares 1 new line but provides 2.
    std::string long_hunk =
        "--- a/f.c\n"
        "+++ b/f.c\n"
        "@@ -1,1 +1,1 @@\n"
        "-x\n"
        "+y\n"
        "+z\n";
    CHECK_THROWS_AS(parse_unified_diff(long_hunk), MalformedDiffError);
}

TEST_CASE("malformed diff error reports a byte offset inside the input") {
    std::string bad =
        "--- a/f.c\n"
        "+++ b/f.c\n"
        "@@ -1,3 +1,1 @@\n"
        "-x\n";
    try {
        parse_unified_diff(bad);
        FAIL("expected MalformedDiffError");
    } catch (const MalformedDiffError& e) {
        CHECK(e.byte_offset <= bad.size());
        CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
    }
}

TEST_CASE("unified diff requires ascending hunk starts within a file") {
    std::string out_of_order =
        "--- a/f.c\n"
        "+++ b/f.c\n"
        "@@ -10,1 +10,1 @@\n"
        "-a\n"
        "+b\n"
        "@@ -2,1 +2,1 @@\n"
        "-c\n"
        "+d\n";
    CHECK_THROWS_AS(parse_unified_diff(out_of_order), MalformedDiffError);
}

TEST_CASE("unified diff rejects orphan change lines") {
    CHECK_THROWS_AS(parse_unified_diff("+floating addition\n"), MalformedDiffError);
    std::string no_hunk =
        "--- a/f.c\n"
        "+++ b/f.c\n"
        "+floating\n";
    CHECK_THROWS_AS(parse_unified_diff(no_hunk), MalformedDiffError);
}

TEST_CASE("git show fixture parses id message and diff") {
    CommitRecord rec = parse_git_show(kShowFixture);
    CHECK(rec.commit_id == "1f2e3d4c5b6a79881f2e3d4c5b6a79881f2e3d4c");
    CHECK(rec.message ==
          "Bugfix: Pass threshold to binarizer\n\n"
          "The binarizer silently ignored the threshold argument.");
    REQUIRE(rec.files.size() == 1);
    CHECK(rec.files[0].path == "tpot/tpot.py");
    REQUIRE(rec.files[0].hunks.size() == 1);
    const Hunk& h = rec.files[0].hunks[0];
    CHECK(h.old_start == 1025);
    CHECK(h.lines.size() == 8);
    CHECK(h.lines[3] == ChangedLine{LineKind::Deleted, "    binarizer = Binarizer(copy=False)"});
    CHECK(h.lines[4] ==
          ChangedLine{LineKind::Added, "    binarizer = Binarizer(copy=False, threshold=threshold)"});
}

TEST_CASE("git show requires commit header and a diff") {
    CHECK_THROWS_AS(parse_git_show("not a commit at all\n"), MalformedCommitError);
    CHECK_THROWS_AS(parse_git_show("commit abc123\n\n    Message only, no diff\n"),
                    MalformedCommitError);
    CHECK_THROWS_AS(parse_git_show(""), MalformedCommitError);
}

TEST_CASE("first sentence stops at terminator followed by space or end") {
    CHECK(extract_first_sentence("Fix crash. Also tidy docs.") == "Fix crash.");
    CHECK(extract_first_sentence("Fix crash? Maybe.") == "Fix crash?");
    CHECK(extract_first_sentence("Ship it!") == "Ship it!");
    CHECK(extract_first_sentence("Fix crash.") == "Fix crash.");
}

TEST_CASE("first sentence keeps dotted versions intact") {
    CHECK(extract_first_sentence("Bump to v1.2.3 in manifests") ==
          "Bump to v1.2.3 in manifests");
    CHECK(extract_first_sentence("Bump to v1.2.3. Drop v1.1 support") == "Bump to v1.2.3.");
}

TEST_CASE("first sentence stops at the first newline") {
    CHECK(extract_first_sentence("Add retry logic\n\nLong body text here.") ==
          "Add retry logic");
    CHECK(extract_first_sentence("  padded subject  \nbody") == "padded subject");
}

TEST_CASE("first sentence is idempotent and handles empties") {
    for (const char* msg :
         {"Fix crash. Also tidy docs.", "Add retry logic\nbody", "   ", "", "One-liner"}) {
        std::string once = extract_first_sentence(msg);
        CHECK(extract_first_sentence(once) == once);
    }
    CHECK(extract_first_sentence("") == "");
    CHECK(extract_first_sentence("   \n\t ") == "");
}

TEST_CASE("is_english accepts ascii and rejects letterless text") {
    CHECK(is_english("Fix the frobnicator"));
    CHECK_FALSE(is_english(""));
    CHECK_FALSE(is_english("12345 !!! ---"));
    // Digits and punctuation are not letters, so one ASCII letter is enough.
    CHECK(is_english("v2: x"));
}

TEST_CASE("is_english sits exactly at the ninety percent boundary") {
    // 9 ASCII letters + 1 Cyrillic letter: 10*9 >= 9*10 holds.
    CHECK(is_english("abcdefghi\xD0\xB4"));
    // 8 ASCII letters + 2 Cyrillic letters: 10*8 < 9*10 fails.
    CHECK_FALSE(is_english("abcdefgh\xD0\xB4\xD0\xB4"));
    // Pure CJK fails outright.
    CHECK_FALSE(is_english("\xE4\xBF\xAE\xE5\xA4\x8D\xE9\x94\x99\xE8\xAF\xAF"));
}

TEST_CASE("is_english ignores non letter unicode symbols") {
    // Arrows and emoji are not letters in any block we count.
    CHECK(is_english("Fix build \xE2\x86\x92 again"));
}

TEST_CASE("consecutive modification accepts single contiguous runs") {
    CommitRecord rec = parse_git_show(kShowFixture);
    CHECK(is_consecutive_modification(rec));

    // Pure addition: one added run, no deletions.
    CommitRecord add = rec;
    add.files[0].hunks[0].lines = {{LineKind::Context, "a"},
                                   {LineKind::Added, "b"},
                                   {LineKind::Added, "c"},
                                   {LineKind::Context, "d"}};
    CHECK(is_consecutive_modification(add));
}

TEST_CASE("consecutive modification rejects split runs and multi file commits") {
    CommitRecord rec = parse_git_show(kShowFixture);

    CommitRecord split = rec;
    split.files[0].hunks[0].lines = {{LineKind::Added, "a"},
                                     {LineKind::Context, "gap"},
                                     {LineKind::Added, "b"}};
    CHECK_FALSE(is_consecutive_modification(split));

    CommitRecord two_hunks = rec;
    two_hunks.files[0].hunks.push_back(rec.files[0].hunks[0]);
    CHECK_FALSE(is_consecutive_modification(two_hunks));

    CommitRecord two_files = two_file_record();
    CHECK_FALSE(is_consecutive_modification(two_files));

    CommitRecord context_only = rec;
    context_only.files[0].hunks[0].lines = {{LineKind::Context, "a"}};
    CHECK_FALSE(is_consecutive_modification(context_only));

    CommitRecord no_files = rec;
    no_files.files.clear();
    CHECK_FALSE(is_consecutive_modification(no_files));
}

TEST_CASE("render then parse reproduces a diff exactly") {
    std::vector<FileDiff> files = two_file_record().files;
    std::string rendered = render_unified_diff(files);
    CHECK(parse_unified_diff(rendered) == files);
    // Rendering is a fixed point: parse -> render -> parse is stable.
    CHECK(render_unified_diff(parse_unified_diff(rendered)) == rendered);
}

TEST_CASE("render then parse reproduces a whole record") {
    CommitRecord rec = two_file_record();
    std::string shown = render_git_show(rec);
    CommitRecord back = parse_git_show(shown);
    CHECK(back.commit_id == rec.commit_id);
    CHECK(back.message == rec.message);
    CHECK(back.files == rec.files);
    CHECK(render_git_show(back) == shown);
}

TEST_CASE("messages with blank interior lines survive the show round trip") {
    CommitRecord rec = two_file_record();
    rec.message = "Subject line\n\nParagraph one.\n\nParagraph two.";
    CommitRecord back = parse_git_show(render_git_show(rec));
    CHECK(back.message == rec.message);
}

TEST_CASE("synthetic corpus round trips byte for byte") {
    SyntheticOptions opts;
    opts.count = 300;
    for (const CommitRecord& rec : synthetic_records(opts)) {
        std::string shown = render_git_show(rec);
        CommitRecord back = parse_git_show(shown);
        CHECK(render_git_show(back) == shown);
        CHECK(back.message == rec.message);
        CHECK(back.files == rec.files);
    }
}

TEST_CASE("concatenated per-file diffs parse the same as one diff") {
    std::vector<FileDiff> files = two_file_record().files;
    std::string joined;
    for (const FileDiff& f : files) {
        joined += render_unified_diff({f});
    }
    CHECK(parse_unified_diff(joined) == files);
}
