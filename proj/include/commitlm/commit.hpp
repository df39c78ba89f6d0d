#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace commitlm {

enum class LineKind : unsigned char { Context, Deleted, Added };

/// One line inside a hunk. `text` carries the raw content without the
/// leading ' '/'-'/'+' marker and without a trailing newline.
struct ChangedLine {
    LineKind kind = LineKind::Context;
    std::string text;

    bool operator==(const ChangedLine&) const = default;
};

struct Hunk {
    int old_start = 1;
    int old_count = 0;
    int new_start = 1;
    int new_count = 0;
    std::string header_context;
    std::vector<ChangedLine> lines;

    bool operator==(const Hunk&) const = default;
};

struct FileDiff {
    std::string path;
    std::vector<Hunk> hunks;

    bool operator==(const FileDiff&) const = default;
};

struct CommitRecord {
    std::string repo;
    std::string commit_id;
    std::string language;
    std::string message;
    std::vector<FileDiff> files;

    bool operator==(const CommitRecord&) const = default;
};

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MalformedHeaderError : ParseError {
    using ParseError::ParseError;
};

struct MalformedDiffError : ParseError {
    MalformedDiffError(const std::string& what, std::size_t offset)
        : ParseError(what + " (byte offset " + std::to_string(offset) + ")"),
          byte_offset(offset) {}
    std::size_t byte_offset = 0;
};

struct MalformedCommitError : ParseError {
    using ParseError::ParseError;
};

/// Parses a "@@ -a,b +c,d @@ ctx" header line. A count omitted in the
/// short form ("@@ -N +M @@") defaults to 1. Throws MalformedHeaderError.
Hunk parse_hunk_header(std::string_view line);

/// Parses the diff portion of a commit in unified format. Binary-file and
/// mode-change metadata lines are skipped; "\ No newline at end of file"
/// markers are dropped. Throws MalformedDiffError / MalformedHeaderError.
std::vector<FileDiff> parse_unified_diff(std::string_view text);

/// Parses a `git show`-style dump: "commit <id>" header, indented message
/// block, then a unified diff. The returned record carries the raw message
/// (not yet normalized) and no language. Throws MalformedCommitError.
CommitRecord parse_git_show(std::string_view text);

/// First sentence of a commit message: the prefix up to (inclusive of) the
/// first '.', '!' or '?' that is followed by whitespace or end of input, or
/// up to the first newline, whichever comes first. Surrounding whitespace
/// is trimmed. Idempotent.
std::string extract_first_sentence(std::string_view message);

/// True iff the message has at least one alphabetic character and >= 90%
/// of its alphabetic characters are ASCII letters. Non-ASCII codepoints are
/// classified by Unicode block ranges (Latin supplements, Greek, Cyrillic,
/// CJK, ...); symbols and punctuation never count as letters.
bool is_english(std::string_view message);

/// True iff the commit touches exactly one file with exactly one hunk, and
/// within that hunk all Added lines form one contiguous run and all Deleted
/// lines form one contiguous run (either run may be empty, not both).
bool is_consecutive_modification(const CommitRecord& record);

/// Canonical unified-diff rendering; re-parsing the output reproduces the
/// input file list exactly.
std::string render_unified_diff(const std::vector<FileDiff>& files);

/// Canonical `git show`-style rendering of a whole record.
std::string render_git_show(const CommitRecord& record);

}  // namespace commitlm
