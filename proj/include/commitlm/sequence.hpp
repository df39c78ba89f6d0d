#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "commitlm/commit.hpp"
#include "commitlm/vocab.hpp"

namespace commitlm {

/// Segment class of every token in a built sequence.
/// [CLS] and [CODE] carry Ctx; [MSG]+message carry Msg; [FILE]+path carry
/// File; [NEG]/[POS] spans (including their [END]) carry Neg/Pos.
enum class SegmentId { Msg = 0, File = 1, Ctx = 2, Neg = 3, Pos = 4 };

constexpr int kNumSegments = 5;

const char* segment_name(SegmentId seg);
SegmentId segment_from_int(int value);

struct SegmentedSequence {
    std::vector<int> ids;
    std::vector<SegmentId> segs;
    // set when tail context was dropped to fit the length budget
    bool truncated = false;

    std::size_t size() const { return ids.size(); }
    void push(int id, SegmentId seg) {
        ids.push_back(id);
        segs.push_back(seg);
    }
    bool operator==(const SegmentedSequence&) const = default;
};

class SequenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TooLongError : public SequenceError {
public:
    TooLongError(std::size_t length, std::size_t limit)
        : SequenceError("sequence length " + std::to_string(length) +
                        " exceeds maximum " + std::to_string(limit)),
          length(length) {}
    std::size_t length;
};

// commit has neither added nor deleted lines, so no edit pair exists
class NoChangeError : public SequenceError {
public:
    using SequenceError::SequenceError;
};

class MalformedSequenceError : public SequenceError {
public:
    using SequenceError::SequenceError;
};

struct BuildOptions {
    std::size_t max_length = 512;
};

/// One element of the serialized commit stream: either a reserved token or a
/// text fragment (message, path, or a single source line incl. its newline).
struct MarkedPiece {
    enum class Kind { Special, Text };
    Kind kind;
    int special_id = -1;
    std::string text;
    SegmentId seg;

    static MarkedPiece special(int id, SegmentId seg) { return {Kind::Special, id, "", seg}; }
    static MarkedPiece raw(std::string text, SegmentId seg) {
        return {Kind::Text, -1, std::move(text), seg};
    }
    bool operator==(const MarkedPiece&) const = default;
};

/// [CLS] [MSG] M [FILE] F [CODE] C per file, where C interleaves context
/// lines with [NEG]…[END] / [POS]…[END] spans, one span per maximal run of
/// same-kind changed lines, in hunk order.
std::vector<MarkedPiece> serialize_commit(const CommitRecord& record);

SegmentedSequence encode_pieces(const std::vector<MarkedPiece>& pieces, const Vocabulary& vocab);

/// Full encoder input X. Throws TooLongError beyond opts.max_length.
SegmentedSequence build_full_input(const CommitRecord& record, const Vocabulary& vocab,
                                   const BuildOptions& opts = {});

/// Message-generation pair: input drops the [MSG] M region; target is
/// [CLS] M [EOS] carrying MsgSeg throughout.
std::pair<SegmentedSequence, SegmentedSequence> build_pl2nl_pair(const CommitRecord& record,
                                                                 const Vocabulary& vocab,
                                                                 const BuildOptions& opts = {});

/// Edit pair: input keeps context and [NEG] spans but drops [POS] spans;
/// target is [CLS] + context with [POS] spans (no file/code markers) + [EOS].
/// Throws NoChangeError when the commit changes nothing.
std::pair<SegmentedSequence, SegmentedSequence> build_plnl2pl_pair(const CommitRecord& record,
                                                                   const Vocabulary& vocab,
                                                                   const BuildOptions& opts = {});

/// Drops code-context tokens, latest first, until the sequence fits and sets
/// the truncated flag. Message, path, and changed spans are never cut; throws
/// TooLongError if they alone exceed the budget.
void truncate_tail_context(SegmentedSequence& seq, std::size_t max_length);

struct ParsedRegion {
    LineKind kind;                   // Context / Deleted (neg) / Added (pos)
    std::vector<std::string> lines;  // without trailing newlines
    bool operator==(const ParsedRegion&) const = default;
};

struct ParsedFile {
    std::string path;
    std::vector<ParsedRegion> regions;
    bool operator==(const ParsedFile&) const = default;
};

struct ParsedCommit {
    std::string message;
    std::vector<ParsedFile> files;
    bool truncated = false;
    bool operator==(const ParsedCommit&) const = default;
};

/// Inverse of the builders. Throws MalformedSequenceError on unbalanced
/// identifiers unless the sequence is flagged truncated, in which case a
/// partial parse is returned with `truncated` set.
ParsedCommit parse_sequence(const SegmentedSequence& seq, const Vocabulary& vocab);

}  // namespace commitlm
