#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <ostream>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "commitlm/commit.hpp"
#include "commitlm/sequence.hpp"
#include "commitlm/vocab.hpp"

namespace commitlm {

// ---------------------------------------------------------------------------
// commit graph: words shared between message, file path and code

enum class Component { Message, FilePath, Code };

struct WordSpan {
    std::string word;
    std::size_t begin = 0;  // byte range within the source text
    std::size_t end = 0;
    bool operator==(const WordSpan&) const = default;
};

/// Alphanumeric runs, further split on '_' (a delimiter already) and
/// camelCase boundaries; case-sensitive.
std::vector<WordSpan> split_graph_words(std::string_view text);

struct NodeOccurrence {
    Component component;
    std::size_t begin = 0;  // token index range [begin, end) in the built sequence
    std::size_t end = 0;
    bool operator==(const NodeOccurrence&) const = default;
};

struct CommitGraph {
    // node word -> occurrences across the sequence, in position order
    std::map<std::string, std::vector<NodeOccurrence>> nodes;
    bool empty() const { return nodes.empty(); }
};

/// A word is a node iff it occurs in >=2 of {message, path, code}, has
/// length >=2, is not all digits, and is not a stopword. Occurrences are the
/// contiguous subword token ranges covering each word occurrence.
CommitGraph build_commit_graph(const CommitRecord& record, const SegmentedSequence& built,
                               const Vocabulary& vocab);

class EmptyGraphError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Uniform subset of max(1, floor(n/2)) nodes; deterministic per rng state.
std::vector<std::string> select_mask_nodes(const CommitGraph& graph, std::mt19937_64& rng);

/// Replaces every occurrence of every selected node with one MASK each
/// (covering subwords collapse; segment kept). Target = original + EOS.
std::pair<SegmentedSequence, SegmentedSequence> apply_gtm(const SegmentedSequence& seq,
                                                          const CommitGraph& graph,
                                                          const std::vector<std::string>& selected);

// ---------------------------------------------------------------------------
// text infilling

struct NoiseConfig {
    double corruption_rate = 0.15;
    double mean_span = 3.0;
    std::uint64_t rng_seed = 0;

    void validate() const;  // 0 < rate < 1, mean_span >= 1
};

/// Masks random spans of maskable (byte-derived) tokens with a single MASK
/// per span. Span lengths are zero-truncated Poisson(mean_span); the final
/// span is clipped so covered tokens hit round(rate * maskable) exactly.
/// Spans never cross reserved tokens. Target = original + EOS.
std::pair<SegmentedSequence, SegmentedSequence> apply_text_infilling(const SegmentedSequence& seq,
                                                                     const NoiseConfig& cfg,
                                                                     std::mt19937_64& rng);

/// Positive pair for message/code alignment: ([CLS][MSG]M, [CLS][FILE]F[CODE]C).
std::pair<SegmentedSequence, SegmentedSequence> make_nlpl_pair(const CommitRecord& record,
                                                               const Vocabulary& vocab,
                                                               const BuildOptions& opts = {});

// ---------------------------------------------------------------------------
// step schedule over the six tasks

enum class PretrainTask {
    TextInfilling = 0,
    GTM = 1,
    PL2NL = 2,
    PLNL2PL = 3,
    NLPLAlign = 4,
    SimCSE = 5,
};
constexpr int kNumPretrainTasks = 6;

enum class TaskCategory { Denoise, Generation, Contrastive };

TaskCategory category(PretrainTask task);
const char* task_name(PretrainTask task);
const char* category_name(TaskCategory cat);
PretrainTask task_from_name(std::string_view name);

class TooFewStepsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Deterministic interleaving with exact largest-remainder task counts for
/// shares (.30, .30, .15, .15, .05, .05) and prefix deviation <= 1.
class Schedule {
public:
    static constexpr std::size_t kMinSteps = 20;
    static const std::array<double, kNumPretrainTasks>& shares();

    static Schedule build(std::size_t total_steps);  // throws TooFewStepsError

    PretrainTask task_at(std::size_t step) const { return assignment_.at(step); }
    std::size_t total_steps() const { return assignment_.size(); }
    const std::array<std::size_t, kNumPretrainTasks>& counts() const { return counts_; }

    void write_csv(std::ostream& out) const;  // "step,task" rows

private:
    std::vector<PretrainTask> assignment_;
    std::array<std::size_t, kNumPretrainTasks> counts_{};
};

// ---------------------------------------------------------------------------
// example generation

struct PretrainExample {
    PretrainTask task;
    SegmentedSequence source;
    SegmentedSequence target;  // denoise/generation target; paired view for
                               // NLPLAlign; empty for SimCSE
};

class NoUsableRecordError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Deterministic on-the-fly example generator: the batch for (task, step) is
/// a pure function of (records, vocab, configs, seed). Records that a
/// builder rejects (over-length, no change) are skipped; GTM falls back to
/// text infilling when the commit graph is empty, keeping the GTM tag.
class ExampleFactory {
public:
    ExampleFactory(std::vector<CommitRecord> records, const Vocabulary& vocab, NoiseConfig noise,
                   BuildOptions opts, std::uint64_t seed);

    PretrainExample make(PretrainTask task, std::size_t step, std::size_t index_in_batch) const;
    std::vector<PretrainExample> make_batch(PretrainTask task, std::size_t step,
                                            std::size_t batch_size) const;

    std::size_t record_count() const { return records_.size(); }

private:
    PretrainExample build_for(PretrainTask task, const CommitRecord& record,
                              std::mt19937_64& rng) const;

    std::vector<CommitRecord> records_;
    const Vocabulary& vocab_;
    NoiseConfig noise_;
    BuildOptions opts_;
    std::uint64_t seed_;
};

void write_examples_jsonl(std::ostream& out, const std::vector<PretrainExample>& examples);

}  // namespace commitlm
