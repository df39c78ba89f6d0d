#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "commitlm/commit.hpp"
#include "commitlm/sequence.hpp"
#include "commitlm/vocab.hpp"

namespace commitlm {

enum class FinetuneTask { SecurityPatch, MsgGen, PosStmtGen, SnippetGen };

const char* finetune_task_name(FinetuneTask task);  // "spi", "msg", "pos", "snippet"
FinetuneTask finetune_task_from_name(std::string_view name);

struct LabeledCommit {
    CommitRecord record;
    bool label = false;  // security patch or not
};

class NotConsecutiveError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class NoAddedLinesError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class TooSmallError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class LengthMismatchError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// fine-tuning example builders

/// Input: the full commit sequence (tail context truncated to fit).
/// Target: exactly [CLS] "security" "patch" "True"|"False" [EOS].
std::pair<SegmentedSequence, SegmentedSequence> build_spi_example(const LabeledCommit& lc,
                                                                 const Vocabulary& vocab,
                                                                 const BuildOptions& opts = {});

enum class SpiPrediction { True, False, Unknown };

/// Lenient label scan over the decoded text: the first whitespace-delimited
/// "True"/"False" wins; none found means Unknown (always scored wrong).
SpiPrediction parse_spi_prediction(const std::string& decoded);
SpiPrediction spi_prediction_from_ids(std::span<const int> ids, const Vocabulary& vocab);

/// Same construction as the PL2NL pre-training pair.
std::pair<SegmentedSequence, SegmentedSequence> build_msg_gen_example(
    const CommitRecord& record, const Vocabulary& vocab, const BuildOptions& opts = {});

/// Input: message + path + pre-change code; target: [CLS] + the added lines
/// newline-joined + [EOS]. Only for single-run consecutive modifications.
std::pair<SegmentedSequence, SegmentedSequence> build_pos_stmt_example(
    const CommitRecord& record, const Vocabulary& vocab, const BuildOptions& opts = {});

/// Same construction as the PLNL2PL pre-training pair.
std::pair<SegmentedSequence, SegmentedSequence> build_snippet_example(
    const CommitRecord& record, const Vocabulary& vocab, const BuildOptions& opts = {});

// ---------------------------------------------------------------------------
// dataset split

struct SplitResult {
    std::vector<CommitRecord> train;
    std::vector<CommitRecord> valid;
    std::vector<CommitRecord> test;
};

/// Seeded 75/10/15 split, stratified per language with largest-remainder
/// rounding inside each language. Throws TooSmallError below 20 records.
SplitResult split_dataset(const std::vector<CommitRecord>& records, std::uint64_t seed);

// ---------------------------------------------------------------------------
// metrics

/// Every non-alphanumeric, non-space byte becomes its own token; then
/// whitespace-split.
std::vector<std::string> bleu_tokenize(std::string_view text);

/// Sentence-level BLEU over 1..4-grams in [0, 100]: raw unigram precision,
/// add-one smoothing on numerator and denominator for n >= 2, brevity
/// penalty e^(1 - r/h) when the hypothesis is shorter than the reference.
double smoothed_bleu4(const std::string& hypothesis, const std::string& reference);

/// Equality after trimming and collapsing whitespace runs; case-sensitive.
bool exact_match(const std::string& hypothesis, const std::string& reference);

struct ClassificationReport {
    double acc = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    bool degenerate_precision = false;  // no predicted positives
    bool degenerate_recall = false;     // no gold positives
};

/// Positive class = True; Unknown predictions count as the non-gold class.
ClassificationReport classification_metrics(const std::vector<SpiPrediction>& preds,
                                            const std::vector<bool>& golds);

struct MetricReport {
    // language -> metric name -> value; "overall" is the unweighted mean
    // across languages
    std::map<std::string, std::map<std::string, double>> per_language;
    std::map<std::string, double> overall;

    std::string to_json() const;
};

/// bleu4 (mean sentence score) and em (percent of exact matches) per language.
MetricReport generation_report(const std::vector<std::string>& languages,
                               const std::vector<std::string>& hypotheses,
                               const std::vector<std::string>& references);

MetricReport classification_report(const std::vector<std::string>& languages,
                                   const std::vector<SpiPrediction>& preds,
                                   const std::vector<bool>& golds);

}  // namespace commitlm
