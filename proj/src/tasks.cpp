#include "commitlm/tasks.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

namespace commitlm {

const char* finetune_task_name(FinetuneTask task) {
    switch (task) {
        case FinetuneTask::SecurityPatch: return "spi";
        case FinetuneTask::MsgGen: return "msg";
        case FinetuneTask::PosStmtGen: return "pos";
        case FinetuneTask::SnippetGen: return "snippet";
    }
    throw std::invalid_argument("bad finetune task");
}

FinetuneTask finetune_task_from_name(std::string_view name) {
    if (name == "spi") return FinetuneTask::SecurityPatch;
    if (name == "msg") return FinetuneTask::MsgGen;
    if (name == "pos") return FinetuneTask::PosStmtGen;
    if (name == "snippet") return FinetuneTask::SnippetGen;
    throw std::invalid_argument("unknown finetune task: " + std::string(name));
}

std::pair<SegmentedSequence, SegmentedSequence> build_spi_example(const LabeledCommit& lc,
                                                                 const Vocabulary& vocab,
                                                                 const BuildOptions& opts) {
    BuildOptions unlimited;
    unlimited.max_length = static_cast<std::size_t>(-1);
    SegmentedSequence input = build_full_input(lc.record, vocab, unlimited);
    truncate_tail_context(input, opts.max_length);

    SegmentedSequence target;
    target.push(Vocabulary::kCls, SegmentId::Msg);
    target.push(Vocabulary::kSecurity, SegmentId::Msg);
    target.push(Vocabulary::kPatch, SegmentId::Msg);
    target.push(lc.label ? Vocabulary::kTrue : Vocabulary::kFalse, SegmentId::Msg);
    target.push(Vocabulary::kEos, SegmentId::Msg);
    return {std::move(input), std::move(target)};
}

SpiPrediction parse_spi_prediction(const std::string& decoded) {
    std::istringstream in(decoded);
    std::string word;
    while (in >> word) {
        if (word == "True") return SpiPrediction::True;
        if (word == "False") return SpiPrediction::False;
    }
    return SpiPrediction::Unknown;
}

SpiPrediction spi_prediction_from_ids(std::span<const int> ids, const Vocabulary& vocab) {
    return parse_spi_prediction(vocab.decode_readable(ids));
}

std::pair<SegmentedSequence, SegmentedSequence> build_msg_gen_example(const CommitRecord& record,
                                                                     const Vocabulary& vocab,
                                                                     const BuildOptions& opts) {
    return build_pl2nl_pair(record, vocab, opts);
}

std::pair<SegmentedSequence, SegmentedSequence> build_pos_stmt_example(const CommitRecord& record,
                                                                      const Vocabulary& vocab,
                                                                      const BuildOptions& opts) {
    if (!is_consecutive_modification(record)) {
        throw NotConsecutiveError("commit is not a consecutive modification");
    }
    std::vector<std::string> added;
    for (const FileDiff& file : record.files) {
        for (const Hunk& hunk : file.hunks) {
            for (const ChangedLine& line : hunk.lines) {
                if (line.kind == LineKind::Added) added.push_back(line.text);
            }
        }
    }
    if (added.empty()) throw NoAddedLinesError("commit adds no lines");

    // Same input as the snippet task: everything except the added lines.
    std::vector<MarkedPiece> pieces = serialize_commit(record);
    std::vector<MarkedPiece> kept;
    for (const MarkedPiece& piece : pieces) {
        if (piece.seg != SegmentId::Pos) kept.push_back(piece);
    }
    SegmentedSequence input = encode_pieces(kept, vocab);
    truncate_tail_context(input, opts.max_length);

    std::string joined;
    for (std::size_t i = 0; i < added.size(); ++i) {
        if (i > 0) joined += '\n';
        joined += added[i];
    }
    SegmentedSequence target;
    target.push(Vocabulary::kCls, SegmentId::Pos);
    for (int id : vocab.encode(joined)) target.push(id, SegmentId::Pos);
    target.push(Vocabulary::kEos, SegmentId::Pos);
    if (target.size() > opts.max_length) {
        throw TooLongError(target.size(), opts.max_length);
    }
    return {std::move(input), std::move(target)};
}

std::pair<SegmentedSequence, SegmentedSequence> build_snippet_example(const CommitRecord& record,
                                                                     const Vocabulary& vocab,
                                                                     const BuildOptions& opts) {
    return build_plnl2pl_pair(record, vocab, opts);
}

SplitResult split_dataset(const std::vector<CommitRecord>& records, std::uint64_t seed) {
    if (records.size() < 20) {
        throw TooSmallError("need at least 20 records to split, got " +
                            std::to_string(records.size()));
    }
    std::map<std::string, std::vector<const CommitRecord*>> by_language;
    for (const CommitRecord& record : records) {
        by_language[record.language].push_back(&record);
    }

    std::mt19937_64 rng(seed);
    SplitResult result;
    const int shares[3] = {75, 10, 15};
    for (auto& [language, group] : by_language) {
        std::shuffle(group.begin(), group.end(), rng);
        const std::size_t n = group.size();
        std::size_t counts[3];
        int rems[3];
        std::size_t assigned = 0;
        for (int i = 0; i < 3; ++i) {
            counts[i] = n * static_cast<std::size_t>(shares[i]) / 100;
            rems[i] = static_cast<int>(n * static_cast<std::size_t>(shares[i]) % 100);
            assigned += counts[i];
        }
        std::size_t leftover = n - assigned;
        int order[3] = {0, 1, 2};
        std::stable_sort(order, order + 3, [&](int a, int b) { return rems[a] > rems[b]; });
        for (std::size_t i = 0; i < leftover; ++i) counts[order[i % 3]] += 1;

        std::size_t pos = 0;
        for (std::size_t i = 0; i < counts[0]; ++i) result.train.push_back(*group[pos++]);
        for (std::size_t i = 0; i < counts[1]; ++i) result.valid.push_back(*group[pos++]);
        for (std::size_t i = 0; i < counts[2]; ++i) result.test.push_back(*group[pos++]);
    }
    return result;
}

std::vector<std::string> bleu_tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            tokens.push_back(cur);
            cur.clear();
        }
    };
    for (char c : text) {
        unsigned char uc = static_cast<unsigned char>(c);
        if (std::isspace(uc)) {
            flush();
        } else if (std::isalnum(uc)) {
            cur.push_back(c);
        } else {
            flush();
            tokens.push_back(std::string(1, c));
        }
    }
    flush();
    return tokens;
}

namespace {

std::map<std::vector<std::string>, std::size_t> ngram_counts(const std::vector<std::string>& toks,
                                                             std::size_t n) {
    std::map<std::vector<std::string>, std::size_t> counts;
    if (toks.size() < n) return counts;
    for (std::size_t i = 0; i + n <= toks.size(); ++i) {
        counts[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                        toks.begin() + static_cast<std::ptrdiff_t>(i + n))] += 1;
    }
    return counts;
}

}  // namespace

double smoothed_bleu4(const std::string& hypothesis, const std::string& reference) {
    const std::vector<std::string> hyp = bleu_tokenize(hypothesis);
    const std::vector<std::string> ref = bleu_tokenize(reference);
    if (hyp.empty()) return 0.0;

    double log_sum = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
        auto hyp_counts = ngram_counts(hyp, n);
        auto ref_counts = ngram_counts(ref, n);
        std::size_t matched = 0;
        std::size_t total = 0;
        for (const auto& [gram, count] : hyp_counts) {
            total += count;
            auto it = ref_counts.find(gram);
            if (it != ref_counts.end()) matched += std::min(count, it->second);
        }
        double p;
        if (n == 1) {
            if (matched == 0) return 0.0;
            p = static_cast<double>(matched) / static_cast<double>(total);
        } else {
            p = (static_cast<double>(matched) + 1.0) / (static_cast<double>(total) + 1.0);
        }
        log_sum += std::log(p);
    }
    double bp = 1.0;
    if (hyp.size() < ref.size()) {
        bp = std::exp(1.0 - static_cast<double>(ref.size()) / static_cast<double>(hyp.size()));
    }
    return 100.0 * bp * std::exp(log_sum / 4.0);
}

namespace {

std::string normalize_ws(const std::string& text) {
    std::string out;
    bool in_space = false;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            in_space = true;
        } else {
            if (in_space && !out.empty()) out.push_back(' ');
            in_space = false;
            out.push_back(c);
        }
    }
    return out;
}

}  // namespace

bool exact_match(const std::string& hypothesis, const std::string& reference) {
    return normalize_ws(hypothesis) == normalize_ws(reference);
}

ClassificationReport classification_metrics(const std::vector<SpiPrediction>& preds,
                                            const std::vector<bool>& golds) {
    if (preds.size() != golds.size()) {
        throw LengthMismatchError("prediction/gold size mismatch");
    }
    ClassificationReport r;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const bool gold = golds[i];
        bool pred;
        switch (preds[i]) {
            case SpiPrediction::True: pred = true; break;
            case SpiPrediction::False: pred = false; break;
            case SpiPrediction::Unknown: pred = !gold; break;  // always wrong
        }
        if (pred && gold) r.tp += 1;
        else if (pred && !gold) r.fp += 1;
        else if (!pred && gold) r.fn += 1;
        else r.tn += 1;
    }
    const std::size_t n = preds.size();
    r.acc = n == 0 ? 0.0 : static_cast<double>(r.tp + r.tn) / static_cast<double>(n);
    if (r.tp + r.fp == 0) {
        r.degenerate_precision = true;
        r.precision = 0.0;
    } else {
        r.precision = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp);
    }
    if (r.tp + r.fn == 0) {
        r.degenerate_recall = true;
        r.recall = 0.0;
    } else {
        r.recall = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn);
    }
    r.f1 = (r.precision + r.recall) > 0.0
               ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
               : 0.0;
    return r;
}

std::string MetricReport::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [language, metrics] : per_language) {
        for (const auto& [name, value] : metrics) j[language][name] = value;
    }
    for (const auto& [name, value] : overall) j["overall"][name] = value;
    return j.dump(2);
}

namespace {

MetricReport finish_report(std::map<std::string, std::map<std::string, double>> per_language) {
    MetricReport report;
    report.per_language = std::move(per_language);
    std::map<std::string, double> sums;
    for (const auto& [language, metrics] : report.per_language) {
        for (const auto& [name, value] : metrics) sums[name] += value;
    }
    const double k = static_cast<double>(report.per_language.size());
    for (const auto& [name, sum] : sums) report.overall[name] = k > 0 ? sum / k : 0.0;
    return report;
}

}  // namespace

MetricReport generation_report(const std::vector<std::string>& languages,
                               const std::vector<std::string>& hypotheses,
                               const std::vector<std::string>& references) {
    if (languages.size() != hypotheses.size() || hypotheses.size() != references.size()) {
        throw LengthMismatchError("generation report input size mismatch");
    }
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < languages.size(); ++i) groups[languages[i]].push_back(i);

    std::map<std::string, std::map<std::string, double>> per_language;
    for (const auto& [language, idx] : groups) {
        double bleu_sum = 0.0;
        std::size_t matches = 0;
        for (std::size_t i : idx) {
            bleu_sum += smoothed_bleu4(hypotheses[i], references[i]);
            if (exact_match(hypotheses[i], references[i])) matches += 1;
        }
        const double n = static_cast<double>(idx.size());
        per_language[language]["bleu4"] = bleu_sum / n;
        per_language[language]["em"] = 100.0 * static_cast<double>(matches) / n;
    }
    return finish_report(std::move(per_language));
}

MetricReport classification_report(const std::vector<std::string>& languages,
                                   const std::vector<SpiPrediction>& preds,
                                   const std::vector<bool>& golds) {
    if (languages.size() != preds.size() || preds.size() != golds.size()) {
        throw LengthMismatchError("classification report input size mismatch");
    }
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < languages.size(); ++i) groups[languages[i]].push_back(i);

    std::map<std::string, std::map<std::string, double>> per_language;
    for (const auto& [language, idx] : groups) {
        std::vector<SpiPrediction> p;
        std::vector<bool> g;
        for (std::size_t i : idx) {
            p.push_back(preds[i]);
            g.push_back(golds[i]);
        }
        ClassificationReport r = classification_metrics(p, g);
        per_language[language]["acc"] = r.acc;
        per_language[language]["precision"] = r.precision;
        per_language[language]["recall"] = r.recall;
        per_language[language]["f1"] = r.f1;
    }
    return finish_report(std::move(per_language));
}

}  // namespace commitlm
