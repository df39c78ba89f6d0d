#include "commitlm/pretrain.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace commitlm {

namespace {

bool is_word_byte(unsigned char c) {
    return std::isalnum(c) != 0;  // '_' and punctuation delimit
}

bool is_upper_byte(unsigned char c) { return std::isupper(c) != 0; }
bool is_lower_byte(unsigned char c) { return std::islower(c) != 0; }
bool is_digit_byte(unsigned char c) { return std::isdigit(c) != 0; }

// function words (and nothing code-specific) — shared tokens like "fix" or
// "self" remain eligible nodes
const std::unordered_set<std::string>& stopwords() {
    static const std::unordered_set<std::string> kStop = {
        "a",  "an",   "the", "and",  "or",   "not", "of", "in", "on",   "at",   "to", "for",
        "by", "is",   "are", "was",  "be",   "with", "from", "this", "that", "it", "as", "if",
    };
    return kStop;
}

bool node_word_ok(const std::string& word) {
    if (word.size() < 2) {
        return false;
    }
    bool all_digits = std::all_of(word.begin(), word.end(),
                                  [](unsigned char c) { return is_digit_byte(c); });
    if (all_digits) {
        return false;
    }
    return stopwords().count(word) == 0;
}

}  // namespace

std::vector<WordSpan> split_graph_words(std::string_view text) {
    std::vector<WordSpan> out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (!is_word_byte(static_cast<unsigned char>(text[i]))) {
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        while (j < text.size() && is_word_byte(static_cast<unsigned char>(text[j]))) {
            ++j;
        }
        // split the alnum run [i, j) at camelCase boundaries
        std::size_t start = i;
        for (std::size_t k = i + 1; k < j; ++k) {
            unsigned char prev = static_cast<unsigned char>(text[k - 1]);
            unsigned char cur = static_cast<unsigned char>(text[k]);
            bool boundary = false;
            if (is_upper_byte(cur) && (is_lower_byte(prev) || is_digit_byte(prev))) {
                boundary = true;  // fooBar, utf8String
            } else if (is_upper_byte(prev) && is_upper_byte(cur) && k + 1 < j &&
                       is_lower_byte(static_cast<unsigned char>(text[k + 1]))) {
                boundary = true;  // HTTPServer -> HTTP | Server
            }
            if (boundary) {
                out.push_back({std::string(text.substr(start, k - start)), start, k});
                start = k;
            }
        }
        out.push_back({std::string(text.substr(start, j - start)), start, j});
        i = j;
    }
    return out;
}

CommitGraph build_commit_graph(const CommitRecord& record, const SegmentedSequence& built,
                               const Vocabulary& vocab) {
    struct WordInfo {
        std::set<Component> components;
        std::vector<NodeOccurrence> occurrences;
    };
    std::map<std::string, WordInfo> words;

    std::size_t pos = 0;
    for (const MarkedPiece& piece : serialize_commit(record)) {
        if (piece.kind == MarkedPiece::Kind::Special) {
            if (pos >= built.size() || built.ids[pos] != piece.special_id) {
                throw std::invalid_argument("built sequence does not match the record");
            }
            ++pos;
            continue;
        }
        std::vector<int> ends;
        std::vector<int> ids = vocab.encode_with_offsets(piece.text, ends);
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (pos + k >= built.size() || built.ids[pos + k] != ids[k]) {
                throw std::invalid_argument("built sequence does not match the record");
            }
        }
        Component comp = piece.seg == SegmentId::Msg    ? Component::Message
                         : piece.seg == SegmentId::File ? Component::FilePath
                                                        : Component::Code;
        for (const WordSpan& word : split_graph_words(piece.text)) {
            // tokens whose byte ranges intersect [word.begin, word.end)
            std::size_t lo = ids.size();
            std::size_t hi = 0;
            for (std::size_t k = 0; k < ids.size(); ++k) {
                std::size_t tok_begin = k == 0 ? 0 : static_cast<std::size_t>(ends[k - 1]);
                std::size_t tok_end = static_cast<std::size_t>(ends[k]);
                if (tok_begin < word.end && word.begin < tok_end) {
                    lo = std::min(lo, k);
                    hi = std::max(hi, k + 1);
                }
            }
            if (lo >= hi) {
                continue;  // cannot happen for non-empty words; defensive
            }
            WordInfo& info = words[word.word];
            info.components.insert(comp);
            info.occurrences.push_back({comp, pos + lo, pos + hi});
        }
        pos += ids.size();
    }

    CommitGraph graph;
    for (auto& [word, info] : words) {
        if (info.components.size() >= 2 && node_word_ok(word)) {
            graph.nodes.emplace(word, std::move(info.occurrences));
        }
    }
    return graph;
}

std::vector<std::string> select_mask_nodes(const CommitGraph& graph, std::mt19937_64& rng) {
    if (graph.empty()) {
        throw EmptyGraphError("commit graph has no nodes");
    }
    std::vector<std::string> names;
    names.reserve(graph.nodes.size());
    for (const auto& [word, occurrences] : graph.nodes) {
        names.push_back(word);
    }
    const std::size_t n = names.size();
    const std::size_t k = std::max<std::size_t>(1, n / 2);
    for (std::size_t i = n - 1; i > 0; --i) {
        std::size_t j = rng() % (i + 1);
        std::swap(names[i], names[j]);
    }
    names.resize(k);
    std::sort(names.begin(), names.end());
    return names;
}

namespace {

// rewrites seq replacing each [begin,end) range with one MASK
SegmentedSequence collapse_ranges(const SegmentedSequence& seq,
                                  std::vector<std::pair<std::size_t, std::size_t>> ranges) {
    std::sort(ranges.begin(), ranges.end());
    // merge overlapping ranges so shared covering tokens yield one MASK
    std::vector<std::pair<std::size_t, std::size_t>> merged;
    for (const auto& r : ranges) {
        if (!merged.empty() && r.first < merged.back().second) {
            merged.back().second = std::max(merged.back().second, r.second);
        } else {
            merged.push_back(r);
        }
    }
    SegmentedSequence out;
    std::size_t next = 0;
    std::size_t i = 0;
    while (i < seq.size()) {
        if (next < merged.size() && i == merged[next].first) {
            out.push(Vocabulary::kMask, seq.segs[i]);
            i = merged[next].second;
            ++next;
        } else {
            out.push(seq.ids[i], seq.segs[i]);
            ++i;
        }
    }
    out.truncated = seq.truncated;
    return out;
}

SegmentedSequence denoise_target(const SegmentedSequence& seq) {
    SegmentedSequence target = seq;
    target.push(Vocabulary::kEos, seq.size() ? seq.segs.back() : SegmentId::Ctx);
    return target;
}

int zero_truncated_poisson(double mean, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double floor_p = std::exp(-mean);
    while (true) {
        int k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= unit(rng);
        } while (p > floor_p);
        if (k - 1 > 0) {
            return k - 1;
        }
    }
}

}  // namespace

std::pair<SegmentedSequence, SegmentedSequence> apply_gtm(
    const SegmentedSequence& seq, const CommitGraph& graph,
    const std::vector<std::string>& selected) {
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    for (const std::string& name : selected) {
        auto it = graph.nodes.find(name);
        if (it == graph.nodes.end()) {
            throw std::invalid_argument("selected node not in graph: " + name);
        }
        for (const NodeOccurrence& occ : it->second) {
            ranges.emplace_back(occ.begin, occ.end);
        }
    }
    return {collapse_ranges(seq, std::move(ranges)), denoise_target(seq)};
}

void NoiseConfig::validate() const {
    if (!(corruption_rate > 0.0) || !(corruption_rate < 1.0)) {
        throw std::invalid_argument("corruption_rate must lie in (0, 1)");
    }
    if (!(mean_span >= 1.0)) {
        throw std::invalid_argument("mean_span must be >= 1");
    }
}

std::pair<SegmentedSequence, SegmentedSequence> apply_text_infilling(const SegmentedSequence& seq,
                                                                    const NoiseConfig& cfg,
                                                                    std::mt19937_64& rng) {
    cfg.validate();
    std::vector<std::size_t> maskable;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (Vocabulary::is_byte_derived(seq.ids[i])) {
            maskable.push_back(i);
        }
    }
    const std::size_t target_covered =
        static_cast<std::size_t>(std::lround(cfg.corruption_rate * double(maskable.size())));

    std::vector<bool> covered(seq.size(), false);
    std::vector<std::pair<std::size_t, std::size_t>> spans;  // [begin, end)
    std::size_t covered_count = 0;

    auto placeable = [&](std::size_t p, std::size_t len) {
        if (p + len > seq.size()) {
            return false;
        }
        for (std::size_t q = p; q < p + len; ++q) {
            if (!Vocabulary::is_byte_derived(seq.ids[q]) || covered[q]) {
                return false;
            }
        }
        return true;
    };
    auto place = [&](std::size_t p, std::size_t len) {
        for (std::size_t q = p; q < p + len; ++q) {
            covered[q] = true;
        }
        spans.emplace_back(p, p + len);
        covered_count += len;
    };

    while (covered_count < target_covered) {
        std::size_t len = static_cast<std::size_t>(zero_truncated_poisson(cfg.mean_span, rng));
        len = std::min(len, target_covered - covered_count);  // exact final coverage
        bool placed = false;
        for (; len >= 1 && !placed; --len) {
            for (int attempt = 0; attempt < 100; ++attempt) {
                std::size_t p = maskable[rng() % maskable.size()];
                if (placeable(p, len)) {
                    place(p, len);
                    placed = true;
                    break;
                }
            }
            if (!placed && len == 1) {
                // deterministic last resort: any uncovered maskable position
                for (std::size_t p : maskable) {
                    if (!covered[p]) {
                        place(p, 1);
                        placed = true;
                        break;
                    }
                }
            }
            if (placed) {
                break;
            }
        }
    }
    return {collapse_ranges(seq, std::move(spans)), denoise_target(seq)};
}

std::pair<SegmentedSequence, SegmentedSequence> make_nlpl_pair(const CommitRecord& record,
                                                               const Vocabulary& vocab,
                                                               const BuildOptions& opts) {
    SegmentedSequence msg_seq;
    msg_seq.push(Vocabulary::kCls, SegmentId::Msg);
    msg_seq.push(Vocabulary::kMsg, SegmentId::Msg);
    for (int id : vocab.encode(record.message)) {
        msg_seq.push(id, SegmentId::Msg);
    }
    if (msg_seq.size() > opts.max_length) {
        throw TooLongError(msg_seq.size(), opts.max_length);
    }

    std::vector<MarkedPiece> code_pieces;
    for (const MarkedPiece& piece : serialize_commit(record)) {
        if (piece.seg != SegmentId::Msg) {
            code_pieces.push_back(piece);
        }
    }
    SegmentedSequence code_seq = encode_pieces(code_pieces, vocab);
    if (code_seq.size() > opts.max_length) {
        throw TooLongError(code_seq.size(), opts.max_length);
    }
    return {std::move(msg_seq), std::move(code_seq)};
}

// ---------------------------------------------------------------------------
// schedule

TaskCategory category(PretrainTask task) {
    switch (task) {
        case PretrainTask::TextInfilling:
        case PretrainTask::GTM:
            return TaskCategory::Denoise;
        case PretrainTask::PL2NL:
        case PretrainTask::PLNL2PL:
            return TaskCategory::Generation;
        case PretrainTask::NLPLAlign:
        case PretrainTask::SimCSE:
            return TaskCategory::Contrastive;
    }
    throw std::logic_error("unreachable task");
}

const char* task_name(PretrainTask task) {
    switch (task) {
        case PretrainTask::TextInfilling: return "text_infilling";
        case PretrainTask::GTM: return "gtm";
        case PretrainTask::PL2NL: return "pl2nl";
        case PretrainTask::PLNL2PL: return "plnl2pl";
        case PretrainTask::NLPLAlign: return "nlpl_align";
        case PretrainTask::SimCSE: return "simcse";
    }
    return "?";
}

const char* category_name(TaskCategory cat) {
    switch (cat) {
        case TaskCategory::Denoise: return "denoise";
        case TaskCategory::Generation: return "generation";
        case TaskCategory::Contrastive: return "contrastive";
    }
    return "?";
}

PretrainTask task_from_name(std::string_view name) {
    for (int i = 0; i < kNumPretrainTasks; ++i) {
        PretrainTask task = static_cast<PretrainTask>(i);
        if (name == task_name(task)) {
            return task;
        }
    }
    throw std::invalid_argument("unknown pre-training task: " + std::string(name));
}

const std::array<double, kNumPretrainTasks>& Schedule::shares() {
    static const std::array<double, kNumPretrainTasks> kShares = {0.30, 0.30, 0.15,
                                                                  0.15, 0.05, 0.05};
    return kShares;
}

Schedule Schedule::build(std::size_t total_steps) {
    if (total_steps < kMinSteps) {
        throw TooFewStepsError("need at least " + std::to_string(kMinSteps) +
                               " steps so every task runs; got " + std::to_string(total_steps));
    }
    // shares as twentieths keep all arithmetic exact
    constexpr std::array<std::size_t, kNumPretrainTasks> kNum = {6, 6, 3, 3, 1, 1};

    Schedule schedule;
    std::array<std::size_t, kNumPretrainTasks> targets{};
    std::array<std::size_t, kNumPretrainTasks> remainders{};
    std::size_t assigned_total = 0;
    for (int i = 0; i < kNumPretrainTasks; ++i) {
        targets[i] = total_steps * kNum[i] / 20;
        remainders[i] = total_steps * kNum[i] % 20;
        assigned_total += targets[i];
    }
    while (assigned_total < total_steps) {  // largest remainder, ties to lowest index
        int best = -1;
        for (int i = 0; i < kNumPretrainTasks; ++i) {
            if (best == -1 || remainders[i] > remainders[best]) {
                best = i;
            }
        }
        ++targets[best];
        remainders[best] = 0;
        ++assigned_total;
    }

    schedule.counts_ = targets;
    schedule.assignment_.reserve(total_steps);
    std::array<std::size_t, kNumPretrainTasks> assigned{};
    for (std::size_t s = 0; s < total_steps; ++s) {
        // largest deficit of num_i*(s+1)/20 - assigned_i, scaled by 20
        int best = -1;
        long long best_err = 0;
        for (int i = 0; i < kNumPretrainTasks; ++i) {
            if (assigned[i] >= targets[i]) {
                continue;
            }
            long long err = static_cast<long long>(kNum[i] * (s + 1)) -
                            static_cast<long long>(20 * assigned[i]);
            if (best == -1 || err > best_err) {
                best = i;
                best_err = err;
            }
        }
        ++assigned[best];
        schedule.assignment_.push_back(static_cast<PretrainTask>(best));
    }
    return schedule;
}

void Schedule::write_csv(std::ostream& out) const {
    out << "step,task\n";
    for (std::size_t s = 0; s < assignment_.size(); ++s) {
        out << s << ',' << task_name(assignment_[s]) << '\n';
    }
}

// ---------------------------------------------------------------------------
// example factory

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2));
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
}

}  // namespace

ExampleFactory::ExampleFactory(std::vector<CommitRecord> records, const Vocabulary& vocab,
                               NoiseConfig noise, BuildOptions opts, std::uint64_t seed)
    : records_(std::move(records)), vocab_(vocab), noise_(noise), opts_(opts), seed_(seed) {
    if (records_.empty()) {
        throw std::invalid_argument("example factory needs at least one record");
    }
    noise_.validate();
}

PretrainExample ExampleFactory::build_for(PretrainTask task, const CommitRecord& record,
                                          std::mt19937_64& rng) const {
    switch (task) {
        case PretrainTask::TextInfilling: {
            SegmentedSequence seq = build_full_input(record, vocab_, opts_);
            auto [noised, target] = apply_text_infilling(seq, noise_, rng);
            return {task, std::move(noised), std::move(target)};
        }
        case PretrainTask::GTM: {
            SegmentedSequence seq = build_full_input(record, vocab_, opts_);
            CommitGraph graph = build_commit_graph(record, seq, vocab_);
            if (graph.empty()) {
                // no shared tokens: noise the record by span infilling instead
                auto [noised, target] = apply_text_infilling(seq, noise_, rng);
                return {task, std::move(noised), std::move(target)};
            }
            std::vector<std::string> selected = select_mask_nodes(graph, rng);
            auto [noised, target] = apply_gtm(seq, graph, selected);
            return {task, std::move(noised), std::move(target)};
        }
        case PretrainTask::PL2NL: {
            auto [input, target] = build_pl2nl_pair(record, vocab_, opts_);
            return {task, std::move(input), std::move(target)};
        }
        case PretrainTask::PLNL2PL: {
            auto [input, target] = build_plnl2pl_pair(record, vocab_, opts_);
            return {task, std::move(input), std::move(target)};
        }
        case PretrainTask::NLPLAlign: {
            auto [msg_seq, code_seq] = make_nlpl_pair(record, vocab_, opts_);
            return {task, std::move(msg_seq), std::move(code_seq)};
        }
        case PretrainTask::SimCSE: {
            SegmentedSequence seq = build_full_input(record, vocab_, opts_);
            return {task, std::move(seq), {}};
        }
    }
    throw std::logic_error("unreachable task");
}

PretrainExample ExampleFactory::make(PretrainTask task, std::size_t step,
                                     std::size_t index_in_batch) const {
    std::mt19937_64 rng(mix(seed_, mix(step, mix(static_cast<std::uint64_t>(task),
                                                 index_in_batch))));
    const std::size_t attempts = std::max<std::size_t>(100, records_.size());
    for (std::size_t a = 0; a < attempts; ++a) {
        const CommitRecord& record = records_[rng() % records_.size()];
        try {
            return build_for(task, record, rng);
        } catch (const TooLongError&) {
        } catch (const NoChangeError&) {
        }
    }
    throw NoUsableRecordError(std::string("no record usable for task ") + task_name(task));
}

std::vector<PretrainExample> ExampleFactory::make_batch(PretrainTask task, std::size_t step,
                                                        std::size_t batch_size) const {
    std::vector<PretrainExample> batch;
    batch.reserve(batch_size);
    for (std::size_t j = 0; j < batch_size; ++j) {
        batch.push_back(make(task, step, j));
    }
    return batch;
}

void write_examples_jsonl(std::ostream& out, const std::vector<PretrainExample>& examples) {
    for (const PretrainExample& ex : examples) {
        nlohmann::json line;
        line["task"] = task_name(ex.task);
        line["source_ids"] = ex.source.ids;
        nlohmann::json source_segs = nlohmann::json::array();
        for (SegmentId seg : ex.source.segs) {
            source_segs.push_back(static_cast<int>(seg));
        }
        line["source_segs"] = std::move(source_segs);
        line["target_ids"] = ex.target.ids;
        nlohmann::json target_segs = nlohmann::json::array();
        for (SegmentId seg : ex.target.segs) {
            target_segs.push_back(static_cast<int>(seg));
        }
        line["target_segs"] = std::move(target_segs);
        out << line.dump() << '\n';
    }
}

}  // namespace commitlm
