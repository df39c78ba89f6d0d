#include "commitlm/corpus.hpp"

#include <cmath>
#include <unordered_set>

#include "commitlm/hash.hpp"
#include "commitlm/log.hpp"

namespace commitlm {

namespace {

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::int64_t count_tokens(std::string_view text) {
    std::int64_t n = 0;
    bool in_token = false;
    for (char c : text) {
        if (is_space(c)) {
            in_token = false;
        } else if (!in_token) {
            ++n;
            in_token = true;
        }
    }
    return n;
}

std::string_view rstrip(std::string_view s) {
    std::size_t e = s.size();
    while (e > 0 && is_space(s[e - 1])) --e;
    return s.substr(0, e);
}

}  // namespace

std::string_view reject_reason_name(RejectReason reason) {
    switch (reason) {
        case RejectReason::NonEnglish: return "non_english";
        case RejectReason::TooLong: return "too_long";
        case RejectReason::EmptyMessage: return "empty_message";
    }
    return "?";
}

std::int64_t whitespace_token_count(const CommitRecord& record) {
    std::int64_t n = count_tokens(record.message);
    for (const FileDiff& f : record.files) {
        for (const Hunk& h : f.hunks) {
            for (const ChangedLine& line : h.lines) {
                n += count_tokens(line.text);
            }
        }
    }
    return n;
}

std::optional<RejectReason> filter_record(const CommitRecord& record, const FilterConfig& cfg) {
    if (extract_first_sentence(record.message).empty()) {
        return RejectReason::EmptyMessage;
    }
    if (cfg.english_required && !is_english(record.message)) {
        return RejectReason::NonEnglish;
    }
    if (whitespace_token_count(record) > cfg.max_tokens) {
        return RejectReason::TooLong;
    }
    return std::nullopt;
}

std::string dedup_key(const CommitRecord& record) {
    std::string material = extract_first_sentence(record.message);
    material += '\n';
    for (const FileDiff& f : record.files) {
        material += f.path;
        material += '\n';
        for (const Hunk& h : f.hunks) {
            for (const ChangedLine& line : h.lines) {
                if (line.kind == LineKind::Context) {
                    continue;
                }
                material += (line.kind == LineKind::Deleted) ? '-' : '+';
                material += rstrip(line.text);
                material += '\n';
            }
        }
    }

    return sha256_hex(material);
}

nlohmann::json record_to_json(const CommitRecord& record) {
    nlohmann::json files = nlohmann::json::array();
    for (const FileDiff& f : record.files) {
        nlohmann::json hunks = nlohmann::json::array();
        for (const Hunk& h : f.hunks) {
            nlohmann::json lines = nlohmann::json::array();
            for (const ChangedLine& line : h.lines) {
                const char* k = line.kind == LineKind::Context ? "c"
                              : line.kind == LineKind::Deleted ? "d"
                                                               : "a";
                lines.push_back({{"k", k}, {"t", line.text}});
            }
            hunks.push_back({{"old_start", h.old_start},
                             {"old_count", h.old_count},
                             {"new_start", h.new_start},
                             {"new_count", h.new_count},
                             {"header", h.header_context},
                             {"lines", std::move(lines)}});
        }
        files.push_back({{"path", f.path}, {"hunks", std::move(hunks)}});
    }
    return {{"repo", record.repo},
            {"commit_id", record.commit_id},
            {"language", record.language},
            {"message", record.message},
            {"files", std::move(files)}};
}

CommitRecord record_from_json(const nlohmann::json& j) {
    CommitRecord record;
    record.repo = j.value("repo", "");
    record.commit_id = j.at("commit_id").get<std::string>();
    record.language = j.value("language", "");
    record.message = j.at("message").get<std::string>();
    for (const auto& jf : j.at("files")) {
        FileDiff f;
        f.path = jf.at("path").get<std::string>();
        for (const auto& jh : jf.at("hunks")) {
            Hunk h;
            h.old_start = jh.at("old_start").get<int>();
            h.old_count = jh.at("old_count").get<int>();
            h.new_start = jh.at("new_start").get<int>();
            h.new_count = jh.at("new_count").get<int>();
            h.header_context = jh.value("header", "");
            for (const auto& jl : jh.at("lines")) {
                const std::string k = jl.at("k").get<std::string>();
                LineKind kind = k == "c" ? LineKind::Context
                              : k == "d" ? LineKind::Deleted
                                         : LineKind::Added;
                h.lines.push_back({kind, jl.at("t").get<std::string>()});
            }
            f.hunks.push_back(std::move(h));
        }
        record.files.push_back(std::move(f));
    }
    return record;
}

std::uint64_t IngestReport::rejected_total() const {
    std::uint64_t n = 0;
    for (const auto& [_, count] : rejected_by_reason) {
        n += count;
    }
    return n;
}

nlohmann::json IngestReport::to_json() const {
    return {{"total", total},
            {"accepted", accepted},
            {"duplicates", duplicates},
            {"rejected_by_reason", rejected_by_reason},
            {"accepted_by_language", accepted_by_language}};
}

ShardWriter::ShardWriter(std::filesystem::path out_dir) : out_dir_(std::move(out_dir)) {
    std::filesystem::create_directories(out_dir_);
}

void ShardWriter::write(const CommitRecord& record) {
    std::string language = record.language.empty() ? "unknown" : record.language;
    auto it = streams_.find(language);
    if (it == streams_.end()) {
        std::filesystem::path p = out_dir_ / (language + ".jsonl");
        auto [ins, _] = streams_.emplace(language, std::ofstream(p));
        if (!ins->second) {
            throw std::runtime_error("cannot open shard for writing: " + p.string());
        }
        it = ins;
    }
    it->second << record_to_json(record).dump() << '\n';
    if (!it->second) {
        throw std::runtime_error("shard write failed for language " + language);
    }
}

void ShardWriter::close() {
    for (auto& [_, stream] : streams_) {
        stream.flush();
        stream.close();
    }
    streams_.clear();
}

IngestReport ingest(const std::function<std::optional<CommitRecord>()>& next_record,
                    const FilterConfig& cfg, ShardWriter& writer) {
    IngestReport report;
    std::unordered_set<std::string> seen;
    while (auto record = next_record()) {
        ++report.total;
        record->message = extract_first_sentence(record->message);
        if (auto reason = filter_record(*record, cfg)) {
            ++report.rejected_by_reason[std::string(reject_reason_name(*reason))];
            continue;
        }
        if (!seen.insert(dedup_key(*record)).second) {
            ++report.duplicates;
            continue;
        }
        writer.write(*record);
        ++report.accepted;
        ++report.accepted_by_language[record->language.empty() ? "unknown" : record->language];
    }
    writer.close();
    return report;
}

std::vector<CommitRecord> read_shards(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> shard_files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() == ".jsonl") {
            shard_files.push_back(entry.path());
        }
    }
    std::sort(shard_files.begin(), shard_files.end());

    std::vector<CommitRecord> records;
    for (const auto& p : shard_files) {
        std::ifstream in(p);
        if (!in) {
            throw std::runtime_error("cannot open shard: " + p.string());
        }
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            records.push_back(record_from_json(nlohmann::json::parse(line)));
        }
    }
    return records;
}

std::map<std::string, double> language_distribution(const LanguageStats& stats) {
    std::uint64_t total = 0;
    for (const auto& [_, n] : stats.counts) {
        total += n;
    }
    if (total == 0) {
        throw EmptyCorpusError("language distribution over an empty corpus");
    }

    std::map<std::string, double> q;
    if (stats.alpha == 1.0) {
        // q == p algebraically; skip the pow/renormalize round trip.
        for (const auto& [lang, n] : stats.counts) {
            if (n > 0) {
                q[lang] = static_cast<double>(n) / static_cast<double>(total);
            }
        }
        return q;
    }

    double denom = 0.0;
    for (const auto& [lang, n] : stats.counts) {
        if (n == 0) continue;
        double p = static_cast<double>(n) / static_cast<double>(total);
        double w = std::pow(p, stats.alpha);
        q[lang] = w;
        denom += w;
    }
    for (auto& [_, w] : q) {
        w /= denom;
    }
    return q;
}

std::string sample_language(const std::map<std::string, double>& dist, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    double u = uniform(rng);
    double cumulative = 0.0;
    const std::string* last = nullptr;
    for (const auto& [lang, p] : dist) {
        cumulative += p;
        last = &lang;
        if (u < cumulative) {
            return lang;
        }
    }
    return last != nullptr ? *last : std::string{};
}

namespace {

std::string histogram_bucket(std::int64_t v) {
    static constexpr std::int64_t bounds[] = {10, 50, 100, 200, 500, 1000, 2000};
    for (std::int64_t b : bounds) {
        if (v <= b) {
            return "<=" + std::to_string(b);
        }
    }
    return ">2000";
}

}  // namespace

nlohmann::json CorpusStats::to_json() const {
    return {{"counts", languages.counts},
            {"token_histogram", token_histogram},
            {"line_histogram", line_histogram}};
}

CorpusStats corpus_stats(const std::filesystem::path& corpus_dir) {
    CorpusStats stats;
    for (const CommitRecord& record : read_shards(corpus_dir)) {
        std::string language = record.language.empty() ? "unknown" : record.language;
        ++stats.languages.counts[language];
        ++stats.token_histogram[language][histogram_bucket(whitespace_token_count(record))];
        std::int64_t lines = 0;
        for (const FileDiff& f : record.files) {
            for (const Hunk& h : f.hunks) {
                lines += static_cast<std::int64_t>(h.lines.size());
            }
        }
        ++stats.line_histogram[language][histogram_bucket(lines)];
    }
    return stats;
}

}  // namespace commitlm
