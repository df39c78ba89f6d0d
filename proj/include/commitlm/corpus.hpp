#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "commitlm/commit.hpp"

namespace commitlm {

struct FilterConfig {
    int max_tokens = 2000;
    bool english_required = true;
};

enum class RejectReason { NonEnglish, TooLong, EmptyMessage };

std::string_view reject_reason_name(RejectReason reason);

/// Whitespace-token count of message plus every hunk line text.
std::int64_t whitespace_token_count(const CommitRecord& record);

/// nullopt means accept. Rejection is a value, not an error.
std::optional<RejectReason> filter_record(const CommitRecord& record, const FilterConfig& cfg);

/// SHA-256 (64 hex chars) over the normalized message and the changed
/// content only: per file, path plus every Deleted/Added line with its
/// kind marker, trailing whitespace stripped. Context lines are excluded.
std::string dedup_key(const CommitRecord& record);

/// Shard-line schema: {"repo","commit_id","language","message","files":[...]}.
nlohmann::json record_to_json(const CommitRecord& record);
CommitRecord record_from_json(const nlohmann::json& j);

struct IngestReport {
    std::uint64_t total = 0;
    std::uint64_t accepted = 0;
    std::uint64_t duplicates = 0;
    std::map<std::string, std::uint64_t> rejected_by_reason;
    std::map<std::string, std::uint64_t> accepted_by_language;

    std::uint64_t rejected_total() const;
    nlohmann::json to_json() const;
};

/// Per-language single-writer JSONL shards under one directory.
class ShardWriter {
public:
    explicit ShardWriter(std::filesystem::path out_dir);
    void write(const CommitRecord& record);
    void close();

private:
    std::filesystem::path out_dir_;
    std::map<std::string, std::ofstream> streams_;
};

/// Filter -> de-duplicate (first occurrence wins) -> shard per language.
IngestReport ingest(const std::function<std::optional<CommitRecord>()>& next_record,
                    const FilterConfig& cfg, ShardWriter& writer);

/// Reads every record of every .jsonl shard in a directory, sorted by file name.
std::vector<CommitRecord> read_shards(const std::filesystem::path& dir);

struct LanguageStats {
    std::map<std::string, std::uint64_t> counts;
    double alpha = 0.7;
};

struct EmptyCorpusError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Temperature-flattened language distribution: p_i = n_i / sum(n),
/// q_i = p_i^alpha / sum(p_j^alpha). Zero-count languages are excluded;
/// alpha == 1 returns p exactly.
std::map<std::string, double> language_distribution(const LanguageStats& stats);

/// Draws one language from the distribution; deterministic per (seed, draw index).
std::string sample_language(const std::map<std::string, double>& dist, std::mt19937_64& rng);

struct CorpusStats {
    LanguageStats languages;
    // per language: whitespace-token and changed-line count histograms,
    // bucketed by upper bound
    std::map<std::string, std::map<std::string, std::uint64_t>> token_histogram;
    std::map<std::string, std::map<std::string, std::uint64_t>> line_histogram;

    nlohmann::json to_json() const;
};

CorpusStats corpus_stats(const std::filesystem::path& corpus_dir);

}  // namespace commitlm
