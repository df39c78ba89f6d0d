#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "commitlm/commit.hpp"
#include "commitlm/model.hpp"
#include "commitlm/pretrain.hpp"
#include "commitlm/tasks.hpp"
#include "commitlm/vocab.hpp"

namespace commitlm {

inline constexpr const char* kVersion = "0.1.0";

struct StepLog {
    std::size_t step = 0;
    std::string task;
    double loss = 0.0;
};

struct PretrainRunConfig {
    std::size_t total_steps = 200;
    std::size_t batch_size = 8;
    std::uint64_t seed = 0;
    ModelConfig model;  // vocab_size is overwritten from the vocabulary
    TrainHyper hyper;
    NoiseConfig noise;
    BuildOptions build;
};

/// Runs the mixed-task schedule from a fresh model; bitwise deterministic
/// for fixed inputs and seed.
ModelState run_pretrain(const std::vector<CommitRecord>& records, const Vocabulary& vocab,
                        const PretrainRunConfig& cfg, std::vector<StepLog>* log = nullptr);

struct FinetuneRunConfig {
    FinetuneTask task = FinetuneTask::MsgGen;
    std::size_t total_steps = 200;
    std::size_t batch_size = 8;
    std::uint64_t seed = 0;
    TrainHyper hyper;
    BuildOptions build;
};

/// Builds the (input, target) example for one record, truncating over-length
/// inputs. Returns false when the record cannot yield an example for the
/// task (no change, no added lines, untruncatable, over-length target).
bool try_build_finetune_example(FinetuneTask task, const LabeledCommit& lc,
                                const Vocabulary& vocab, const BuildOptions& opts,
                                SegmentedSequence& input, SegmentedSequence& target);

/// Seq2seq fine-tuning over the usable examples, visited round-robin.
void run_finetune(const std::vector<LabeledCommit>& data, const Vocabulary& vocab,
                  ModelState& state, const FinetuneRunConfig& cfg,
                  std::vector<StepLog>* log = nullptr);

struct GenerationConfig {
    std::size_t max_len = 64;
    std::size_t beam_width = 1;  // 1 = greedy
    BuildOptions build;
};

struct EvalOutcome {
    MetricReport report;
    std::vector<std::string> languages;
    std::vector<std::string> hypotheses;  // decoded text (empty for SPI)
    std::vector<std::string> references;
    std::vector<SpiPrediction> predictions;  // SPI only
    std::vector<bool> golds;                 // SPI only
};

/// Decodes every usable example and scores it: classification metrics for
/// SPI, smoothed BLEU-4 + exact match for the generation tasks.
EvalOutcome evaluate_task(FinetuneTask task, const std::vector<LabeledCommit>& data,
                          const Vocabulary& vocab, ModelState& state,
                          const GenerationConfig& gen);

// ---------------------------------------------------------------------------
// artifact writers (atomic: temp file + rename)

void write_text_atomic(const std::filesystem::path& path, const std::string& content);
void write_loss_csv(const std::filesystem::path& path, const std::vector<StepLog>& log);

/// Records one CLI invocation. Wall-clock time lives only here, never in the
/// artifacts that reruns are compared on.
void write_run_manifest(const std::filesystem::path& path, const std::string& command,
                        const std::string& config_json, std::uint64_t seed,
                        const std::vector<std::string>& inputs,
                        const std::vector<std::string>& outputs, double wall_seconds);

}  // namespace commitlm
