#include "commitlm/trainer.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "commitlm/log.hpp"

namespace commitlm {

ModelState run_pretrain(const std::vector<CommitRecord>& records, const Vocabulary& vocab,
                        const PretrainRunConfig& cfg, std::vector<StepLog>* log) {
    ModelConfig mc = cfg.model;
    mc.vocab_size = vocab.size();
    mc.validate();

    ModelState state = ModelState::init(mc, cfg.seed);
    Schedule schedule = Schedule::build(cfg.total_steps);
    ExampleFactory factory(records, vocab, cfg.noise, cfg.build, cfg.seed);
    std::mt19937_64 dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

    for (std::size_t step = 0; step < cfg.total_steps; ++step) {
        const PretrainTask task = schedule.task_at(step);
        std::vector<PretrainExample> batch = factory.make_batch(task, step, cfg.batch_size);
        const double loss = train_step(batch, state, cfg.hyper, dropout_rng);
        if (log) log->push_back({step, task_name(task), loss});
        if (step % 50 == 0 || step + 1 == cfg.total_steps) {
            log::info("pretrain step " + std::to_string(step) + " task " + task_name(task) +
                      " loss " + std::to_string(loss));
        }
    }
    return state;
}

bool try_build_finetune_example(FinetuneTask task, const LabeledCommit& lc,
                                const Vocabulary& vocab, const BuildOptions& opts,
                                SegmentedSequence& input, SegmentedSequence& target) {
    BuildOptions unlimited;
    unlimited.max_length = static_cast<std::size_t>(-1);
    try {
        std::pair<SegmentedSequence, SegmentedSequence> example;
        switch (task) {
            case FinetuneTask::SecurityPatch:
                example = build_spi_example(lc, vocab, opts);
                break;
            case FinetuneTask::MsgGen:
                example = build_msg_gen_example(lc.record, vocab, unlimited);
                truncate_tail_context(example.first, opts.max_length);
                break;
            case FinetuneTask::PosStmtGen:
                example = build_pos_stmt_example(lc.record, vocab, opts);
                break;
            case FinetuneTask::SnippetGen:
                example = build_snippet_example(lc.record, vocab, unlimited);
                truncate_tail_context(example.first, opts.max_length);
                break;
        }
        if (example.second.size() > opts.max_length) return false;
        input = std::move(example.first);
        target = std::move(example.second);
        return true;
    } catch (const TooLongError&) {
        return false;
    } catch (const NoChangeError&) {
        return false;
    } catch (const NotConsecutiveError&) {
        return false;
    } catch (const NoAddedLinesError&) {
        return false;
    }
}

void run_finetune(const std::vector<LabeledCommit>& data, const Vocabulary& vocab,
                  ModelState& state, const FinetuneRunConfig& cfg, std::vector<StepLog>* log) {
    struct Example {
        SegmentedSequence input;
        SegmentedSequence target;
    };
    std::vector<Example> pool;
    for (const LabeledCommit& lc : data) {
        Example ex;
        if (try_build_finetune_example(cfg.task, lc, vocab, cfg.build, ex.input, ex.target)) {
            pool.push_back(std::move(ex));
        }
    }
    if (pool.empty()) {
        throw NoUsableRecordError("no record yields a usable fine-tuning example");
    }

    std::mt19937_64 dropout_rng(cfg.seed ^ 0x6a09e667f3bcc909ULL);
    const std::string name = finetune_task_name(cfg.task);
    for (std::size_t step = 0; step < cfg.total_steps; ++step) {
        state.zero_grad();
        double loss = 0.0;
        const double scale = 1.0 / static_cast<double>(cfg.batch_size);
        for (std::size_t j = 0; j < cfg.batch_size; ++j) {
            const Example& ex = pool[(step * cfg.batch_size + j) % pool.size()];
            loss += scale * seq2seq_loss_and_grad(ex.input, ex.target, state, scale, &dropout_rng);
        }
        if (!std::isfinite(loss)) {
            throw NonFiniteLossError("non-finite fine-tuning loss at step " +
                                     std::to_string(step));
        }
        adamw_update(state, cfg.hyper);
        if (log) log->push_back({step, name, loss});
        if (step % 50 == 0 || step + 1 == cfg.total_steps) {
            log::info("finetune step " + std::to_string(step) + " loss " + std::to_string(loss));
        }
    }
}

EvalOutcome evaluate_task(FinetuneTask task, const std::vector<LabeledCommit>& data,
                          const Vocabulary& vocab, ModelState& state,
                          const GenerationConfig& gen) {
    EvalOutcome out;
    for (const LabeledCommit& lc : data) {
        SegmentedSequence input;
        SegmentedSequence target;
        if (!try_build_finetune_example(task, lc, vocab, gen.build, input, target)) continue;

        const SegmentId start_seg = target.segs.empty() ? SegmentId::Ctx : target.segs.front();
        const std::size_t max_len =
            task == FinetuneTask::SecurityPatch ? 8 : gen.max_len;
        std::vector<int> ids = gen.beam_width > 1
                                   ? beam_decode(input, state, max_len, gen.beam_width, start_seg)
                                   : greedy_decode(input, state, max_len, start_seg);

        out.languages.push_back(lc.record.language);
        if (task == FinetuneTask::SecurityPatch) {
            out.predictions.push_back(spi_prediction_from_ids(ids, vocab));
            out.golds.push_back(lc.label);
        } else {
            std::span<const int> core(target.ids);
            core = core.subspan(1, core.size() - 2);  // strip [CLS] ... [EOS]
            out.hypotheses.push_back(vocab.decode_readable(ids));
            out.references.push_back(vocab.decode_readable(core));
        }
    }

    if (task == FinetuneTask::SecurityPatch) {
        out.report = classification_report(out.languages, out.predictions, out.golds);
    } else {
        out.report = generation_report(out.languages, out.hypotheses, out.references);
    }
    return out;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw std::runtime_error("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<StepLog>& log) {
    std::ostringstream out;
    out << "step,task,loss\n";
    out.precision(17);
    for (const StepLog& entry : log) {
        out << entry.step << ',' << entry.task << ',' << entry.loss << '\n';
    }
    write_text_atomic(path, out.str());
}

void write_run_manifest(const std::filesystem::path& path, const std::string& command,
                        const std::string& config_json, std::uint64_t seed,
                        const std::vector<std::string>& inputs,
                        const std::vector<std::string>& outputs, double wall_seconds) {
    nlohmann::json j = {
        {"version", kVersion},
        {"command", command},
        {"config", nlohmann::json::parse(config_json)},
        {"seed", seed},
        {"inputs", inputs},
        {"outputs", outputs},
        {"wall_seconds", wall_seconds},
    };
    write_text_atomic(path, j.dump(2) + "\n");
}

}  // namespace commitlm
