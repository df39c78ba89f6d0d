#include <algorithm>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "commitlm/corpus.hpp"
#include "commitlm/log.hpp"
#include "commitlm/model.hpp"
#include "commitlm/pretrain.hpp"
#include "commitlm/synthetic.hpp"
#include "commitlm/tasks.hpp"
#include "commitlm/trainer.hpp"
#include "commitlm/vocab.hpp"

namespace fs = std::filesystem;
using namespace commitlm;

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

/// Reads JSONL records from a file or a directory of .jsonl shards. Lines
/// are either structured records (key "files", optional "label") or raw
/// git-show dumps ({"repo","language","text"}).
std::vector<LabeledCommit> load_labeled_data(const fs::path& path) {
    std::vector<fs::path> files;
    if (fs::is_directory(path)) {
        for (const auto& entry : fs::directory_iterator(path)) {
            if (entry.path().extension() == ".jsonl") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
    } else {
        files.push_back(path);
    }
    if (files.empty()) throw std::runtime_error("no .jsonl files under " + path.string());

    std::vector<LabeledCommit> out;
    for (const fs::path& file : files) {
        std::ifstream in(file);
        if (!in) throw std::runtime_error("cannot open " + file.string());
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded()) {
                throw std::runtime_error(file.string() + ":" + std::to_string(lineno) +
                                         ": invalid JSON");
            }
            LabeledCommit lc;
            if (j.contains("files")) {
                lc.record = record_from_json(j);
            } else if (j.contains("text")) {
                lc.record = parse_git_show(j["text"].get<std::string>());
                if (j.contains("repo")) lc.record.repo = j["repo"].get<std::string>();
                if (j.contains("language")) lc.record.language = j["language"].get<std::string>();
            } else {
                throw std::runtime_error(file.string() + ":" + std::to_string(lineno) +
                                         ": line has neither \"files\" nor \"text\"");
            }
            lc.label = j.value("label", false);
            out.push_back(std::move(lc));
        }
    }
    return out;
}

std::vector<CommitRecord> strip_labels(std::vector<LabeledCommit> labeled) {
    std::vector<CommitRecord> records;
    records.reserve(labeled.size());
    for (LabeledCommit& lc : labeled) records.push_back(std::move(lc.record));
    return records;
}

/// One string per record with everything the tokenizer will ever see.
std::vector<std::string> vocab_training_texts(const std::vector<CommitRecord>& records) {
    std::vector<std::string> texts;
    texts.reserve(records.size());
    for (const CommitRecord& record : records) {
        std::string text = record.message;
        for (const FileDiff& file : record.files) {
            text += '\n';
            text += file.path;
            for (const Hunk& hunk : file.hunks) {
                for (const ChangedLine& line : hunk.lines) {
                    text += '\n';
                    text += line.text;
                }
            }
        }
        texts.push_back(std::move(text));
    }
    return texts;
}

nlohmann::json load_config_json(const std::string& path) {
    if (path.empty()) return nlohmann::json::object();
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw std::runtime_error("config file is not a JSON object: " + path);
    }
    return j;
}

template <typename T>
void cfg_get(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

// ---------------------------------------------------------------------------

struct IngestParams {
    std::string input;
    std::string out_dir;
    int max_tokens = 2000;
    bool allow_non_english = false;

    void apply(const nlohmann::json& j) {
        cfg_get(j, "input", input);
        cfg_get(j, "out", out_dir);
        cfg_get(j, "max_tokens", max_tokens);
        cfg_get(j, "allow_non_english", allow_non_english);
    }
};

int cmd_ingest(const IngestParams& p, std::uint64_t seed, const std::string& config_json) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<LabeledCommit> data = load_labeled_data(p.input);

    fs::create_directories(p.out_dir);
    FilterConfig cfg;
    cfg.max_tokens = p.max_tokens;
    cfg.english_required = !p.allow_non_english;

    std::size_t next = 0;
    ShardWriter writer(p.out_dir);
    IngestReport report = ingest(
        [&]() -> std::optional<CommitRecord> {
            if (next >= data.size()) return std::nullopt;
            return std::move(data[next++].record);
        },
        cfg, writer);

    write_text_atomic(fs::path(p.out_dir) / "report.json", report.to_json().dump(2) + "\n");
    CorpusStats stats = corpus_stats(p.out_dir);
    write_text_atomic(fs::path(p.out_dir) / "stats.json", stats.to_json().dump(2) + "\n");
    write_run_manifest(fs::path(p.out_dir) / "run_manifest.json", "ingest", config_json, seed,
                       {p.input}, {p.out_dir}, seconds_since(start));

    std::cout << report.to_json().dump(2) << "\n";
    return 0;
}

struct BuildPretrainParams {
    std::string data;
    std::string out_dir;
    int vocab_size = 1024;
    std::size_t steps = 200;
    std::size_t batch = 8;
    double corruption_rate = 0.15;
    double mean_span = 3.0;
    std::size_t max_length = 512;
    std::size_t dump_steps = 1;

    void apply(const nlohmann::json& j) {
        cfg_get(j, "data", data);
        cfg_get(j, "out", out_dir);
        cfg_get(j, "vocab_size", vocab_size);
        cfg_get(j, "steps", steps);
        cfg_get(j, "batch", batch);
        cfg_get(j, "corruption_rate", corruption_rate);
        cfg_get(j, "mean_span", mean_span);
        cfg_get(j, "max_length", max_length);
        cfg_get(j, "dump_steps", dump_steps);
    }
};

int cmd_build_pretrain(const BuildPretrainParams& p, std::uint64_t seed,
                       const std::string& config_json) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<CommitRecord> records = read_shards(p.data);
    if (records.empty()) throw std::runtime_error("no records under " + p.data);

    fs::create_directories(p.out_dir);
    Vocabulary vocab = Vocabulary::train(vocab_training_texts(records), p.vocab_size);
    vocab.save(fs::path(p.out_dir) / "vocab.json");

    Schedule schedule = Schedule::build(p.steps);
    {
        std::ostringstream csv;
        schedule.write_csv(csv);
        write_text_atomic(fs::path(p.out_dir) / "schedule.csv", csv.str());
    }

    NoiseConfig noise;
    noise.corruption_rate = p.corruption_rate;
    noise.mean_span = p.mean_span;
    noise.validate();
    BuildOptions build;
    build.max_length = p.max_length;
    ExampleFactory factory(records, vocab, noise, build, seed);
    {
        std::ostringstream dump;
        for (std::size_t step = 0; step < p.dump_steps && step < p.steps; ++step) {
            std::vector<PretrainExample> batch =
                factory.make_batch(schedule.task_at(step), step, p.batch);
            write_examples_jsonl(dump, batch);
        }
        write_text_atomic(fs::path(p.out_dir) / "examples.jsonl", dump.str());
    }

    write_run_manifest(fs::path(p.out_dir) / "run_manifest.json", "build-pretrain", config_json,
                       seed, {p.data}, {p.out_dir}, seconds_since(start));
    std::cout << "vocab size " << vocab.size() << ", schedule steps " << schedule.total_steps()
              << "\n";
    return 0;
}

struct PretrainParams {
    std::string data;
    std::string out_dir;
    std::string vocab_path;
    int vocab_size = 1024;
    std::size_t steps = 200;
    std::size_t batch = 8;
    double lr = 2e-4;
    double weight_decay = 0.01;
    std::size_t warmup = 0;
    bool warmup_set = false;  // unset means 1% of steps
    double clip_norm = 1.0;
    int enc_layers = 2;
    int dec_layers = 2;
    int dim = 64;
    int heads = 4;
    int ffn_mult = 4;
    int max_positions = 512;
    double dropout = 0.1;
    double tau = 0.05;
    double corruption_rate = 0.15;
    double mean_span = 3.0;
    std::size_t max_length = 512;

    void apply(const nlohmann::json& j) {
        cfg_get(j, "data", data);
        cfg_get(j, "out", out_dir);
        cfg_get(j, "vocab", vocab_path);
        cfg_get(j, "vocab_size", vocab_size);
        cfg_get(j, "steps", steps);
        cfg_get(j, "batch", batch);
        cfg_get(j, "lr", lr);
        cfg_get(j, "weight_decay", weight_decay);
        if (j.contains("warmup")) {
            warmup = j.at("warmup").get<std::size_t>();
            warmup_set = true;
        }
        cfg_get(j, "clip_norm", clip_norm);
        cfg_get(j, "enc_layers", enc_layers);
        cfg_get(j, "dec_layers", dec_layers);
        cfg_get(j, "dim", dim);
        cfg_get(j, "heads", heads);
        cfg_get(j, "ffn_mult", ffn_mult);
        cfg_get(j, "max_positions", max_positions);
        cfg_get(j, "dropout", dropout);
        cfg_get(j, "tau", tau);
        cfg_get(j, "corruption_rate", corruption_rate);
        cfg_get(j, "mean_span", mean_span);
        cfg_get(j, "max_length", max_length);
    }
};

int cmd_pretrain(const PretrainParams& p, std::uint64_t seed, const std::string& config_json) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<CommitRecord> records = read_shards(p.data);
    if (records.empty()) throw std::runtime_error("no records under " + p.data);

    fs::create_directories(p.out_dir);
    Vocabulary vocab = p.vocab_path.empty()
                           ? Vocabulary::train(vocab_training_texts(records), p.vocab_size)
                           : Vocabulary::load(p.vocab_path);
    vocab.save(fs::path(p.out_dir) / "vocab.json");

    PretrainRunConfig cfg;
    cfg.total_steps = p.steps;
    cfg.batch_size = p.batch;
    cfg.seed = seed;
    cfg.model.layers_enc = p.enc_layers;
    cfg.model.layers_dec = p.dec_layers;
    cfg.model.dim = p.dim;
    cfg.model.heads = p.heads;
    cfg.model.ffn_mult = p.ffn_mult;
    cfg.model.max_positions = p.max_positions;
    cfg.model.dropout_rate = p.dropout;
    cfg.model.tau = p.tau;
    cfg.hyper.lr = p.lr;
    cfg.hyper.weight_decay = p.weight_decay;
    cfg.hyper.warmup_steps = p.warmup_set ? p.warmup : p.steps / 100;
    cfg.hyper.clip_norm = p.clip_norm;
    cfg.noise.corruption_rate = p.corruption_rate;
    cfg.noise.mean_span = p.mean_span;
    cfg.noise.validate();
    cfg.build.max_length = p.max_length;

    {
        Schedule schedule = Schedule::build(p.steps);
        std::ostringstream csv;
        schedule.write_csv(csv);
        write_text_atomic(fs::path(p.out_dir) / "schedule.csv", csv.str());
    }

    std::vector<StepLog> log;
    ModelState state = run_pretrain(records, vocab, cfg, &log);
    write_loss_csv(fs::path(p.out_dir) / "loss.csv", log);
    save_checkpoint(state, fs::path(p.out_dir) / "checkpoint");

    write_run_manifest(fs::path(p.out_dir) / "run_manifest.json", "pretrain", config_json, seed,
                       {p.data}, {p.out_dir}, seconds_since(start));
    std::cout << "pretrained " << p.steps << " steps, final loss "
              << (log.empty() ? 0.0 : log.back().loss) << "\n";
    return 0;
}

struct FinetuneParams {
    std::string data;
    std::string checkpoint;
    std::string vocab_path;
    std::string task = "msg";
    std::string out_dir;
    std::size_t steps = 200;
    std::size_t batch = 8;
    double lr = 5e-5;
    double weight_decay = 0.01;
    std::size_t warmup = 0;
    bool warmup_set = false;  // unset means 1% of steps
    std::size_t max_length = 512;

    void apply(const nlohmann::json& j) {
        cfg_get(j, "data", data);
        cfg_get(j, "checkpoint", checkpoint);
        cfg_get(j, "vocab", vocab_path);
        cfg_get(j, "task", task);
        cfg_get(j, "out", out_dir);
        cfg_get(j, "steps", steps);
        cfg_get(j, "batch", batch);
        cfg_get(j, "lr", lr);
        cfg_get(j, "weight_decay", weight_decay);
        if (j.contains("warmup")) {
            warmup = j.at("warmup").get<std::size_t>();
            warmup_set = true;
        }
        cfg_get(j, "max_length", max_length);
    }
};

int cmd_finetune(const FinetuneParams& p, std::uint64_t seed, const std::string& config_json) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<LabeledCommit> data = load_labeled_data(p.data);
    Vocabulary vocab = Vocabulary::load(p.vocab_path);
    ModelState state = load_checkpoint(p.checkpoint);

    fs::create_directories(p.out_dir);
    FinetuneRunConfig cfg;
    cfg.task = finetune_task_from_name(p.task);
    cfg.total_steps = p.steps;
    cfg.batch_size = p.batch;
    cfg.seed = seed;
    cfg.hyper.lr = p.lr;
    cfg.hyper.weight_decay = p.weight_decay;
    cfg.hyper.warmup_steps = p.warmup_set ? p.warmup : p.steps / 100;
    // Inputs longer than the checkpoint's position table can never run.
    cfg.build.max_length =
        std::min(p.max_length, static_cast<std::size_t>(state.config().max_positions));

    std::vector<StepLog> log;
    run_finetune(data, vocab, state, cfg, &log);
    write_loss_csv(fs::path(p.out_dir) / "loss.csv", log);
    save_checkpoint(state, fs::path(p.out_dir) / "checkpoint");
    vocab.save(fs::path(p.out_dir) / "vocab.json");

    write_run_manifest(fs::path(p.out_dir) / "run_manifest.json", "finetune", config_json, seed,
                       {p.data, p.checkpoint}, {p.out_dir}, seconds_since(start));
    std::cout << "finetuned " << p.task << " for " << p.steps << " steps, final loss "
              << (log.empty() ? 0.0 : log.back().loss) << "\n";
    return 0;
}

struct GenerateParams {
    std::string data;
    std::string checkpoint;
    std::string vocab_path;
    std::string task = "msg";
    std::string out_dir;
    std::size_t beam = 1;
    std::size_t max_len = 64;
    std::size_t max_length = 512;

    void apply(const nlohmann::json& j) {
        cfg_get(j, "data", data);
        cfg_get(j, "checkpoint", checkpoint);
        cfg_get(j, "vocab", vocab_path);
        cfg_get(j, "task", task);
        cfg_get(j, "out", out_dir);
        cfg_get(j, "beam", beam);
        cfg_get(j, "max_len", max_len);
        cfg_get(j, "max_length", max_length);
    }
};

EvalOutcome run_generation(const GenerateParams& p) {
    std::vector<LabeledCommit> data = load_labeled_data(p.data);
    Vocabulary vocab = Vocabulary::load(p.vocab_path);
    ModelState state = load_checkpoint(p.checkpoint);

    GenerationConfig gen;
    gen.max_len = p.max_len;
    gen.beam_width = p.beam;
    // Inputs longer than the checkpoint's position table can never run.
    gen.build.max_length =
        std::min(p.max_length, static_cast<std::size_t>(state.config().max_positions));
    return evaluate_task(finetune_task_from_name(p.task), data, vocab, state, gen);
}

std::string predictions_jsonl(const FinetuneTask task, const EvalOutcome& outcome) {
    std::ostringstream out;
    if (task == FinetuneTask::SecurityPatch) {
        for (std::size_t i = 0; i < outcome.predictions.size(); ++i) {
            const char* pred = outcome.predictions[i] == SpiPrediction::True    ? "True"
                               : outcome.predictions[i] == SpiPrediction::False ? "False"
                                                                                : "Unknown";
            out << nlohmann::json{{"language", outcome.languages[i]},
                                  {"prediction", pred},
                                  {"gold", outcome.golds[i]}}
                       .dump()
                << "\n";
        }
    } else {
        for (std::size_t i = 0; i < outcome.hypotheses.size(); ++i) {
            // Undertrained models emit byte tokens that need not be valid
            // UTF-8; replace rather than abort. Scoring sees the raw bytes.
            out << nlohmann::json{{"language", outcome.languages[i]},
                                  {"hypothesis", outcome.hypotheses[i]},
                                  {"reference", outcome.references[i]}}
                       .dump(-1, ' ', false, nlohmann::json::error_handler_t::replace)
                << "\n";
        }
    }
    return out.str();
}

int cmd_generate(const GenerateParams& p, std::uint64_t seed, const std::string& config_json) {
    const auto start = std::chrono::steady_clock::now();
    EvalOutcome outcome = run_generation(p);
    fs::create_directories(p.out_dir);
    write_text_atomic(fs::path(p.out_dir) / "predictions.jsonl",
                      predictions_jsonl(finetune_task_from_name(p.task), outcome));
    write_run_manifest(fs::path(p.out_dir) / "run_manifest.json", "generate", config_json, seed,
                       {p.data, p.checkpoint}, {p.out_dir}, seconds_since(start));
    std::cout << "generated " << outcome.languages.size() << " predictions\n";
    return 0;
}

int cmd_evaluate(const GenerateParams& p, std::uint64_t seed, const std::string& config_json) {
    const auto start = std::chrono::steady_clock::now();
    EvalOutcome outcome = run_generation(p);
    fs::create_directories(p.out_dir);
    write_text_atomic(fs::path(p.out_dir) / "predictions.jsonl",
                      predictions_jsonl(finetune_task_from_name(p.task), outcome));
    write_text_atomic(fs::path(p.out_dir) / "report.json", outcome.report.to_json() + "\n");
    write_run_manifest(fs::path(p.out_dir) / "run_manifest.json", "evaluate", config_json, seed,
                       {p.data, p.checkpoint}, {p.out_dir}, seconds_since(start));
    std::cout << outcome.report.to_json() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"commit-history language model pipeline"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    std::string config_path;
    int threads = 1;
    app.add_option("--seed", seed, "seed for every random choice");
    app.add_option("--config", config_path, "JSON config file; explicit flags win");
    app.add_option("--threads", threads, "worker thread budget (informational)");

    IngestParams ingest_p;
    BuildPretrainParams build_p;
    PretrainParams pretrain_p;
    FinetuneParams finetune_p;
    GenerateParams generate_p;
    GenerateParams evaluate_p;

    // Config file values are applied to the bound variables before parsing,
    // so any flag given explicitly overrides its config entry.
    try {
        for (int i = 1; i + 1 < argc; ++i) {
            if (std::string(argv[i]) == "--config") config_path = argv[i + 1];
        }
        nlohmann::json cfg = load_config_json(config_path);
        ingest_p.apply(cfg);
        build_p.apply(cfg);
        pretrain_p.apply(cfg);
        finetune_p.apply(cfg);
        generate_p.apply(cfg);
        evaluate_p.apply(cfg);
        cfg_get(cfg, "seed", seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    const std::string config_json =
        config_path.empty() ? "{}" : load_config_json(config_path).dump();

    CLI::App* ingest_cmd = app.add_subcommand("ingest", "filter, dedup and shard raw commits");
    ingest_cmd->add_option("--input", ingest_p.input, "JSONL file or directory")->required();
    ingest_cmd->add_option("--out", ingest_p.out_dir, "output shard directory")->required();
    ingest_cmd->add_option("--max-tokens", ingest_p.max_tokens, "whitespace-token cap");
    ingest_cmd->add_flag("--allow-non-english", ingest_p.allow_non_english,
                         "skip the English filter");

    CLI::App* build_cmd =
        app.add_subcommand("build-pretrain", "train the tokenizer and stage the task schedule");
    build_cmd->add_option("--data", build_p.data, "shard directory")->required();
    build_cmd->add_option("--out", build_p.out_dir, "output directory")->required();
    build_cmd->add_option("--vocab-size", build_p.vocab_size);
    build_cmd->add_option("--steps", build_p.steps);
    build_cmd->add_option("--batch", build_p.batch);
    build_cmd->add_option("--corruption-rate", build_p.corruption_rate);
    build_cmd->add_option("--mean-span", build_p.mean_span);
    build_cmd->add_option("--max-length", build_p.max_length);
    build_cmd->add_option("--dump-steps", build_p.dump_steps, "batches to write to examples.jsonl");

    CLI::App* pretrain_cmd = app.add_subcommand("pretrain", "run the mixed-objective training");
    pretrain_cmd->add_option("--data", pretrain_p.data, "shard directory")->required();
    pretrain_cmd->add_option("--out", pretrain_p.out_dir, "run directory")->required();
    pretrain_cmd->add_option("--vocab", pretrain_p.vocab_path, "existing vocab.json");
    pretrain_cmd->add_option("--vocab-size", pretrain_p.vocab_size);
    pretrain_cmd->add_option("--steps", pretrain_p.steps);
    pretrain_cmd->add_option("--batch", pretrain_p.batch);
    pretrain_cmd->add_option("--lr", pretrain_p.lr);
    pretrain_cmd->add_option("--weight-decay", pretrain_p.weight_decay);
    pretrain_cmd->add_option("--warmup", pretrain_p.warmup);
    pretrain_cmd->add_option("--clip-norm", pretrain_p.clip_norm);
    pretrain_cmd->add_option("--enc-layers", pretrain_p.enc_layers);
    pretrain_cmd->add_option("--dec-layers", pretrain_p.dec_layers);
    pretrain_cmd->add_option("--dim", pretrain_p.dim);
    pretrain_cmd->add_option("--heads", pretrain_p.heads);
    pretrain_cmd->add_option("--ffn-mult", pretrain_p.ffn_mult);
    pretrain_cmd->add_option("--max-positions", pretrain_p.max_positions);
    pretrain_cmd->add_option("--dropout", pretrain_p.dropout);
    pretrain_cmd->add_option("--tau", pretrain_p.tau);
    pretrain_cmd->add_option("--corruption-rate", pretrain_p.corruption_rate);
    pretrain_cmd->add_option("--mean-span", pretrain_p.mean_span);
    pretrain_cmd->add_option("--max-length", pretrain_p.max_length);

    CLI::App* finetune_cmd = app.add_subcommand("finetune", "adapt a checkpoint to one task");
    finetune_cmd->add_option("--data", finetune_p.data, "labeled JSONL or shard directory")
        ->required();
    finetune_cmd->add_option("--checkpoint", finetune_p.checkpoint, "initial checkpoint")
        ->required();
    finetune_cmd->add_option("--vocab", finetune_p.vocab_path, "vocab.json")->required();
    finetune_cmd->add_option("--task", finetune_p.task, "spi|msg|pos|snippet");
    finetune_cmd->add_option("--out", finetune_p.out_dir, "run directory")->required();
    finetune_cmd->add_option("--steps", finetune_p.steps);
    finetune_cmd->add_option("--batch", finetune_p.batch);
    finetune_cmd->add_option("--lr", finetune_p.lr);
    finetune_cmd->add_option("--weight-decay", finetune_p.weight_decay);
    finetune_cmd->add_option("--warmup", finetune_p.warmup);
    finetune_cmd->add_option("--max-length", finetune_p.max_length);

    auto add_generate_options = [](CLI::App* cmd, GenerateParams& p) {
        cmd->add_option("--data", p.data, "labeled JSONL or shard directory")->required();
        cmd->add_option("--checkpoint", p.checkpoint, "model checkpoint")->required();
        cmd->add_option("--vocab", p.vocab_path, "vocab.json")->required();
        cmd->add_option("--task", p.task, "spi|msg|pos|snippet");
        cmd->add_option("--out", p.out_dir, "output directory")->required();
        cmd->add_option("--beam", p.beam, "beam width; 1 = greedy");
        cmd->add_option("--max-len", p.max_len, "generation budget in tokens");
        cmd->add_option("--max-length", p.max_length, "input length cap");
    };
    CLI::App* generate_cmd = app.add_subcommand("generate", "decode predictions for a task");
    add_generate_options(generate_cmd, generate_p);
    CLI::App* evaluate_cmd = app.add_subcommand("evaluate", "decode and score a task");
    add_generate_options(evaluate_cmd, evaluate_p);

    // lets --seed/--config/--threads appear after the subcommand name
    for (CLI::App* sub : app.get_subcommands([](const CLI::App*) { return true; })) {
        sub->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    (void)threads;
    if (pretrain_cmd->count("--warmup") > 0) pretrain_p.warmup_set = true;
    if (finetune_cmd->count("--warmup") > 0) finetune_p.warmup_set = true;

    try {
        if (ingest_cmd->parsed()) return cmd_ingest(ingest_p, seed, config_json);
        if (build_cmd->parsed()) return cmd_build_pretrain(build_p, seed, config_json);
        if (pretrain_cmd->parsed()) return cmd_pretrain(pretrain_p, seed, config_json);
        if (finetune_cmd->parsed()) return cmd_finetune(finetune_p, seed, config_json);
        if (generate_cmd->parsed()) return cmd_generate(generate_p, seed, config_json);
        if (evaluate_cmd->parsed()) return cmd_evaluate(evaluate_p, seed, config_json);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
