#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "commitlm/pretrain.hpp"
#include "commitlm/sequence.hpp"

namespace commitlm {

class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class ConfigError : public ModelError {
public:
    using ModelError::ModelError;
};
class PositionOverflowError : public ModelError {
public:
    using ModelError::ModelError;
};
class ZeroVectorError : public ModelError {
public:
    using ModelError::ModelError;
};
class DropoutDisabledError : public ModelError {
public:
    using ModelError::ModelError;
};
class NonFiniteLossError : public ModelError {
public:
    using ModelError::ModelError;
};
class VersionMismatchError : public ModelError {
public:
    using ModelError::ModelError;
};
class CorruptFileError : public ModelError {
public:
    using ModelError::ModelError;
};

struct ModelConfig {
    int layers_enc = 2;
    int layers_dec = 2;
    int dim = 64;
    int heads = 4;
    int ffn_mult = 4;
    int vocab_size = 0;
    int max_positions = 512;
    double dropout_rate = 0.1;
    double tau = 0.05;

    int ffn_dim() const { return dim * ffn_mult; }
    int head_dim() const { return dim / heads; }
    void validate() const;  // throws ConfigError

    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
    bool operator==(const ModelConfig&) const = default;
};

/// Named parameter with its AdamW moments. Values are stored f32; all
/// computation loads them into f64 so training and the finite-difference
/// oracles see the same smooth function of the stored values.
struct Tensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<float> w;
    std::vector<double> g;  // gradient accumulator, zeroed between steps
    std::vector<float> m;   // first moment
    std::vector<float> v;   // second moment

    std::size_t size() const { return w.size(); }
};

class ModelState {
public:
    static ModelState init(const ModelConfig& cfg, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    std::uint64_t step() const { return step_; }
    void set_step(std::uint64_t s) { step_ = s; }

    Tensor& tensor(const std::string& name);
    const Tensor& tensor(const std::string& name) const;
    std::vector<Tensor>& tensors() { return tensors_; }
    const std::vector<Tensor>& tensors() const { return tensors_; }

    void zero_grad();

private:
    Tensor& add_tensor(const std::string& name, std::vector<std::size_t> shape);

    ModelConfig cfg_;
    std::uint64_t step_ = 0;
    std::vector<Tensor> tensors_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Row-major double matrix used for activations and logits.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> d;

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), d(r * c, 0.0) {}
    double& at(std::size_t r, std::size_t c) { return d[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return d[r * cols + c]; }
};

// ---------------------------------------------------------------------------
// forward passes (caches retained for manual backprop)

struct LinearCache {
    Mat in;
};
struct LayerNormCache {
    Mat in;
    std::vector<double> mean;
    std::vector<double> rstd;
};
struct DropoutCache {
    bool active = false;
    std::vector<double> mult;  // 0 or 1/(1-p) per element
};
struct AttnCache {
    LinearCache lq, lk, lv, lo;
    Mat q, k, v;              // rows x dim, heads side by side
    std::vector<Mat> probs;   // per head, Lq x Lk
    Mat concat;
    bool causal = false;
};
struct FfnCache {
    LinearCache l1, l2;
    Mat pre;  // pre-activation
};
struct EncLayerCache {
    LayerNormCache ln1;
    AttnCache attn;
    DropoutCache drop1;
    LayerNormCache ln2;
    FfnCache ffn;
    DropoutCache drop2;
};
struct EncoderPass {
    SegmentedSequence src;
    DropoutCache emb_drop;
    std::vector<EncLayerCache> layers;
    LayerNormCache final_ln;
    Mat out;  // L x dim
};
struct DecLayerCache {
    LayerNormCache ln1;
    AttnCache self_attn;
    DropoutCache drop1;
    LayerNormCache ln2;
    AttnCache cross_attn;
    DropoutCache drop2;
    LayerNormCache ln3;
    FfnCache ffn;
    DropoutCache drop3;
};
struct DecoderPass {
    SegmentedSequence prefix;
    DropoutCache emb_drop;
    std::vector<DecLayerCache> layers;
    LayerNormCache final_ln;
    Mat out;  // T x dim
};

/// Token + segment + position embedding sum. Throws PositionOverflowError
/// when the sequence exceeds max_positions.
Mat embed(const SegmentedSequence& seq, const ModelState& state);

/// rng == nullptr means eval mode (dropout off regardless of `train`).
EncoderPass encode(const SegmentedSequence& src, ModelState& state, bool train = false,
                   std::mt19937_64* rng = nullptr);
DecoderPass decode_states(const SegmentedSequence& prefix, const EncoderPass& enc,
                          ModelState& state, bool train = false, std::mt19937_64* rng = nullptr);
Mat output_logits(const Mat& dec_out, const ModelState& state);

/// Logits for every prefix position; |prefix| x vocab_size.
Mat forward_seq2seq(const SegmentedSequence& source, const SegmentedSequence& target_prefix,
                    ModelState& state, bool train_mode = false, std::mt19937_64* rng = nullptr);

// ---------------------------------------------------------------------------
// losses (forward-only and gradient-accumulating variants)

/// Mean over rows of -log softmax(row)[gold]; exact in f64.
double cross_entropy_from_logits(const Mat& logits, std::span<const int> golds);

/// Teacher-forced mean token cross-entropy; eval mode.
double loss_seq2seq(const SegmentedSequence& source, const SegmentedSequence& target,
                    ModelState& state);

/// Encoder output at the [CLS] position, eval mode.
std::vector<double> pooled_representation(const SegmentedSequence& source, ModelState& state);

/// InfoNCE over cosine similarities: mean_i of
/// -log( exp(cos(h_i, p_i)/tau) / sum_j exp(cos(h_i, p_j)/tau) ),
/// denominator over the positive views including j = i.
double contrastive_loss(const std::vector<std::vector<double>>& reps,
                        const std::vector<std::vector<double>>& pos_reps, double tau);

/// Two train-mode encodings of the same source under independent dropout.
std::pair<std::vector<double>, std::vector<double>> simcse_step(const SegmentedSequence& source,
                                                                ModelState& state,
                                                                std::mt19937_64& rng);

/// Gradient-accumulating losses: add d(loss)/d(theta) * scale into the
/// tensors' .g fields and return the loss. rng == nullptr -> eval mode.
double seq2seq_loss_and_grad(const SegmentedSequence& source, const SegmentedSequence& target,
                             ModelState& state, double scale = 1.0,
                             std::mt19937_64* rng = nullptr);
double nlpl_loss_and_grad(const std::vector<SegmentedSequence>& sources,
                          const std::vector<SegmentedSequence>& positives, ModelState& state,
                          double scale = 1.0, std::mt19937_64* rng = nullptr);
double simcse_loss_and_grad(const std::vector<SegmentedSequence>& sources, ModelState& state,
                            double scale, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// optimizer

struct TrainHyper {
    double lr = 2e-4;
    double weight_decay = 0.01;
    double clip_norm = 1.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t warmup_steps = 0;  // 0 = no warmup
};

double grad_global_norm(const ModelState& state);

/// Clip + AdamW with decoupled weight decay and bias correction; bumps the
/// step counter.
void adamw_update(ModelState& state, const TrainHyper& hyper);

/// One optimization step on a homogeneous batch. Throws NonFiniteLossError
/// before touching parameters if the loss is not finite.
double train_step(const std::vector<PretrainExample>& batch, ModelState& state,
                  const TrainHyper& hyper, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// decoding

/// Segment bookkeeping while generating: region markers switch the running
/// segment, [NEG]/[POS]...[END] form spans, content inherits.
struct DecodeSegTracker {
    SegmentId region;
    bool in_span = false;
    SegmentId span_seg = SegmentId::Ctx;

    explicit DecodeSegTracker(SegmentId start) : region(start) {}
    SegmentId assign(int token);
};

/// Generated ids between [CLS] and [EOS]; at most max_len of them. Greedy
/// argmax breaks ties toward the lowest id.
std::vector<int> greedy_decode(const SegmentedSequence& source, ModelState& state,
                               std::size_t max_len, SegmentId start_seg = SegmentId::Ctx);

/// Beam search by summed log-probability, length-normalized when finalized.
/// width 1 coincides with greedy.
std::vector<int> beam_decode(const SegmentedSequence& source, ModelState& state,
                             std::size_t max_len, std::size_t width,
                             SegmentId start_seg = SegmentId::Ctx);

// ---------------------------------------------------------------------------
// checkpoints: directory with manifest.json + params.bin (raw LE f32)

void save_checkpoint(const ModelState& state, const std::filesystem::path& dir);
ModelState load_checkpoint(const std::filesystem::path& dir);

}  // namespace commitlm
