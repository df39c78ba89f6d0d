#include "commitlm/model.hpp"

#include <cmath>
#include <cstring>
#include <limits>

#include <nlohmann/json.hpp>

namespace commitlm {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }
double gelu_grad(double x) {
    return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

Mat add(const Mat& a, const Mat& b) {
    Mat out = a;
    for (std::size_t i = 0; i < out.d.size(); ++i) {
        out.d[i] += b.d[i];
    }
    return out;
}

void add_into(Mat& a, const Mat& b) {
    for (std::size_t i = 0; i < a.d.size(); ++i) {
        a.d[i] += b.d[i];
    }
}

// y = x W^T + b with W stored [out, in]
Mat linear_forward(const Tensor& w, const Tensor* b, const Mat& x, LinearCache& cache) {
    const std::size_t out_dim = w.shape[0];
    const std::size_t in_dim = w.shape[1];
    Mat y(x.rows, out_dim);
    for (std::size_t r = 0; r < x.rows; ++r) {
        for (std::size_t o = 0; o < out_dim; ++o) {
            double acc = b ? double(b->w[o]) : 0.0;
            const float* wrow = &w.w[o * in_dim];
            const double* xrow = &x.d[r * in_dim];
            for (std::size_t i = 0; i < in_dim; ++i) {
                acc += xrow[i] * double(wrow[i]);
            }
            y.at(r, o) = acc;
        }
    }
    cache.in = x;
    return y;
}

Mat linear_backward(Tensor& w, Tensor* b, const LinearCache& cache, const Mat& dy) {
    const std::size_t out_dim = w.shape[0];
    const std::size_t in_dim = w.shape[1];
    const Mat& x = cache.in;
    Mat dx(x.rows, in_dim);
    for (std::size_t r = 0; r < x.rows; ++r) {
        for (std::size_t o = 0; o < out_dim; ++o) {
            const double dyv = dy.at(r, o);
            if (b) {
                b->g[o] += dyv;
            }
            double* wg = &w.g[o * in_dim];
            const float* wrow = &w.w[o * in_dim];
            const double* xrow = &x.d[r * in_dim];
            double* dxrow = &dx.d[r * in_dim];
            for (std::size_t i = 0; i < in_dim; ++i) {
                wg[i] += dyv * xrow[i];
                dxrow[i] += dyv * double(wrow[i]);
            }
        }
    }
    return dx;
}

Mat layernorm_forward(const Tensor& gain, const Tensor& bias, const Mat& x,
                      LayerNormCache& cache) {
    const std::size_t d = x.cols;
    Mat y(x.rows, d);
    cache.in = x;
    cache.mean.resize(x.rows);
    cache.rstd.resize(x.rows);
    for (std::size_t r = 0; r < x.rows; ++r) {
        double mean = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            mean += x.at(r, i);
        }
        mean /= double(d);
        double var = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            double c = x.at(r, i) - mean;
            var += c * c;
        }
        var /= double(d);
        double rstd = 1.0 / std::sqrt(var + kLnEps);
        cache.mean[r] = mean;
        cache.rstd[r] = rstd;
        for (std::size_t i = 0; i < d; ++i) {
            y.at(r, i) = (x.at(r, i) - mean) * rstd * double(gain.w[i]) + double(bias.w[i]);
        }
    }
    return y;
}

Mat layernorm_backward(Tensor& gain, Tensor& bias, const LayerNormCache& cache, const Mat& dy) {
    const std::size_t d = cache.in.cols;
    Mat dx(cache.in.rows, d);
    for (std::size_t r = 0; r < cache.in.rows; ++r) {
        const double mean = cache.mean[r];
        const double rstd = cache.rstd[r];
        double m1 = 0.0;  // mean of dxhat
        double m2 = 0.0;  // mean of dxhat * xhat
        for (std::size_t i = 0; i < d; ++i) {
            double xhat = (cache.in.at(r, i) - mean) * rstd;
            double dxhat = dy.at(r, i) * double(gain.w[i]);
            gain.g[i] += dy.at(r, i) * xhat;
            bias.g[i] += dy.at(r, i);
            m1 += dxhat;
            m2 += dxhat * xhat;
        }
        m1 /= double(d);
        m2 /= double(d);
        for (std::size_t i = 0; i < d; ++i) {
            double xhat = (cache.in.at(r, i) - mean) * rstd;
            double dxhat = dy.at(r, i) * double(gain.w[i]);
            dx.at(r, i) = rstd * (dxhat - m1 - xhat * m2);
        }
    }
    return dx;
}

Mat dropout_forward(const Mat& x, double rate, bool train, std::mt19937_64* rng,
                    DropoutCache& cache) {
    if (!train || rate <= 0.0 || rng == nullptr) {
        cache.active = false;
        return x;
    }
    cache.active = true;
    cache.mult.resize(x.d.size());
    const double keep = 1.0 - rate;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Mat y(x.rows, x.cols);
    for (std::size_t i = 0; i < x.d.size(); ++i) {
        cache.mult[i] = unit(*rng) < keep ? 1.0 / keep : 0.0;
        y.d[i] = x.d[i] * cache.mult[i];
    }
    return y;
}

Mat dropout_backward(const DropoutCache& cache, const Mat& dy) {
    if (!cache.active) {
        return dy;
    }
    Mat dx(dy.rows, dy.cols);
    for (std::size_t i = 0; i < dy.d.size(); ++i) {
        dx.d[i] = dy.d[i] * cache.mult[i];
    }
    return dx;
}

struct AttnParams {
    Tensor& wq;
    Tensor& wk;
    Tensor& wv;
    Tensor& wo;
    Tensor& bq;
    Tensor& bk;
    Tensor& bv;
    Tensor& bo;
};

AttnParams attn_params(ModelState& state, const std::string& prefix) {
    return {state.tensor(prefix + ".wq"), state.tensor(prefix + ".wk"),
            state.tensor(prefix + ".wv"), state.tensor(prefix + ".wo"),
            state.tensor(prefix + ".bq"), state.tensor(prefix + ".bk"),
            state.tensor(prefix + ".bv"), state.tensor(prefix + ".bo")};
}

Mat attention_forward(ModelState& state, const std::string& prefix, const Mat& q_in,
                      const Mat& kv_in, bool causal, AttnCache& cache) {
    const ModelConfig& cfg = state.config();
    AttnParams p = attn_params(state, prefix);
    cache.causal = causal;
    cache.q = linear_forward(p.wq, &p.bq, q_in, cache.lq);
    cache.k = linear_forward(p.wk, &p.bk, kv_in, cache.lk);
    cache.v = linear_forward(p.wv, &p.bv, kv_in, cache.lv);

    const std::size_t heads = std::size_t(cfg.heads);
    const std::size_t dh = std::size_t(cfg.head_dim());
    const double scale = 1.0 / std::sqrt(double(dh));
    const std::size_t lq = q_in.rows;
    const std::size_t lk = kv_in.rows;

    cache.probs.assign(heads, Mat());
    cache.concat = Mat(lq, std::size_t(cfg.dim));
    std::vector<double> scores(lk);
    for (std::size_t h = 0; h < heads; ++h) {
        Mat probs(lq, lk);
        for (std::size_t i = 0; i < lq; ++i) {
            const std::size_t valid = causal ? i + 1 : lk;
            double maxv = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < valid; ++j) {
                double s = 0.0;
                for (std::size_t c = 0; c < dh; ++c) {
                    s += cache.q.at(i, h * dh + c) * cache.k.at(j, h * dh + c);
                }
                scores[j] = s * scale;
                maxv = std::max(maxv, scores[j]);
            }
            double denom = 0.0;
            for (std::size_t j = 0; j < valid; ++j) {
                scores[j] = std::exp(scores[j] - maxv);
                denom += scores[j];
            }
            for (std::size_t j = 0; j < valid; ++j) {
                probs.at(i, j) = scores[j] / denom;
            }
            for (std::size_t c = 0; c < dh; ++c) {
                double acc = 0.0;
                for (std::size_t j = 0; j < valid; ++j) {
                    acc += probs.at(i, j) * cache.v.at(j, h * dh + c);
                }
                cache.concat.at(i, h * dh + c) = acc;
            }
        }
        cache.probs[h] = std::move(probs);
    }
    return linear_forward(p.wo, &p.bo, cache.concat, cache.lo);
}

// returns (d_q_in, d_kv_in)
std::pair<Mat, Mat> attention_backward(ModelState& state, const std::string& prefix,
                                       const AttnCache& cache, const Mat& d_out) {
    const ModelConfig& cfg = state.config();
    AttnParams p = attn_params(state, prefix);
    Mat d_concat = linear_backward(p.wo, &p.bo, cache.lo, d_out);

    const std::size_t heads = std::size_t(cfg.heads);
    const std::size_t dh = std::size_t(cfg.head_dim());
    const double scale = 1.0 / std::sqrt(double(dh));
    const std::size_t lq = cache.q.rows;
    const std::size_t lk = cache.k.rows;

    Mat dq(lq, std::size_t(cfg.dim));
    Mat dk(lk, std::size_t(cfg.dim));
    Mat dv(lk, std::size_t(cfg.dim));
    std::vector<double> dprow(lk);
    for (std::size_t h = 0; h < heads; ++h) {
        const Mat& probs = cache.probs[h];
        for (std::size_t i = 0; i < lq; ++i) {
            const std::size_t valid = cache.causal ? i + 1 : lk;
            double dot = 0.0;
            for (std::size_t j = 0; j < valid; ++j) {
                double dp = 0.0;
                for (std::size_t c = 0; c < dh; ++c) {
                    dp += d_concat.at(i, h * dh + c) * cache.v.at(j, h * dh + c);
                }
                dprow[j] = dp;
                dot += dp * probs.at(i, j);
                for (std::size_t c = 0; c < dh; ++c) {
                    dv.at(j, h * dh + c) += probs.at(i, j) * d_concat.at(i, h * dh + c);
                }
            }
            for (std::size_t j = 0; j < valid; ++j) {
                double ds = probs.at(i, j) * (dprow[j] - dot);
                for (std::size_t c = 0; c < dh; ++c) {
                    dq.at(i, h * dh + c) += ds * scale * cache.k.at(j, h * dh + c);
                    dk.at(j, h * dh + c) += ds * scale * cache.q.at(i, h * dh + c);
                }
            }
        }
    }
    Mat d_q_in = linear_backward(p.wq, &p.bq, cache.lq, dq);
    Mat d_kv_in = linear_backward(p.wk, &p.bk, cache.lk, dk);
    add_into(d_kv_in, linear_backward(p.wv, &p.bv, cache.lv, dv));
    return {std::move(d_q_in), std::move(d_kv_in)};
}

Mat ffn_forward(ModelState& state, const std::string& prefix, const Mat& x, FfnCache& cache) {
    Tensor& w1 = state.tensor(prefix + ".w1");
    Tensor& b1 = state.tensor(prefix + ".b1");
    Tensor& w2 = state.tensor(prefix + ".w2");
    Tensor& b2 = state.tensor(prefix + ".b2");
    cache.pre = linear_forward(w1, &b1, x, cache.l1);
    Mat act(cache.pre.rows, cache.pre.cols);
    for (std::size_t i = 0; i < act.d.size(); ++i) {
        act.d[i] = gelu(cache.pre.d[i]);
    }
    return linear_forward(w2, &b2, act, cache.l2);
}

Mat ffn_backward(ModelState& state, const std::string& prefix, const FfnCache& cache,
                 const Mat& dy) {
    Tensor& w1 = state.tensor(prefix + ".w1");
    Tensor& b1 = state.tensor(prefix + ".b1");
    Tensor& w2 = state.tensor(prefix + ".w2");
    Tensor& b2 = state.tensor(prefix + ".b2");
    Mat d_act = linear_backward(w2, &b2, cache.l2, dy);
    for (std::size_t i = 0; i < d_act.d.size(); ++i) {
        d_act.d[i] *= gelu_grad(cache.pre.d[i]);
    }
    return linear_backward(w1, &b1, cache.l1, d_act);
}

void embedding_backward(const SegmentedSequence& seq, const Mat& d_emb, ModelState& state) {
    Tensor& tok = state.tensor("tok_emb");
    Tensor& seg = state.tensor("seg_emb");
    Tensor& pos = state.tensor("pos_emb");
    const std::size_t d = d_emb.cols;
    for (std::size_t t = 0; t < seq.size(); ++t) {
        const std::size_t id = std::size_t(seq.ids[t]);
        const std::size_t sid = std::size_t(static_cast<int>(seq.segs[t]));
        for (std::size_t i = 0; i < d; ++i) {
            const double dv = d_emb.at(t, i);
            tok.g[id * d + i] += dv;
            seg.g[sid * d + i] += dv;
            pos.g[t * d + i] += dv;
        }
    }
}

void encoder_backward(EncoderPass& pass, const Mat& d_out, ModelState& state) {
    const ModelConfig& cfg = state.config();
    Mat dx = layernorm_backward(state.tensor("enc.final_ln.g"), state.tensor("enc.final_ln.b"),
                                pass.final_ln, d_out);
    for (int l = cfg.layers_enc - 1; l >= 0; --l) {
        EncLayerCache& c = pass.layers[std::size_t(l)];
        const std::string base = "enc." + std::to_string(l);
        Mat d_f = dropout_backward(c.drop2, dx);
        Mat d_n2 = ffn_backward(state, base + ".ffn", c.ffn, d_f);
        Mat d_mid = add(dx, layernorm_backward(state.tensor(base + ".ln2.g"),
                                               state.tensor(base + ".ln2.b"), c.ln2, d_n2));
        Mat d_a = dropout_backward(c.drop1, d_mid);
        auto [d_q_in, d_kv_in] = attention_backward(state, base + ".attn", c.attn, d_a);
        add_into(d_q_in, d_kv_in);
        dx = add(d_mid, layernorm_backward(state.tensor(base + ".ln1.g"),
                                           state.tensor(base + ".ln1.b"), c.ln1, d_q_in));
    }
    embedding_backward(pass.src, dropout_backward(pass.emb_drop, dx), state);
}

// returns the gradient wrt the encoder output (through cross-attention)
Mat decoder_backward(DecoderPass& pass, const Mat& d_out, ModelState& state) {
    const ModelConfig& cfg = state.config();
    Mat dx = layernorm_backward(state.tensor("dec.final_ln.g"), state.tensor("dec.final_ln.b"),
                                pass.final_ln, d_out);
    Mat d_enc;
    for (int l = cfg.layers_dec - 1; l >= 0; --l) {
        DecLayerCache& c = pass.layers[std::size_t(l)];
        const std::string base = "dec." + std::to_string(l);
        Mat d_f = dropout_backward(c.drop3, dx);
        Mat d_n3 = ffn_backward(state, base + ".ffn", c.ffn, d_f);
        Mat d_x2 = add(dx, layernorm_backward(state.tensor(base + ".ln3.g"),
                                              state.tensor(base + ".ln3.b"), c.ln3, d_n3));
        Mat d_ca = dropout_backward(c.drop2, d_x2);
        auto [d_n2, d_enc_part] = attention_backward(state, base + ".cross", c.cross_attn, d_ca);
        if (d_enc.d.empty()) {
            d_enc = std::move(d_enc_part);
        } else {
            add_into(d_enc, d_enc_part);
        }
        Mat d_x1 = add(d_x2, layernorm_backward(state.tensor(base + ".ln2.g"),
                                                state.tensor(base + ".ln2.b"), c.ln2, d_n2));
        Mat d_sa = dropout_backward(c.drop1, d_x1);
        auto [d_q_in, d_kv_in] = attention_backward(state, base + ".self", c.self_attn, d_sa);
        add_into(d_q_in, d_kv_in);
        dx = add(d_x1, layernorm_backward(state.tensor(base + ".ln1.g"),
                                          state.tensor(base + ".ln1.b"), c.ln1, d_q_in));
    }
    embedding_backward(pass.prefix, dropout_backward(pass.emb_drop, dx), state);
    return d_enc;
}

}  // namespace

// ---------------------------------------------------------------------------
// config and state

void ModelConfig::validate() const {
    if (layers_enc <= 0 || layers_dec <= 0 || dim <= 0 || heads <= 0 || ffn_mult <= 0 ||
        vocab_size <= 0 || max_positions <= 0) {
        throw ConfigError("model dimensions must be positive");
    }
    if (dim % heads != 0) {
        throw ConfigError("heads must divide dim (" + std::to_string(dim) + " % " +
                          std::to_string(heads) + " != 0)");
    }
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
        throw ConfigError("dropout_rate must lie in [0, 1)");
    }
    if (!(tau > 0.0)) {
        throw ConfigError("tau must be positive");
    }
}

std::string ModelConfig::to_json() const {
    nlohmann::json j = {{"layers_enc", layers_enc},
                        {"layers_dec", layers_dec},
                        {"dim", dim},
                        {"heads", heads},
                        {"ffn_mult", ffn_mult},
                        {"vocab_size", vocab_size},
                        {"max_positions", max_positions},
                        {"dropout_rate", dropout_rate},
                        {"tau", tau}};
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    ModelConfig cfg;
    cfg.layers_enc = j.value("layers_enc", cfg.layers_enc);
    cfg.layers_dec = j.value("layers_dec", cfg.layers_dec);
    cfg.dim = j.value("dim", cfg.dim);
    cfg.heads = j.value("heads", cfg.heads);
    cfg.ffn_mult = j.value("ffn_mult", cfg.ffn_mult);
    cfg.vocab_size = j.value("vocab_size", cfg.vocab_size);
    cfg.max_positions = j.value("max_positions", cfg.max_positions);
    cfg.dropout_rate = j.value("dropout_rate", cfg.dropout_rate);
    cfg.tau = j.value("tau", cfg.tau);
    return cfg;
}

Tensor& ModelState::add_tensor(const std::string& name, std::vector<std::size_t> shape) {
    std::size_t numel = 1;
    for (std::size_t s : shape) {
        numel *= s;
    }
    Tensor t;
    t.name = name;
    t.shape = std::move(shape);
    t.w.assign(numel, 0.0f);
    t.g.assign(numel, 0.0);
    t.m.assign(numel, 0.0f);
    t.v.assign(numel, 0.0f);
    index_[name] = tensors_.size();
    tensors_.push_back(std::move(t));
    return tensors_.back();
}

Tensor& ModelState::tensor(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw ModelError("unknown tensor: " + name);
    }
    return tensors_[it->second];
}

const Tensor& ModelState::tensor(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw ModelError("unknown tensor: " + name);
    }
    return tensors_[it->second];
}

void ModelState::zero_grad() {
    for (Tensor& t : tensors_) {
        std::fill(t.g.begin(), t.g.end(), 0.0);
    }
}

ModelState ModelState::init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelState state;
    state.cfg_ = cfg;
    const std::size_t d = std::size_t(cfg.dim);
    const std::size_t f = std::size_t(cfg.ffn_dim());
    const std::size_t v = std::size_t(cfg.vocab_size);

    auto attn_block = [&](const std::string& base) {
        state.add_tensor(base + ".wq", {d, d});
        state.add_tensor(base + ".wk", {d, d});
        state.add_tensor(base + ".wv", {d, d});
        state.add_tensor(base + ".wo", {d, d});
        state.add_tensor(base + ".bq", {d});
        state.add_tensor(base + ".bk", {d});
        state.add_tensor(base + ".bv", {d});
        state.add_tensor(base + ".bo", {d});
    };
    auto ln_block = [&](const std::string& base) {
        state.add_tensor(base + ".g", {d});
        state.add_tensor(base + ".b", {d});
    };
    auto ffn_block = [&](const std::string& base) {
        state.add_tensor(base + ".w1", {f, d});
        state.add_tensor(base + ".b1", {f});
        state.add_tensor(base + ".w2", {d, f});
        state.add_tensor(base + ".b2", {d});
    };

    state.add_tensor("tok_emb", {v, d});
    state.add_tensor("seg_emb", {std::size_t(kNumSegments), d});
    state.add_tensor("pos_emb", {std::size_t(cfg.max_positions), d});
    for (int l = 0; l < cfg.layers_enc; ++l) {
        const std::string base = "enc." + std::to_string(l);
        ln_block(base + ".ln1");
        attn_block(base + ".attn");
        ln_block(base + ".ln2");
        ffn_block(base + ".ffn");
    }
    ln_block("enc.final_ln");
    for (int l = 0; l < cfg.layers_dec; ++l) {
        const std::string base = "dec." + std::to_string(l);
        ln_block(base + ".ln1");
        attn_block(base + ".self");
        ln_block(base + ".ln2");
        attn_block(base + ".cross");
        ln_block(base + ".ln3");
        ffn_block(base + ".ffn");
    }
    ln_block("dec.final_ln");
    state.add_tensor("out_proj", {v, d});

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 0.02);
    for (Tensor& t : state.tensors_) {
        const bool is_ln_gain = t.name.size() >= 2 && t.name.ends_with(".g") &&
                                t.name.find("ln") != std::string::npos;
        const bool is_bias = t.shape.size() == 1 && !is_ln_gain;
        if (is_ln_gain) {
            std::fill(t.w.begin(), t.w.end(), 1.0f);
        } else if (is_bias) {
            // zero already
        } else {
            for (float& w : t.w) {
                w = float(gauss(rng));
            }
        }
    }
    return state;
}

// ---------------------------------------------------------------------------
// forward

Mat embed(const SegmentedSequence& seq, const ModelState& state) {
    const ModelConfig& cfg = state.config();
    if (seq.size() > std::size_t(cfg.max_positions)) {
        throw PositionOverflowError("sequence length " + std::to_string(seq.size()) +
                                    " exceeds max_positions " +
                                    std::to_string(cfg.max_positions));
    }
    const Tensor& tok = state.tensor("tok_emb");
    const Tensor& seg = state.tensor("seg_emb");
    const Tensor& pos = state.tensor("pos_emb");
    const std::size_t d = std::size_t(cfg.dim);
    Mat e(seq.size(), d);
    for (std::size_t t = 0; t < seq.size(); ++t) {
        if (seq.ids[t] < 0 || seq.ids[t] >= cfg.vocab_size) {
            throw ModelError("token id " + std::to_string(seq.ids[t]) +
                             " outside vocabulary of size " + std::to_string(cfg.vocab_size));
        }
        const std::size_t id = std::size_t(seq.ids[t]);
        const std::size_t sid = std::size_t(static_cast<int>(seq.segs[t]));
        for (std::size_t i = 0; i < d; ++i) {
            e.at(t, i) = double(tok.w[id * d + i]) + double(seg.w[sid * d + i]) +
                         double(pos.w[t * d + i]);
        }
    }
    return e;
}

EncoderPass encode(const SegmentedSequence& src, ModelState& state, bool train,
                   std::mt19937_64* rng) {
    const ModelConfig& cfg = state.config();
    EncoderPass pass;
    pass.src = src;
    Mat x = embed(src, state);
    x = dropout_forward(x, cfg.dropout_rate, train, rng, pass.emb_drop);
    pass.layers.resize(std::size_t(cfg.layers_enc));
    for (int l = 0; l < cfg.layers_enc; ++l) {
        EncLayerCache& c = pass.layers[std::size_t(l)];
        const std::string base = "enc." + std::to_string(l);
        Mat n1 = layernorm_forward(state.tensor(base + ".ln1.g"), state.tensor(base + ".ln1.b"),
                                   x, c.ln1);
        Mat a = attention_forward(state, base + ".attn", n1, n1, false, c.attn);
        a = dropout_forward(a, cfg.dropout_rate, train, rng, c.drop1);
        Mat mid = add(x, a);
        Mat n2 = layernorm_forward(state.tensor(base + ".ln2.g"), state.tensor(base + ".ln2.b"),
                                   mid, c.ln2);
        Mat fo = ffn_forward(state, base + ".ffn", n2, c.ffn);
        fo = dropout_forward(fo, cfg.dropout_rate, train, rng, c.drop2);
        x = add(mid, fo);
    }
    pass.out = layernorm_forward(state.tensor("enc.final_ln.g"), state.tensor("enc.final_ln.b"),
                                 x, pass.final_ln);
    return pass;
}

DecoderPass decode_states(const SegmentedSequence& prefix, const EncoderPass& enc,
                          ModelState& state, bool train, std::mt19937_64* rng) {
    const ModelConfig& cfg = state.config();
    DecoderPass pass;
    pass.prefix = prefix;
    Mat x = embed(prefix, state);
    x = dropout_forward(x, cfg.dropout_rate, train, rng, pass.emb_drop);
    pass.layers.resize(std::size_t(cfg.layers_dec));
    for (int l = 0; l < cfg.layers_dec; ++l) {
        DecLayerCache& c = pass.layers[std::size_t(l)];
        const std::string base = "dec." + std::to_string(l);
        Mat n1 = layernorm_forward(state.tensor(base + ".ln1.g"), state.tensor(base + ".ln1.b"),
                                   x, c.ln1);
        Mat sa = attention_forward(state, base + ".self", n1, n1, true, c.self_attn);
        sa = dropout_forward(sa, cfg.dropout_rate, train, rng, c.drop1);
        Mat x1 = add(x, sa);
        Mat n2 = layernorm_forward(state.tensor(base + ".ln2.g"), state.tensor(base + ".ln2.b"),
                                   x1, c.ln2);
        Mat ca = attention_forward(state, base + ".cross", n2, enc.out, false, c.cross_attn);
        ca = dropout_forward(ca, cfg.dropout_rate, train, rng, c.drop2);
        Mat x2 = add(x1, ca);
        Mat n3 = layernorm_forward(state.tensor(base + ".ln3.g"), state.tensor(base + ".ln3.b"),
                                   x2, c.ln3);
        Mat fo = ffn_forward(state, base + ".ffn", n3, c.ffn);
        fo = dropout_forward(fo, cfg.dropout_rate, train, rng, c.drop3);
        x = add(x2, fo);
    }
    pass.out = layernorm_forward(state.tensor("dec.final_ln.g"), state.tensor("dec.final_ln.b"),
                                 x, pass.final_ln);
    return pass;
}

Mat output_logits(const Mat& dec_out, const ModelState& state) {
    const Tensor& w = state.tensor("out_proj");
    const std::size_t v = w.shape[0];
    const std::size_t d = w.shape[1];
    Mat logits(dec_out.rows, v);
    for (std::size_t r = 0; r < dec_out.rows; ++r) {
        for (std::size_t o = 0; o < v; ++o) {
            double acc = 0.0;
            const float* wrow = &w.w[o * d];
            const double* xrow = &dec_out.d[r * d];
            for (std::size_t i = 0; i < d; ++i) {
                acc += xrow[i] * double(wrow[i]);
            }
            logits.at(r, o) = acc;
        }
    }
    return logits;
}

Mat forward_seq2seq(const SegmentedSequence& source, const SegmentedSequence& target_prefix,
                    ModelState& state, bool train_mode, std::mt19937_64* rng) {
    EncoderPass enc = encode(source, state, train_mode, rng);
    DecoderPass dec = decode_states(target_prefix, enc, state, train_mode, rng);
    return output_logits(dec.out, state);
}

// ---------------------------------------------------------------------------
// losses

double cross_entropy_from_logits(const Mat& logits, std::span<const int> golds) {
    if (logits.rows != golds.size()) {
        throw ModelError("logit rows != gold count");
    }
    double total = 0.0;
    for (std::size_t r = 0; r < logits.rows; ++r) {
        double maxv = -std::numeric_limits<double>::infinity();
        for (std::size_t v = 0; v < logits.cols; ++v) {
            maxv = std::max(maxv, logits.at(r, v));
        }
        double denom = 0.0;
        for (std::size_t v = 0; v < logits.cols; ++v) {
            denom += std::exp(logits.at(r, v) - maxv);
        }
        total += maxv + std::log(denom) - logits.at(r, std::size_t(golds[r]));
    }
    return total / double(logits.rows);
}

namespace {

// teacher forcing split: decoder input target[:-1], golds target[1:]
void split_target(const SegmentedSequence& target, SegmentedSequence& prefix,
                  std::vector<int>& golds) {
    if (target.size() < 2) {
        throw ModelError("target needs at least [CLS] and [EOS]");
    }
    prefix.ids.assign(target.ids.begin(), target.ids.end() - 1);
    prefix.segs.assign(target.segs.begin(), target.segs.end() - 1);
    golds.assign(target.ids.begin() + 1, target.ids.end());
}

}  // namespace

double loss_seq2seq(const SegmentedSequence& source, const SegmentedSequence& target,
                    ModelState& state) {
    SegmentedSequence prefix;
    std::vector<int> golds;
    split_target(target, prefix, golds);
    Mat logits = forward_seq2seq(source, prefix, state, false, nullptr);
    return cross_entropy_from_logits(logits, golds);
}

double seq2seq_loss_and_grad(const SegmentedSequence& source, const SegmentedSequence& target,
                             ModelState& state, double scale, std::mt19937_64* rng) {
    SegmentedSequence prefix;
    std::vector<int> golds;
    split_target(target, prefix, golds);
    const bool train = rng != nullptr;
    EncoderPass enc = encode(source, state, train, rng);
    DecoderPass dec = decode_states(prefix, enc, state, train, rng);

    Tensor& out_proj = state.tensor("out_proj");
    LinearCache lo;
    Mat logits = linear_forward(out_proj, nullptr, dec.out, lo);
    const double loss = cross_entropy_from_logits(logits, golds);
    if (scale == 0.0) {
        return loss;
    }

    // d(loss)/d(logit) = (softmax - onehot) * scale / rows
    Mat d_logits(logits.rows, logits.cols);
    const double row_scale = scale / double(logits.rows);
    for (std::size_t r = 0; r < logits.rows; ++r) {
        double maxv = -std::numeric_limits<double>::infinity();
        for (std::size_t v = 0; v < logits.cols; ++v) {
            maxv = std::max(maxv, logits.at(r, v));
        }
        double denom = 0.0;
        for (std::size_t v = 0; v < logits.cols; ++v) {
            denom += std::exp(logits.at(r, v) - maxv);
        }
        for (std::size_t v = 0; v < logits.cols; ++v) {
            double p = std::exp(logits.at(r, v) - maxv) / denom;
            d_logits.at(r, v) = (p - (std::size_t(golds[r]) == v ? 1.0 : 0.0)) * row_scale;
        }
    }
    Mat d_dec_out = linear_backward(out_proj, nullptr, lo, d_logits);
    Mat d_enc_out = decoder_backward(dec, d_dec_out, state);
    encoder_backward(enc, d_enc_out, state);
    return loss;
}

std::vector<double> pooled_representation(const SegmentedSequence& source, ModelState& state) {
    EncoderPass pass = encode(source, state, false, nullptr);
    std::vector<double> rep(pass.out.cols);
    for (std::size_t i = 0; i < pass.out.cols; ++i) {
        rep[i] = pass.out.at(0, i);
    }
    return rep;
}

namespace {

double vec_norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) {
        s += x * x;
    }
    return std::sqrt(s);
}

double vec_dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

// forward + optional gradients wrt both sides (accumulated, pre-scaled)
double contrastive_core(const std::vector<std::vector<double>>& reps,
                        const std::vector<std::vector<double>>& pos, double tau, double scale,
                        std::vector<std::vector<double>>* d_reps,
                        std::vector<std::vector<double>>* d_pos) {
    const std::size_t b = reps.size();
    if (b == 0 || pos.size() != b) {
        throw ModelError("contrastive batch sides must be non-empty and equal");
    }
    if (!(tau > 0.0)) {
        throw ConfigError("tau must be positive");
    }
    std::vector<double> rep_norm(b), pos_norm(b);
    for (std::size_t i = 0; i < b; ++i) {
        rep_norm[i] = vec_norm(reps[i]);
        pos_norm[i] = vec_norm(pos[i]);
        if (rep_norm[i] == 0.0 || pos_norm[i] == 0.0) {
            throw ZeroVectorError("zero-norm representation in contrastive batch");
        }
    }
    Mat cosm(b, b);
    Mat probs(b, b);
    double loss = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        double maxv = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < b; ++j) {
            cosm.at(i, j) = vec_dot(reps[i], pos[j]) / (rep_norm[i] * pos_norm[j]);
            maxv = std::max(maxv, cosm.at(i, j) / tau);
        }
        double denom = 0.0;
        for (std::size_t j = 0; j < b; ++j) {
            denom += std::exp(cosm.at(i, j) / tau - maxv);
        }
        for (std::size_t j = 0; j < b; ++j) {
            probs.at(i, j) = std::exp(cosm.at(i, j) / tau - maxv) / denom;
        }
        loss += maxv + std::log(denom) - cosm.at(i, i) / tau;
    }
    loss /= double(b);

    if (d_reps != nullptr && d_pos != nullptr && scale != 0.0) {
        const std::size_t dim = reps[0].size();
        d_reps->assign(b, std::vector<double>(dim, 0.0));
        d_pos->assign(b, std::vector<double>(dim, 0.0));
        for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t j = 0; j < b; ++j) {
                const double ds =
                    (probs.at(i, j) - (i == j ? 1.0 : 0.0)) * scale / (double(b) * tau);
                if (ds == 0.0) {
                    continue;
                }
                const double inv_ab = 1.0 / (rep_norm[i] * pos_norm[j]);
                const double c = cosm.at(i, j);
                for (std::size_t k = 0; k < dim; ++k) {
                    (*d_reps)[i][k] +=
                        ds * (pos[j][k] * inv_ab - c * reps[i][k] / (rep_norm[i] * rep_norm[i]));
                    (*d_pos)[j][k] +=
                        ds * (reps[i][k] * inv_ab - c * pos[j][k] / (pos_norm[j] * pos_norm[j]));
                }
            }
        }
    }
    return loss;
}

Mat cls_row_gradient(const std::vector<double>& d_rep, std::size_t rows) {
    Mat d_out(rows, d_rep.size());
    for (std::size_t i = 0; i < d_rep.size(); ++i) {
        d_out.at(0, i) = d_rep[i];
    }
    return d_out;
}

std::vector<double> cls_row(const EncoderPass& pass) {
    std::vector<double> rep(pass.out.cols);
    for (std::size_t i = 0; i < pass.out.cols; ++i) {
        rep[i] = pass.out.at(0, i);
    }
    return rep;
}

}  // namespace

double contrastive_loss(const std::vector<std::vector<double>>& reps,
                        const std::vector<std::vector<double>>& pos_reps, double tau) {
    return contrastive_core(reps, pos_reps, tau, 0.0, nullptr, nullptr);
}

std::pair<std::vector<double>, std::vector<double>> simcse_step(const SegmentedSequence& source,
                                                                ModelState& state,
                                                                std::mt19937_64& rng) {
    if (state.config().dropout_rate <= 0.0) {
        throw DropoutDisabledError("SimCSE requires dropout_rate > 0");
    }
    EncoderPass a = encode(source, state, true, &rng);
    EncoderPass b = encode(source, state, true, &rng);
    return {cls_row(a), cls_row(b)};
}

double nlpl_loss_and_grad(const std::vector<SegmentedSequence>& sources,
                          const std::vector<SegmentedSequence>& positives, ModelState& state,
                          double scale, std::mt19937_64* rng) {
    if (sources.size() != positives.size() || sources.empty()) {
        throw ModelError("alignment batch sides must be non-empty and equal");
    }
    const bool train = rng != nullptr;
    std::vector<EncoderPass> pass_a;
    std::vector<EncoderPass> pass_b;
    pass_a.reserve(sources.size());
    pass_b.reserve(sources.size());
    std::vector<std::vector<double>> reps, pos;
    for (const SegmentedSequence& s : sources) {
        pass_a.push_back(encode(s, state, train, rng));
        reps.push_back(cls_row(pass_a.back()));
    }
    for (const SegmentedSequence& s : positives) {
        pass_b.push_back(encode(s, state, train, rng));
        pos.push_back(cls_row(pass_b.back()));
    }
    std::vector<std::vector<double>> d_reps, d_pos;
    const double loss =
        contrastive_core(reps, pos, state.config().tau, scale, &d_reps, &d_pos);
    if (scale != 0.0) {
        for (std::size_t i = 0; i < pass_a.size(); ++i) {
            encoder_backward(pass_a[i], cls_row_gradient(d_reps[i], pass_a[i].out.rows), state);
        }
        for (std::size_t i = 0; i < pass_b.size(); ++i) {
            encoder_backward(pass_b[i], cls_row_gradient(d_pos[i], pass_b[i].out.rows), state);
        }
    }
    return loss;
}

double simcse_loss_and_grad(const std::vector<SegmentedSequence>& sources, ModelState& state,
                            double scale, std::mt19937_64& rng) {
    if (state.config().dropout_rate <= 0.0) {
        throw DropoutDisabledError("SimCSE requires dropout_rate > 0");
    }
    if (sources.empty()) {
        throw ModelError("SimCSE batch must be non-empty");
    }
    std::vector<EncoderPass> pass_a;
    std::vector<EncoderPass> pass_b;
    std::vector<std::vector<double>> reps, pos;
    for (const SegmentedSequence& s : sources) {
        pass_a.push_back(encode(s, state, true, &rng));
        reps.push_back(cls_row(pass_a.back()));
        pass_b.push_back(encode(s, state, true, &rng));
        pos.push_back(cls_row(pass_b.back()));
    }
    std::vector<std::vector<double>> d_reps, d_pos;
    const double loss =
        contrastive_core(reps, pos, state.config().tau, scale, &d_reps, &d_pos);
    if (scale != 0.0) {
        for (std::size_t i = 0; i < pass_a.size(); ++i) {
            encoder_backward(pass_a[i], cls_row_gradient(d_reps[i], pass_a[i].out.rows), state);
            encoder_backward(pass_b[i], cls_row_gradient(d_pos[i], pass_b[i].out.rows), state);
        }
    }
    return loss;
}

// ---------------------------------------------------------------------------
// optimizer

double grad_global_norm(const ModelState& state) {
    double sum = 0.0;
    for (const Tensor& t : state.tensors()) {
        for (double g : t.g) {
            sum += g * g;
        }
    }
    return std::sqrt(sum);
}

void adamw_update(ModelState& state, const TrainHyper& hyper) {
    state.set_step(state.step() + 1);
    const double t = double(state.step());
    double lr = hyper.lr;
    if (hyper.warmup_steps > 0) {
        lr *= std::min(1.0, t / double(hyper.warmup_steps));
    }
    double clip_scale = 1.0;
    if (hyper.clip_norm > 0.0) {
        const double norm = grad_global_norm(state);
        if (norm > hyper.clip_norm) {
            clip_scale = hyper.clip_norm / norm;
        }
    }
    const double bc1 = 1.0 - std::pow(hyper.beta1, t);
    const double bc2 = 1.0 - std::pow(hyper.beta2, t);
    for (Tensor& tensor : state.tensors()) {
        for (std::size_t i = 0; i < tensor.size(); ++i) {
            const double g = tensor.g[i] * clip_scale;
            const double m = hyper.beta1 * double(tensor.m[i]) + (1.0 - hyper.beta1) * g;
            const double v = hyper.beta2 * double(tensor.v[i]) + (1.0 - hyper.beta2) * g * g;
            const double mhat = m / bc1;
            const double vhat = v / bc2;
            const double w = double(tensor.w[i]) -
                             lr * (mhat / (std::sqrt(vhat) + hyper.eps) +
                                   hyper.weight_decay * double(tensor.w[i]));
            tensor.m[i] = float(m);
            tensor.v[i] = float(v);
            tensor.w[i] = float(w);
        }
    }
}

double train_step(const std::vector<PretrainExample>& batch, ModelState& state,
                  const TrainHyper& hyper, std::mt19937_64& rng) {
    if (batch.empty()) {
        throw ModelError("empty batch");
    }
    const PretrainTask task = batch[0].task;
    for (const PretrainExample& ex : batch) {
        if (ex.task != task) {
            throw ModelError("batch mixes tasks");
        }
    }
    state.zero_grad();
    double loss = 0.0;
    switch (category(task)) {
        case TaskCategory::Denoise:
        case TaskCategory::Generation: {
            const double scale = 1.0 / double(batch.size());
            for (const PretrainExample& ex : batch) {
                loss += scale * seq2seq_loss_and_grad(ex.source, ex.target, state, scale, &rng);
            }
            break;
        }
        case TaskCategory::Contrastive: {
            if (task == PretrainTask::NLPLAlign) {
                std::vector<SegmentedSequence> sources, positives;
                for (const PretrainExample& ex : batch) {
                    sources.push_back(ex.source);
                    positives.push_back(ex.target);
                }
                loss = nlpl_loss_and_grad(sources, positives, state, 1.0, &rng);
            } else {
                std::vector<SegmentedSequence> sources;
                for (const PretrainExample& ex : batch) {
                    sources.push_back(ex.source);
                }
                loss = simcse_loss_and_grad(sources, state, 1.0, rng);
            }
            break;
        }
    }
    if (!std::isfinite(loss)) {
        throw NonFiniteLossError(std::string("non-finite loss on task ") + task_name(task) +
                                 " at step " + std::to_string(state.step()) + ": " +
                                 std::to_string(loss));
    }
    adamw_update(state, hyper);
    return loss;
}

}  // namespace commitlm
