#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "commitlm/model.hpp"
#include "commitlm/sequence.hpp"
#include "commitlm/vocab.hpp"

using namespace commitlm;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.layers_enc = 1;
    cfg.layers_dec = 1;
    cfg.dim = 8;
    cfg.heads = 2;
    cfg.ffn_mult = 2;
    cfg.vocab_size = Vocabulary::kNumReserved;
    cfg.max_positions = 64;
    cfg.dropout_rate = 0.0;
    return cfg;
}

SegmentedSequence seq_of(std::initializer_list<int> ids, SegmentId seg = SegmentId::Ctx) {
    SegmentedSequence seq;
    for (int id : ids) {
        seq.push(id, seg);
    }
    return seq;
}

SegmentedSequence text_seq(const Vocabulary& vocab, const std::string& text, SegmentId seg) {
    SegmentedSequence seq;
    seq.push(Vocabulary::kCls, seg);
    for (int id : vocab.encode(text)) {
        seq.push(id, seg);
    }
    return seq;
}

// relative error with an absolute floor for near-zero gradients
double rel_err(double a, double b) {
    double denom = std::max(1e-6, std::abs(a) + std::abs(b));
    return std::abs(a - b) / denom;
}

}  // namespace

TEST_CASE("config validation rejects inconsistent shapes") {
    ModelConfig cfg = tiny_config();
    CHECK_NOTHROW(cfg.validate());
    cfg.heads = 3;  // 8 % 3 != 0
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_config();
    cfg.vocab_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_config();
    cfg.dropout_rate = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_config();
    cfg.dropout_rate = -0.1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_config();
    cfg.tau = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_config();
    cfg.layers_dec = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("config json round trips") {
    ModelConfig cfg = tiny_config();
    cfg.tau = 0.07;
    cfg.dropout_rate = 0.2;
    ModelConfig back = ModelConfig::from_json(cfg.to_json());
    CHECK(back == cfg);
}

TEST_CASE("initialization is deterministic per seed") {
    ModelConfig cfg = tiny_config();
    ModelState a = ModelState::init(cfg, 5);
    ModelState b = ModelState::init(cfg, 5);
    ModelState c = ModelState::init(cfg, 6);
    REQUIRE(a.tensors().size() == b.tensors().size());
    bool all_equal = true;
    bool any_diff_c = false;
    for (std::size_t i = 0; i < a.tensors().size(); ++i) {
        all_equal = all_equal && a.tensors()[i].w == b.tensors()[i].w;
        any_diff_c = any_diff_c || a.tensors()[i].w != c.tensors()[i].w;
    }
    CHECK(all_equal);
    CHECK(any_diff_c);
    CHECK(a.step() == 0);
}

TEST_CASE("embedding rows are the sum of token segment and position vectors") {
    ModelConfig cfg = tiny_config();
    ModelState state = ModelState::init(cfg, 1);
    SegmentedSequence seq;
    seq.push(Vocabulary::kCls, SegmentId::Msg);
    seq.push(Vocabulary::kByteBase + 'a', SegmentId::File);
    seq.push(Vocabulary::kByteBase + 'b', SegmentId::Pos);
    Mat e = embed(seq, state);
    REQUIRE(e.rows == 3);
    REQUIRE(e.cols == 8);
    const Tensor& tok = state.tensor("tok_emb");
    const Tensor& seg = state.tensor("seg_emb");
    const Tensor& pos = state.tensor("pos_emb");
    for (std::size_t t = 0; t < 3; ++t) {
        for (std::size_t d = 0; d < 8; ++d) {
            double want = double(tok.w[std::size_t(seq.ids[t]) * 8 + d]) +
                          double(seg.w[std::size_t(seq.segs[t]) * 8 + d]) +
                          double(pos.w[t * 8 + d]);
            CHECK(e.at(t, d) == doctest::Approx(want).epsilon(1e-12));
        }
    }
}

TEST_CASE("sequences beyond max positions overflow") {
    ModelConfig cfg = tiny_config();
    cfg.max_positions = 4;
    ModelState state = ModelState::init(cfg, 1);
    SegmentedSequence ok = seq_of({0, 1, 2, 3});
    CHECK_NOTHROW(embed(ok, state));
    SegmentedSequence over = seq_of({0, 1, 2, 3, 4});
    CHECK_THROWS_AS(embed(over, state), PositionOverflowError);
}

TEST_CASE("out of vocabulary ids are rejected") {
    ModelState state = ModelState::init(tiny_config(), 1);
    SegmentedSequence bad = seq_of({Vocabulary::kNumReserved});  // == vocab_size
    CHECK_THROWS_AS(embed(bad, state), ModelError);
}

TEST_CASE("forward pass shapes follow the config") {
    ModelState state = ModelState::init(tiny_config(), 2);
    Vocabulary vocab;
    SegmentedSequence src = text_seq(vocab, "hello world", SegmentId::Ctx);
    SegmentedSequence tgt = text_seq(vocab, "hi", SegmentId::Msg);
    EncoderPass enc = encode(src, state);
    CHECK(enc.out.rows == src.size());
    CHECK(enc.out.cols == 8);
    Mat logits = forward_seq2seq(src, tgt, state);
    CHECK(logits.rows == tgt.size());
    CHECK(logits.cols == std::size_t(Vocabulary::kNumReserved));
}

TEST_CASE("eval mode forward passes are deterministic") {
    ModelState state = ModelState::init(tiny_config(), 2);
    Vocabulary vocab;
    SegmentedSequence src = text_seq(vocab, "same input", SegmentId::Ctx);
    EncoderPass a = encode(src, state);
    EncoderPass b = encode(src, state);
    CHECK(a.out.d == b.out.d);
}

TEST_CASE("dropout changes activations only in training mode with an rng") {
    ModelConfig cfg = tiny_config();
    cfg.dropout_rate = 0.5;
    ModelState state = ModelState::init(cfg, 2);
    Vocabulary vocab;
    SegmentedSequence src = text_seq(vocab, "stochastic regularizer", SegmentId::Ctx);

    EncoderPass eval_pass = encode(src, state);
    std::mt19937_64 rng(3);
    EncoderPass train_a = encode(src, state, true, &rng);
    EncoderPass train_b = encode(src, state, true, &rng);
    CHECK(train_a.out.d != eval_pass.out.d);
    CHECK(train_a.out.d != train_b.out.d);  // fresh masks per call

    // train mode without an rng falls back to eval behavior
    EncoderPass no_rng = encode(src, state, true, nullptr);
    CHECK(no_rng.out.d == eval_pass.out.d);
}

TEST_CASE("decoder attention is causal over the target prefix") {
    ModelState state = ModelState::init(tiny_config(), 7);
    Vocabulary vocab;
    SegmentedSequence src = text_seq(vocab, "source text", SegmentId::Ctx);

    SegmentedSequence t1 = seq_of({Vocabulary::kCls, 20, 21, 22}, SegmentId::Msg);
    SegmentedSequence t2 = seq_of({Vocabulary::kCls, 20, 99, 98}, SegmentId::Msg);
    Mat l1 = forward_seq2seq(src, t1, state);
    Mat l2 = forward_seq2seq(src, t2, state);
    // positions 0 and 1 share their prefix, so their logits agree exactly
    for (std::size_t t = 0; t < 2; ++t) {
        for (std::size_t c = 0; c < l1.cols; ++c) {
            CHECK(l1.at(t, c) == l2.at(t, c));
        }
    }
    // position 2 sees the differing token
    bool differs = false;
    for (std::size_t c = 0; c < l1.cols && !differs; ++c) {
        differs = l1.at(2, c) != l2.at(2, c);
    }
    CHECK(differs);
}

TEST_CASE("uniform logits give log vocabulary cross entropy") {
    const std::size_t v = 137;
    Mat logits(3, v);
    for (double& x : logits.d) {
        x = 0.42;  // any constant
    }
    std::vector<int> golds = {0, 5, 136};
    double loss = cross_entropy_from_logits(logits, golds);
    CHECK(loss == doctest::Approx(std::log(double(v))).epsilon(1e-12));
}

TEST_CASE("cross entropy matches a hand computed two class case") {
    Mat logits(1, 2);
    logits.at(0, 0) = std::log(3.0);
    logits.at(0, 1) = std::log(1.0);
    std::vector<int> golds = {0};
    // softmax = (0.75, 0.25)
    CHECK(cross_entropy_from_logits(logits, golds) ==
          doctest::Approx(-std::log(0.75)).epsilon(1e-12));
    golds[0] = 1;
    CHECK(cross_entropy_from_logits(logits, golds) ==
          doctest::Approx(-std::log(0.25)).epsilon(1e-12));
}

TEST_CASE("cross entropy is shift invariant per row") {
    Mat a(2, 5);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    for (double& x : a.d) {
        x = dist(rng);
    }
    Mat b = a;
    for (std::size_t c = 0; c < b.cols; ++c) {
        b.at(0, c) += 100.0;
        b.at(1, c) -= 50.0;
    }
    std::vector<int> golds = {2, 4};
    CHECK(cross_entropy_from_logits(a, golds) ==
          doctest::Approx(cross_entropy_from_logits(b, golds)).epsilon(1e-9));
}

TEST_CASE("a single pair has zero contrastive loss") {
    std::vector<std::vector<double>> reps = {{1.0, 2.0, 3.0}};
    std::vector<std::vector<double>> pos = {{2.0, 4.0, 6.0}};  // same direction
    CHECK(contrastive_loss(reps, pos, 0.05) == doctest::Approx(0.0).epsilon(1e-12));
    // even a misaligned single pair: numerator equals the only denominator term
    pos[0] = {3.0, -1.0, 0.5};
    CHECK(contrastive_loss(reps, pos, 0.05) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("two orthogonal pairs give the closed form loss") {
    std::vector<std::vector<double>> reps = {{1.0, 0.0}, {0.0, 1.0}};
    std::vector<std::vector<double>> pos = {{2.0, 0.0}, {0.0, 0.5}};
    for (double tau : {1.0, 0.5, 0.05}) {
        double want = std::log(1.0 + std::exp(-1.0 / tau));
        CHECK(contrastive_loss(reps, pos, tau) == doctest::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("contrastive loss sees only directions not magnitudes") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<std::vector<double>> reps, pos;
    for (int i = 0; i < 4; ++i) {
        std::vector<double> r(6), p(6);
        for (double& x : r) x = dist(rng);
        for (double& x : p) x = dist(rng);
        reps.push_back(r);
        pos.push_back(p);
    }
    double base = contrastive_loss(reps, pos, 0.05);
    for (auto& r : reps) {
        for (double& x : r) x *= 7.5;
    }
    for (auto& p : pos) {
        for (double& x : p) x *= 0.03;
    }
    CHECK(contrastive_loss(reps, pos, 0.05) == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("zero representations are rejected and tau validated") {
    std::vector<std::vector<double>> reps = {{0.0, 0.0}};
    std::vector<std::vector<double>> pos = {{1.0, 0.0}};
    CHECK_THROWS_AS(contrastive_loss(reps, pos, 0.05), ZeroVectorError);
    std::vector<std::vector<double>> ok = {{1.0, 0.0}};
    CHECK_THROWS_AS(contrastive_loss(ok, pos, 0.0), ConfigError);
}

TEST_CASE("simcse needs dropout enabled") {
    ModelConfig cfg = tiny_config();  // dropout 0
    ModelState state = ModelState::init(cfg, 1);
    Vocabulary vocab;
    SegmentedSequence src = text_seq(vocab, "abc", SegmentId::Ctx);
    std::mt19937_64 rng(1);
    CHECK_THROWS_AS(simcse_step(src, state, rng), DropoutDisabledError);

    ModelConfig on = tiny_config();
    on.dropout_rate = 0.2;
    ModelState state2 = ModelState::init(on, 1);
    auto [h1, h2] = simcse_step(src, state2, rng);
    CHECK(h1.size() == 8);
    CHECK(h2.size() == 8);
    CHECK(h1 != h2);  // independent dropout masks
}

TEST_CASE("pooled representation is the encoder CLS row") {
    ModelState state = ModelState::init(tiny_config(), 3);
    Vocabulary vocab;
    SegmentedSequence src = text_seq(vocab, "pool me", SegmentId::Ctx);
    std::vector<double> pooled = pooled_representation(src, state);
    EncoderPass enc = encode(src, state);
    REQUIRE(pooled.size() == 8);
    for (std::size_t d = 0; d < 8; ++d) {
        CHECK(pooled[d] == enc.out.at(0, d));
    }
}

TEST_CASE("seq2seq gradients match central finite differences") {
    ModelState state = ModelState::init(tiny_config(), 11);
    Vocabulary vocab;
    SegmentedSequence src = text_seq(vocab, "fix the bug", SegmentId::Ctx);
    SegmentedSequence tgt = text_seq(vocab, "bug fix", SegmentId::Msg);
    tgt.push(Vocabulary::kEos, SegmentId::Msg);

    state.zero_grad();
    seq2seq_loss_and_grad(src, tgt, state);

    const double h = 1e-3;
    double worst = 0.0;
    std::mt19937_64 pick(99);
    for (Tensor& tensor : state.tensors()) {
        for (int s = 0; s < 4; ++s) {
            std::size_t i = pick() % tensor.size();
            float saved = tensor.w[i];
            tensor.w[i] = float(double(saved) + h);
            double up = loss_seq2seq(src, tgt, state);
            tensor.w[i] = float(double(saved) - h);
            double down = loss_seq2seq(src, tgt, state);
            tensor.w[i] = saved;
            double fd = (up - down) / (2.0 * h);
            worst = std::max(worst, rel_err(fd, tensor.g[i]));
        }
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("contrastive gradients match central finite differences") {
    ModelState state = ModelState::init(tiny_config(), 13);
    Vocabulary vocab;
    std::vector<SegmentedSequence> sources = {text_seq(vocab, "alpha beta", SegmentId::Msg),
                                              text_seq(vocab, "gamma", SegmentId::Msg)};
    std::vector<SegmentedSequence> positives = {text_seq(vocab, "a b;", SegmentId::Ctx),
                                                text_seq(vocab, "g();", SegmentId::Ctx)};

    state.zero_grad();
    nlpl_loss_and_grad(sources, positives, state);

    auto loss_now = [&]() {
        std::vector<std::vector<double>> reps, pos;
        for (const auto& s : sources) reps.push_back(pooled_representation(s, state));
        for (const auto& p : positives) pos.push_back(pooled_representation(p, state));
        return contrastive_loss(reps, pos, state.config().tau);
    };

    const double h = 1e-3;
    double worst = 0.0;
    std::mt19937_64 pick(7);
    for (Tensor& tensor : state.tensors()) {
        for (int s = 0; s < 3; ++s) {
            std::size_t i = pick() % tensor.size();
            float saved = tensor.w[i];
            tensor.w[i] = float(double(saved) + h);
            double up = loss_now();
            tensor.w[i] = float(double(saved) - h);
            double down = loss_now();
            tensor.w[i] = saved;
            double fd = (up - down) / (2.0 * h);
            worst = std::max(worst, rel_err(fd, tensor.g[i]));
        }
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("loss and grad report the same loss as the forward only path") {
    ModelState state = ModelState::init(tiny_config(), 21);
    Vocabulary vocab;
    SegmentedSequence src = text_seq(vocab, "source", SegmentId::Ctx);
    SegmentedSequence tgt = text_seq(vocab, "t", SegmentId::Msg);
    tgt.push(Vocabulary::kEos, SegmentId::Msg);
    state.zero_grad();
    double with_grad = seq2seq_loss_and_grad(src, tgt, state);
    double forward_only = loss_seq2seq(src, tgt, state);
    CHECK(with_grad == doctest::Approx(forward_only).epsilon(1e-12));
}

TEST_CASE("gradient scale multiplies the accumulated gradient") {
    ModelState state = ModelState::init(tiny_config(), 23);
    Vocabulary vocab;
    SegmentedSequence src = text_seq(vocab, "scale", SegmentId::Ctx);
    SegmentedSequence tgt = text_seq(vocab, "s", SegmentId::Msg);
    tgt.push(Vocabulary::kEos, SegmentId::Msg);

    state.zero_grad();
    seq2seq_loss_and_grad(src, tgt, state, 1.0);
    std::vector<double> unit = state.tensor("tok_emb").g;
    state.zero_grad();
    seq2seq_loss_and_grad(src, tgt, state, 0.25);
    const std::vector<double>& quarter = state.tensor("tok_emb").g;
    REQUIRE(unit.size() == quarter.size());
    for (std::size_t i = 0; i < unit.size(); ++i) {
        CHECK(quarter[i] == doctest::Approx(unit[i] * 0.25).epsilon(1e-9));
    }
}
