#include <algorithm>
#include <cmath>
#include <limits>

#include "commitlm/model.hpp"
#include "commitlm/vocab.hpp"

namespace commitlm {

SegmentId DecodeSegTracker::assign(int token) {
    switch (token) {
        case Vocabulary::kMsg:
            region = SegmentId::Msg;
            in_span = false;
            return SegmentId::Msg;
        case Vocabulary::kFile:
            region = SegmentId::File;
            in_span = false;
            return SegmentId::File;
        case Vocabulary::kCode:
            region = SegmentId::Ctx;
            in_span = false;
            return SegmentId::Ctx;
        case Vocabulary::kNeg:
            in_span = true;
            span_seg = SegmentId::Neg;
            return SegmentId::Neg;
        case Vocabulary::kPos:
            in_span = true;
            span_seg = SegmentId::Pos;
            return SegmentId::Pos;
        case Vocabulary::kEnd:
            if (in_span) {
                in_span = false;
                return span_seg;  // [END] carries its span's segment
            }
            return region;
        default:
            return in_span ? span_seg : region;
    }
}

namespace {

std::vector<double> last_row_logits(const Mat& dec_out, const ModelState& state) {
    const Tensor& w = state.tensor("out_proj");
    const std::size_t v = w.shape[0];
    const std::size_t d = w.shape[1];
    const std::size_t r = dec_out.rows - 1;
    std::vector<double> logits(v);
    for (std::size_t o = 0; o < v; ++o) {
        double acc = 0.0;
        const float* wrow = &w.w[o * d];
        for (std::size_t i = 0; i < d; ++i) {
            acc += dec_out.at(r, i) * double(wrow[i]);
        }
        logits[o] = acc;
    }
    return logits;
}

std::vector<double> log_softmax(std::vector<double> logits) {
    double maxv = -std::numeric_limits<double>::infinity();
    for (double x : logits) {
        maxv = std::max(maxv, x);
    }
    double denom = 0.0;
    for (double x : logits) {
        denom += std::exp(x - maxv);
    }
    const double lse = maxv + std::log(denom);
    for (double& x : logits) {
        x -= lse;
    }
    return logits;
}

}  // namespace

std::vector<int> greedy_decode(const SegmentedSequence& source, ModelState& state,
                               std::size_t max_len, SegmentId start_seg) {
    EncoderPass enc = encode(source, state, false, nullptr);
    SegmentedSequence prefix;
    prefix.push(Vocabulary::kCls, start_seg);
    DecodeSegTracker tracker(start_seg);
    std::vector<int> out;
    const std::size_t pos_cap = std::size_t(state.config().max_positions);
    while (out.size() < max_len && prefix.size() < pos_cap) {
        DecoderPass dec = decode_states(prefix, enc, state, false, nullptr);
        std::vector<double> logits = last_row_logits(dec.out, state);
        std::size_t best = 0;
        for (std::size_t v = 1; v < logits.size(); ++v) {
            if (logits[v] > logits[best]) {  // ties keep the lowest id
                best = v;
            }
        }
        if (int(best) == Vocabulary::kEos) {
            break;
        }
        out.push_back(int(best));
        prefix.push(int(best), tracker.assign(int(best)));
    }
    return out;
}

std::vector<int> beam_decode(const SegmentedSequence& source, ModelState& state,
                             std::size_t max_len, std::size_t width, SegmentId start_seg) {
    if (width == 0) {
        throw ModelError("beam width must be >= 1");
    }
    EncoderPass enc = encode(source, state, false, nullptr);
    const std::size_t pos_cap = std::size_t(state.config().max_positions);

    struct Beam {
        SegmentedSequence prefix;
        DecodeSegTracker tracker;
        double lp = 0.0;
        std::vector<int> out;
    };
    struct Finished {
        double score;  // length-normalized
        double lp;
        std::vector<int> out;
    };

    std::vector<Beam> live;
    {
        Beam b{.prefix = {}, .tracker = DecodeSegTracker(start_seg)};
        b.prefix.push(Vocabulary::kCls, start_seg);
        live.push_back(std::move(b));
    }
    std::vector<Finished> finished;
    auto normalized = [](double lp, std::size_t steps) {
        return lp / double(std::max<std::size_t>(1, steps));
    };

    for (std::size_t step = 0; !live.empty(); ++step) {
        struct Cand {
            double lp;
            int token;
            std::size_t beam;
        };
        std::vector<Cand> cands;
        for (std::size_t bi = 0; bi < live.size(); ++bi) {
            DecoderPass dec = decode_states(live[bi].prefix, enc, state, false, nullptr);
            std::vector<double> lps = log_softmax(last_row_logits(dec.out, state));
            for (std::size_t v = 0; v < lps.size(); ++v) {
                cands.push_back({live[bi].lp + lps[v], int(v), bi});
            }
        }
        std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.lp != b.lp) {
                return a.lp > b.lp;
            }
            if (a.token != b.token) {
                return a.token < b.token;
            }
            return a.beam < b.beam;
        });
        std::vector<Beam> next;
        for (const Cand& c : cands) {
            if (next.size() >= width) {
                break;
            }
            if (c.token == Vocabulary::kEos) {
                finished.push_back({normalized(c.lp, step + 1), c.lp, live[c.beam].out});
                continue;
            }
            Beam nb = live[c.beam];
            nb.lp = c.lp;
            nb.out.push_back(c.token);
            nb.prefix.push(c.token, nb.tracker.assign(c.token));
            next.push_back(std::move(nb));
        }
        live = std::move(next);
        if (finished.size() >= width) {
            break;
        }
        // stop growing beams that hit the content or position budget
        std::vector<Beam> still;
        for (Beam& b : live) {
            if (b.out.size() >= max_len || b.prefix.size() >= pos_cap) {
                finished.push_back({normalized(b.lp, b.out.size()), b.lp, b.out});
            } else {
                still.push_back(std::move(b));
            }
        }
        live = std::move(still);
    }

    if (finished.empty()) {
        return {};
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < finished.size(); ++i) {
        if (finished[i].score > finished[best].score) {
            best = i;
        }
    }
    return finished[best].out;
}

}  // namespace commitlm
