#include "commitlm/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "commitlm/log.hpp"

namespace commitlm {

namespace {

constexpr const char* kSpecialNames[Vocabulary::kByteBase] = {
    "[CLS]", "[EOS]", "[MASK]", "[PAD]", "[MSG]", "[FILE]", "[CODE]",
    "[NEG]", "[POS]", "[END]", "security", "patch", "True", "False",
};

constexpr const char* kVocabVersion = "commitlm-vocab-1";

bool is_ws_byte(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::uint64_t pair_key(int l, int r) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(l)) << 32) |
           static_cast<std::uint32_t>(r);
}

// Splits into maximal runs of whitespace / non-whitespace bytes.
std::vector<std::string_view> split_pieces(std::string_view text) {
    std::vector<std::string_view> pieces;
    std::size_t i = 0;
    while (i < text.size()) {
        bool ws = is_ws_byte(static_cast<unsigned char>(text[i]));
        std::size_t j = i + 1;
        while (j < text.size() && is_ws_byte(static_cast<unsigned char>(text[j])) == ws) {
            ++j;
        }
        pieces.push_back(text.substr(i, j - i));
        i = j;
    }
    return pieces;
}

}  // namespace

const char* special_token_name(int id) {
    if (id < 0 || id >= Vocabulary::kByteBase) {
        return "?";
    }
    return kSpecialNames[id];
}

Vocabulary::Vocabulary() {
    token_bytes_.resize(kNumReserved);
    for (int b = 0; b < 256; ++b) {
        token_bytes_[kByteBase + b] = std::string(1, static_cast<char>(b));
    }
}

void Vocabulary::rebuild_tables() {
    merge_rank_.clear();
    token_bytes_.resize(kNumReserved);
    for (std::size_t r = 0; r < merges_.size(); ++r) {
        auto [l, rgt] = merges_[r];
        int id = kNumReserved + static_cast<int>(r);
        if (l < kByteBase || rgt < kByteBase || l >= id || rgt >= id) {
            throw std::runtime_error("vocabulary merge refers to an invalid id");
        }
        token_bytes_.push_back(token_bytes_[l] + token_bytes_[rgt]);
        merge_rank_[pair_key(l, rgt)] = id;
    }
}

Vocabulary Vocabulary::train(const std::vector<std::string>& corpus_texts, int vocab_size) {
    if (vocab_size <= kNumReserved) {
        throw std::invalid_argument("vocab_size must exceed the reserved id count");
    }
    Vocabulary vocab;
    vocab.requested_size_ = vocab_size;

    // Piece -> frequency, in deterministic byte order.
    std::map<std::string, std::uint64_t> piece_counts;
    for (const std::string& text : corpus_texts) {
        for (std::string_view piece : split_pieces(text)) {
            ++piece_counts[std::string(piece)];
        }
    }

    struct Word {
        std::vector<int> symbols;
        std::uint64_t count;
    };
    std::vector<Word> words;
    words.reserve(piece_counts.size());
    for (const auto& [piece, count] : piece_counts) {
        Word w;
        w.count = count;
        w.symbols.reserve(piece.size());
        for (unsigned char c : piece) {
            w.symbols.push_back(kByteBase + c);
        }
        words.push_back(std::move(w));
    }

    const int merges_wanted = vocab_size - kNumReserved;
    for (int round = 0; round < merges_wanted; ++round) {
        // Count all adjacent pairs; ties resolved by smallest (left, right).
        std::map<std::pair<int, int>, std::uint64_t> pair_counts;
        for (const Word& w : words) {
            for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
                pair_counts[{w.symbols[i], w.symbols[i + 1]}] += w.count;
            }
        }
        if (pair_counts.empty()) {
            vocab.fewer_merges_warning_ = true;
            break;
        }
        std::pair<int, int> best{};
        std::uint64_t best_count = 0;
        for (const auto& [pair, count] : pair_counts) {
            if (count > best_count) {
                best = pair;
                best_count = count;
            }
        }
        if (best_count < 2) {
            vocab.fewer_merges_warning_ = true;
            break;
        }

        const int new_id = kNumReserved + static_cast<int>(vocab.merges_.size());
        vocab.merges_.push_back(best);
        for (Word& w : words) {
            std::size_t out = 0;
            for (std::size_t i = 0; i < w.symbols.size(); ++i) {
                if (i + 1 < w.symbols.size() && w.symbols[i] == best.first &&
                    w.symbols[i + 1] == best.second) {
                    w.symbols[out++] = new_id;
                    ++i;
                } else {
                    w.symbols[out++] = w.symbols[i];
                }
            }
            w.symbols.resize(out);
        }
    }

    if (vocab.fewer_merges_warning_) {
        log::warn("corpus too small for requested vocabulary: " +
                  std::to_string(kNumReserved + vocab.merges_.size()) + " of " +
                  std::to_string(vocab_size) + " ids derivable");
    }
    vocab.rebuild_tables();
    return vocab;
}

std::vector<int> Vocabulary::encode_piece(std::string_view piece) const {
    std::vector<int> symbols;
    symbols.reserve(piece.size());
    for (unsigned char c : piece) {
        symbols.push_back(kByteBase + c);
    }
    // Apply the lowest-ranked applicable merge until none match.
    while (symbols.size() > 1) {
        int best_id = -1;
        std::size_t best_pos = 0;
        for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
            auto it = merge_rank_.find(pair_key(symbols[i], symbols[i + 1]));
            if (it != merge_rank_.end() && (best_id == -1 || it->second < best_id)) {
                best_id = it->second;
                best_pos = i;
            }
        }
        if (best_id == -1) {
            break;
        }
        symbols[best_pos] = best_id;
        symbols.erase(symbols.begin() + static_cast<std::ptrdiff_t>(best_pos) + 1);
    }
    return symbols;
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
    std::vector<int> out;
    for (std::string_view piece : split_pieces(text)) {
        std::vector<int> ids = encode_piece(piece);
        out.insert(out.end(), ids.begin(), ids.end());
    }
    return out;
}

std::vector<int> Vocabulary::encode_with_offsets(std::string_view text,
                                                 std::vector<int>& end_offsets) const {
    std::vector<int> out;
    end_offsets.clear();
    int offset = 0;
    for (std::string_view piece : split_pieces(text)) {
        for (int id : encode_piece(piece)) {
            offset += static_cast<int>(token_bytes_[static_cast<std::size_t>(id)].size());
            out.push_back(id);
            end_offsets.push_back(offset);
        }
    }
    return out;
}

std::string Vocabulary::decode_bytes(std::span<const int> ids) const {
    std::string out;
    for (int id : ids) {
        if (is_byte_derived(id) && id < size()) {
            out += token_bytes_[static_cast<std::size_t>(id)];
        }
    }
    return out;
}

std::string Vocabulary::decode_readable(std::span<const int> ids) const {
    std::string out;
    bool last_was_reserved = false;
    for (int id : ids) {
        if (is_byte_derived(id)) {
            if (last_was_reserved && !out.empty()) {
                out += ' ';
            }
            out += token_bytes_[static_cast<std::size_t>(id)];
            last_was_reserved = false;
        } else {
            if (!out.empty()) {
                out += ' ';
            }
            out += special_token_name(id);
            last_was_reserved = true;
        }
    }
    return out;
}

std::string Vocabulary::token_display(int id) const {
    if (is_special(id)) {
        return special_token_name(id);
    }
    if (id >= 0 && id < size()) {
        return token_bytes_[static_cast<std::size_t>(id)];
    }
    return "?";
}

void Vocabulary::save(const std::filesystem::path& path) const {
    nlohmann::json merges = nlohmann::json::array();
    for (const auto& [l, r] : merges_) {
        merges.push_back({l, r});
    }
    nlohmann::json specials = nlohmann::json::array();
    for (int i = 0; i < kByteBase; ++i) {
        specials.push_back(kSpecialNames[i]);
    }
    nlohmann::json manifest = {{"version", kVocabVersion},
                               {"requested_size", requested_size_},
                               {"size", size()},
                               {"fewer_merges_warning", fewer_merges_warning_},
                               {"specials", std::move(specials)},
                               {"merges", std::move(merges)}};
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write vocabulary: " + path.string());
    }
    out << manifest.dump(2) << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open vocabulary: " + path.string());
    }
    nlohmann::json manifest = nlohmann::json::parse(in);
    if (manifest.value("version", "") != kVocabVersion) {
        throw std::runtime_error("unsupported vocabulary version in " + path.string());
    }
    Vocabulary vocab;
    vocab.requested_size_ = manifest.value("requested_size", kNumReserved);
    vocab.fewer_merges_warning_ = manifest.value("fewer_merges_warning", false);
    for (const auto& m : manifest.at("merges")) {
        vocab.merges_.emplace_back(m.at(0).get<int>(), m.at(1).get<int>());
    }
    vocab.rebuild_tables();
    return vocab;
}

}  // namespace commitlm
