#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace commitlm {

/// Byte-level BPE vocabulary with reserved special ids.
///
/// Id layout, fixed for every trained vocabulary:
///   [0..9]    structural specials: [CLS] [EOS] [MASK] [PAD] [MSG] [FILE]
///             [CODE] [NEG] [POS] [END]
///   [10..13]  reserved whole-word tokens: "security" "patch" "True" "False"
///   [14..269] the 256 byte symbols
///   [270..)   learned merges
///
/// Merges never cross a whitespace/non-whitespace piece boundary, so
/// encode/decode round-trips arbitrary byte strings losslessly and the
/// reserved ids can never be produced by merging.
class Vocabulary {
public:
    static constexpr int kCls = 0;
    static constexpr int kEos = 1;
    static constexpr int kMask = 2;
    static constexpr int kPad = 3;
    static constexpr int kMsg = 4;
    static constexpr int kFile = 5;
    static constexpr int kCode = 6;
    static constexpr int kNeg = 7;
    static constexpr int kPos = 8;
    static constexpr int kEnd = 9;
    static constexpr int kSecurity = 10;
    static constexpr int kPatch = 11;
    static constexpr int kTrue = 12;
    static constexpr int kFalse = 13;
    static constexpr int kByteBase = 14;
    static constexpr int kNumReserved = kByteBase + 256;

    Vocabulary();

    /// Trains merges on the given texts until `vocab_size` ids exist.
    /// Deterministic. If the corpus yields fewer merges than requested the
    /// achievable vocabulary is returned with `fewer_merges_warning()` set.
    static Vocabulary train(const std::vector<std::string>& corpus_texts, int vocab_size);

    std::vector<int> encode(std::string_view text) const;

    /// Like encode, but also reports each token's end byte offset in `text`.
    std::vector<int> encode_with_offsets(std::string_view text,
                                         std::vector<int>& end_offsets) const;

    /// Concatenates the byte strings of byte-derived tokens; reserved ids
    /// are skipped.
    std::string decode_bytes(std::span<const int> ids) const;

    /// Human-readable decode: byte tokens raw, reserved ids by name, with a
    /// separating space around non-byte tokens.
    std::string decode_readable(std::span<const int> ids) const;

    int size() const { return static_cast<int>(token_bytes_.size()); }
    int requested_size() const { return requested_size_; }
    bool fewer_merges_warning() const { return fewer_merges_warning_; }

    static bool is_reserved(int id) { return id >= 0 && id < kNumReserved; }
    static bool is_special(int id) { return id >= 0 && id < kByteBase; }
    static bool is_byte_derived(int id) { return id >= kByteBase; }

    /// Display string for any id ("[CLS]", "security", raw bytes, ...).
    std::string token_display(int id) const;

    void save(const std::filesystem::path& path) const;
    static Vocabulary load(const std::filesystem::path& path);

    const std::vector<std::pair<int, int>>& merges() const { return merges_; }

private:
    void rebuild_tables();
    std::vector<int> encode_piece(std::string_view piece) const;

    // byte string of every id; empty for reserved non-byte ids
    std::vector<std::string> token_bytes_;
    std::vector<std::pair<int, int>> merges_;
    std::unordered_map<std::uint64_t, int> merge_rank_;  // (l<<32|r) -> new id
    int requested_size_ = kNumReserved;
    bool fewer_merges_warning_ = false;
};

const char* special_token_name(int id);

}  // namespace commitlm
