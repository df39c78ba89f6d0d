#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "commitlm/commit.hpp"
#include "commitlm/synthetic.hpp"
#include "commitlm/vocab.hpp"

using namespace commitlm;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> training_corpus(std::size_t commits = 60) {
    std::vector<std::string> texts;
    for (const CommitRecord& rec : synthetic_records({.count = commits})) {
        texts.push_back(render_git_show(rec));
    }
    return texts;
}

std::string random_utf8(std::mt19937_64& rng, int max_codepoints) {
    std::uniform_int_distribution<int> len_dist(0, max_codepoints);
    std::uniform_int_distribution<std::uint32_t> cp_dist(0, 0x10FFFF);
    std::string out;
    int n = len_dist(rng);
    for (int i = 0; i < n; ++i) {
        std::uint32_t cp = cp_dist(rng);
        if (cp >= 0xD800 && cp <= 0xDFFF) cp = 0x20;  // skip surrogates
        if (cp < 0x80) {
            out += static_cast<char>(cp);
        } else if (cp < 0x800) {
            out += static_cast<char>(0xC0 | (cp >> 6));
            out += static_cast<char>(0x80 | (cp & 0x3F));
        } else if (cp < 0x10000) {
            out += static_cast<char>(0xE0 | (cp >> 12));
            out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
            out += static_cast<char>(0x80 | (cp & 0x3F));
        } else {
            out += static_cast<char>(0xF0 | (cp >> 18));
            out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
            out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
            out += static_cast<char>(0x80 | (cp & 0x3F));
        }
    }
    return out;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool is_ws_byte(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace

TEST_CASE("id layout puts specials below bytes below merges") {
    CHECK(Vocabulary::kCls == 0);
    CHECK(Vocabulary::kFalse == 13);
    CHECK(Vocabulary::kByteBase == 14);
    CHECK(Vocabulary::kNumReserved == 270);
    CHECK(Vocabulary::is_special(Vocabulary::kEnd));
    CHECK(Vocabulary::is_special(Vocabulary::kSecurity));
    CHECK_FALSE(Vocabulary::is_special(Vocabulary::kByteBase));
    CHECK(Vocabulary::is_byte_derived(Vocabulary::kByteBase + 255));
    CHECK(Vocabulary::is_byte_derived(Vocabulary::kNumReserved));
    CHECK(Vocabulary::is_reserved(269));
    CHECK_FALSE(Vocabulary::is_reserved(270));
}

TEST_CASE("special token names are fixed") {
    CHECK(std::string(special_token_name(Vocabulary::kCls)) == "[CLS]");
    CHECK(std::string(special_token_name(Vocabulary::kMask)) == "[MASK]");
    CHECK(std::string(special_token_name(Vocabulary::kSecurity)) == "security");
    CHECK(std::string(special_token_name(Vocabulary::kPatch)) == "patch");
    CHECK(std::string(special_token_name(Vocabulary::kTrue)) == "True");
    CHECK(std::string(special_token_name(Vocabulary::kFalse)) == "False");
}

TEST_CASE("repeated letters merge first") {
    Vocabulary vocab = Vocabulary::train({"aaaa aaaa"}, Vocabulary::kNumReserved + 2);
    REQUIRE(vocab.merges().size() == 2);
    const int a = Vocabulary::kByteBase + static_cast<unsigned char>('a');
    CHECK(vocab.merges()[0] == std::pair<int, int>{a, a});  // "aa"
    std::vector<int> ids = vocab.encode("aaaa");
    REQUIRE(ids.size() == 1);
    CHECK(ids[0] == Vocabulary::kNumReserved + 1);  // "aa"+"aa"
    CHECK(vocab.decode_bytes(ids) == "aaaa");
}

TEST_CASE("untrained vocabulary encodes to raw bytes") {
    Vocabulary vocab;
    std::string text = "hi there";
    std::vector<int> ids = vocab.encode(text);
    REQUIRE(ids.size() == text.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        CHECK(ids[i] == Vocabulary::kByteBase + static_cast<unsigned char>(text[i]));
    }
    CHECK(vocab.decode_bytes(ids) == text);
}

TEST_CASE("a thousand random utf8 strings round trip losslessly") {
    Vocabulary vocab = Vocabulary::train(training_corpus(), 500);
    std::mt19937_64 rng(99);
    for (int i = 0; i < 1000; ++i) {
        std::string s = random_utf8(rng, 40);
        std::vector<int> ids = vocab.encode(s);
        CHECK(vocab.decode_bytes(ids) == s);
        for (int id : ids) {
            CHECK(Vocabulary::is_byte_derived(id));
        }
    }
}

TEST_CASE("arbitrary byte strings including invalid utf8 round trip") {
    Vocabulary vocab = Vocabulary::train(training_corpus(), 400);
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> byte_dist(0, 255);
    for (int i = 0; i < 200; ++i) {
        std::string s;
        for (int k = 0; k < 64; ++k) s += static_cast<char>(byte_dist(rng));
        CHECK(vocab.decode_bytes(vocab.encode(s)) == s);
    }
}

TEST_CASE("retraining on an identical corpus is byte identical on disk") {
    std::vector<std::string> corpus = training_corpus();
    Vocabulary a = Vocabulary::train(corpus, 450);
    Vocabulary b = Vocabulary::train(corpus, 450);
    CHECK(a.merges() == b.merges());

    fs::path pa = fs::temp_directory_path() / "commitlm_vocab_a.json";
    fs::path pb = fs::temp_directory_path() / "commitlm_vocab_b.json";
    a.save(pa);
    b.save(pb);
    CHECK(read_file(pa) == read_file(pb));
}

TEST_CASE("no learned token mixes whitespace with other bytes") {
    Vocabulary vocab = Vocabulary::train(training_corpus(), 600);
    CHECK(vocab.size() > Vocabulary::kNumReserved);
    for (int id = Vocabulary::kNumReserved; id < vocab.size(); ++id) {
        std::string bytes = vocab.decode_bytes(std::vector<int>{id});
        REQUIRE_FALSE(bytes.empty());
        bool first_ws = is_ws_byte(static_cast<unsigned char>(bytes[0]));
        for (char c : bytes) {
            CHECK(is_ws_byte(static_cast<unsigned char>(c)) == first_ws);
        }
    }
}

TEST_CASE("encode output concatenation partitions the input") {
    Vocabulary vocab = Vocabulary::train(training_corpus(), 500);
    std::string text = "def load_config(path):\n    return json.load(open(path))\n";
    std::vector<int> offsets;
    std::vector<int> ids = vocab.encode_with_offsets(text, offsets);
    REQUIRE(ids.size() == offsets.size());
    REQUIRE_FALSE(ids.empty());
    CHECK(offsets.back() == static_cast<int>(text.size()));
    int prev = 0;
    std::string rebuilt;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        CHECK(offsets[i] > prev);  // every token covers at least one byte
        rebuilt += text.substr(static_cast<std::size_t>(prev),
                               static_cast<std::size_t>(offsets[i] - prev));
        prev = offsets[i];
    }
    CHECK(rebuilt == text);
    CHECK(vocab.encode(text) == ids);
}

TEST_CASE("a tiny corpus sets the fewer merges warning") {
    Vocabulary vocab = Vocabulary::train({"ab"}, 1000);
    CHECK(vocab.fewer_merges_warning());
    CHECK(vocab.size() < 1000);
    CHECK(vocab.requested_size() == 1000);
    // Pairs seen only once are not worth a merge.
    CHECK(vocab.decode_bytes(vocab.encode("ab")) == "ab");
}

TEST_CASE("vocab size at or below the reserved count is rejected") {
    CHECK_THROWS_AS(Vocabulary::train({"text"}, Vocabulary::kNumReserved),
                    std::invalid_argument);
    CHECK_THROWS_AS(Vocabulary::train({"text"}, 0), std::invalid_argument);
    CHECK_THROWS_AS(Vocabulary::train({"text"}, -5), std::invalid_argument);
}

TEST_CASE("save and load preserve encoding behavior") {
    Vocabulary vocab = Vocabulary::train(training_corpus(), 500);
    fs::path p = fs::temp_directory_path() / "commitlm_vocab_rt.json";
    vocab.save(p);
    Vocabulary loaded = Vocabulary::load(p);
    CHECK(loaded.size() == vocab.size());
    CHECK(loaded.merges() == vocab.merges());
    std::string text = "update the parser for nested braces {\" }\"";
    CHECK(loaded.encode(text) == vocab.encode(text));

    // Saving the loaded copy reproduces the file byte for byte.
    fs::path p2 = fs::temp_directory_path() / "commitlm_vocab_rt2.json";
    loaded.save(p2);
    CHECK(read_file(p) == read_file(p2));
}

TEST_CASE("loading a corrupt or mismatched file throws") {
    fs::path dir = fs::temp_directory_path();
    fs::path missing = dir / "commitlm_vocab_missing.json";
    fs::remove(missing);
    CHECK_THROWS_AS(Vocabulary::load(missing), std::runtime_error);

    fs::path garbage = dir / "commitlm_vocab_garbage.json";
    std::ofstream(garbage) << "{not json";
    CHECK_THROWS(Vocabulary::load(garbage));

    fs::path wrong_version = dir / "commitlm_vocab_wrong.json";
    std::ofstream(wrong_version) << R"({"version":"commitlm-vocab-999","merges":[]})";
    CHECK_THROWS_AS(Vocabulary::load(wrong_version), std::runtime_error);
}

TEST_CASE("readable decode names specials and keeps byte text") {
    Vocabulary vocab;
    std::vector<int> ids = {Vocabulary::kCls};
    for (int id : vocab.encode("hi")) ids.push_back(id);
    ids.push_back(Vocabulary::kEos);
    CHECK(vocab.decode_readable(ids) == "[CLS] hi [EOS]");

    std::vector<int> spi = {Vocabulary::kCls, Vocabulary::kSecurity, Vocabulary::kPatch,
                            Vocabulary::kTrue, Vocabulary::kEos};
    CHECK(vocab.decode_readable(spi) == "[CLS] security patch True [EOS]");
    CHECK(vocab.decode_bytes(spi).empty());
}

TEST_CASE("token display covers specials bytes and merges") {
    Vocabulary vocab = Vocabulary::train({"aaaa aaaa"}, Vocabulary::kNumReserved + 1);
    CHECK(vocab.token_display(Vocabulary::kCls) == "[CLS]");
    CHECK(vocab.token_display(Vocabulary::kByteBase + 'x') == "x");
    CHECK(vocab.token_display(Vocabulary::kNumReserved) == "aa");
    CHECK(vocab.token_display(-1) == "?");
    CHECK(vocab.token_display(vocab.size()) == "?");
}
