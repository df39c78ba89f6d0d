#include "commitlm/synthetic.hpp"

#include <array>
#include <random>
#include <string>

namespace commitlm {

namespace {

const std::array<const char*, 7> kLanguages = {"C",   "CSharp", "Java",      "JavaScript",
                                               "PHP", "Python", "Typescript"};
const std::array<const char*, 7> kExtensions = {".c", ".cs", ".java", ".js", ".php", ".py", ".ts"};

const std::array<const char*, 8> kVerbs = {"load",   "save",   "merge", "parse",
                                           "filter", "update", "clamp", "encode"};
const std::array<const char*, 8> kNouns = {"buffer", "index",  "config", "token",
                                           "cache",  "window", "header", "stream"};
const std::array<const char*, 4> kRepos = {"acme/core", "octo/engine", "nova/tools",
                                           "zen/parser"};

std::string upper_first(std::string word) {
    if (!word.empty() && word[0] >= 'a' && word[0] <= 'z') {
        word[0] = static_cast<char>(word[0] - 'a' + 'A');
    }
    return word;
}

std::string hex_id(std::mt19937_64& rng) {
    static const char* digits = "0123456789abcdef";
    std::string id;
    for (int i = 0; i < 40; ++i) id.push_back(digits[rng() % 16]);
    return id;
}

}  // namespace

std::vector<LabeledCommit> make_synthetic_commits(const SyntheticOptions& opts) {
    std::mt19937_64 rng(opts.seed);
    std::vector<LabeledCommit> out;
    out.reserve(opts.count);

    for (std::size_t i = 0; i < opts.count; ++i) {
        const std::size_t lang = i % kLanguages.size();
        const bool camel = lang == 1 || lang == 2 || lang == 3 || lang == 6;
        const bool semi = lang != 5;  // everything but Python

        const std::string verb = kVerbs[rng() % kVerbs.size()];
        const std::string noun = kNouns[rng() % kNouns.size()];
        const std::string func = camel ? verb + upper_first(noun) : verb + "_" + noun;

        auto stmt = [&](const std::string& text) {
            return "    " + text + (semi ? ";" : "");
        };

        const bool security =
            static_cast<double>(rng() % 1000) < 1000.0 * opts.security_fraction;
        std::string message;
        if (security) {
            switch (rng() % 5) {
                case 0: message = "Fix buffer overflow in " + func; break;
                case 1: message = "Sanitize user input in " + func; break;
                case 2: message = "Apply security patch for " + func; break;
                case 3: message = "Harden " + func + " against overflow"; break;
                default: message = "Validate length before copy in " + func; break;
            }
        } else {
            switch (rng() % 5) {
                case 0: message = "Fix " + noun + " handling in " + func; break;
                case 1: message = "Update " + func + " to reset the " + noun; break;
                case 2: message = "Make " + func + " clamp the " + noun + " range"; break;
                case 3: message = "Refactor " + func + " for clearer " + noun + " checks"; break;
                default: message = "Add bounds check to " + func; break;
            }
        }

        CommitRecord record;
        record.repo = kRepos[rng() % kRepos.size()];
        record.commit_id = hex_id(rng);
        record.language = kLanguages[lang];
        record.message = message;

        auto make_hunk = [&](int variant, long start) {
            Hunk hunk;
            hunk.header_context =
                lang == 5 ? "def outer():" : "void outer()";
            std::vector<ChangedLine> lines;
            lines.push_back({LineKind::Context, stmt("value = " + noun + "[index]")});
            lines.push_back({LineKind::Context, stmt("count = count + 1")});
            if (variant != 1) {  // 1 = add-only
                lines.push_back({LineKind::Deleted, stmt("result = " + func + "(value)")});
            }
            if (variant != 2) {  // 2 = delete-only
                lines.push_back({LineKind::Added, stmt("result = " + func + "(value, limit)")});
                if (variant == 0 && rng() % 2 == 0) {
                    lines.push_back({LineKind::Added, stmt("check_range(result, limit)")});
                }
            }
            lines.push_back({LineKind::Context, stmt("store(result)")});
            lines.push_back({LineKind::Context, "    return result" + std::string(semi ? ";" : "")});

            long old_count = 0;
            long new_count = 0;
            for (const ChangedLine& line : lines) {
                if (line.kind != LineKind::Added) old_count += 1;
                if (line.kind != LineKind::Deleted) new_count += 1;
            }
            hunk.old_start = start;
            hunk.old_count = old_count;
            hunk.new_start = start;
            hunk.new_count = new_count;
            hunk.lines = std::move(lines);
            return hunk;
        };

        const std::size_t shape = rng() % 20;
        const long base = 10 + static_cast<long>(rng() % 80);
        if (shape < 14) {
            FileDiff file;
            file.path = "src/" + noun + kExtensions[lang];
            file.hunks.push_back(make_hunk(0, base));
            record.files.push_back(std::move(file));
        } else if (shape < 16) {
            FileDiff file;
            file.path = "src/" + noun + kExtensions[lang];
            Hunk first = make_hunk(0, base);
            long next = first.old_start + first.old_count + 4;
            file.hunks.push_back(std::move(first));
            file.hunks.push_back(make_hunk(0, next));
            record.files.push_back(std::move(file));
        } else if (shape == 16) {
            FileDiff a;
            a.path = "src/" + noun + kExtensions[lang];
            a.hunks.push_back(make_hunk(0, base));
            FileDiff b;
            b.path = "lib/" + verb + kExtensions[lang];
            b.hunks.push_back(make_hunk(0, base + 20));
            record.files.push_back(std::move(a));
            record.files.push_back(std::move(b));
        } else if (shape < 19) {
            FileDiff file;
            file.path = "src/" + noun + kExtensions[lang];
            file.hunks.push_back(make_hunk(1, base));
            record.files.push_back(std::move(file));
        } else {
            FileDiff file;
            file.path = "src/" + noun + kExtensions[lang];
            file.hunks.push_back(make_hunk(2, base));
            record.files.push_back(std::move(file));
        }

        out.push_back({std::move(record), security});
    }
    return out;
}

std::vector<CommitRecord> synthetic_records(const SyntheticOptions& opts) {
    std::vector<LabeledCommit> labeled = make_synthetic_commits(opts);
    std::vector<CommitRecord> records;
    records.reserve(labeled.size());
    for (LabeledCommit& lc : labeled) records.push_back(std::move(lc.record));
    return records;
}

}  // namespace commitlm
