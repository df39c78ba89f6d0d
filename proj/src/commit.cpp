#include "commitlm/commit.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>

#include "commitlm/log.hpp"

namespace commitlm {

namespace {

bool starts_with(std::string_view s, std::string_view prefix) {
    return s.substr(0, prefix.size()) == prefix;
}

bool is_ascii_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string_view trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_ascii_space(s[b])) ++b;
    while (e > b && is_ascii_space(s[e - 1])) --e;
    return s.substr(b, e - b);
}

// Parses a non-negative decimal integer starting at `pos`; advances `pos`.
bool parse_int(std::string_view s, std::size_t& pos, int& out) {
    if (pos >= s.size() || !std::isdigit(static_cast<unsigned char>(s[pos]))) {
        return false;
    }
    std::int64_t v = 0;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
        v = v * 10 + (s[pos] - '0');
        if (v > 2'000'000'000) {
            return false;
        }
        ++pos;
    }
    out = static_cast<int>(v);
    return true;
}

// Metadata lines git emits between "diff --git" and the actual hunks.
bool is_diff_metadata(std::string_view line) {
    return starts_with(line, "index ") || starts_with(line, "old mode") ||
           starts_with(line, "new mode") || starts_with(line, "new file mode") ||
           starts_with(line, "deleted file mode") || starts_with(line, "similarity index") ||
           starts_with(line, "dissimilarity index") || starts_with(line, "rename from") ||
           starts_with(line, "rename to") || starts_with(line, "copy from") ||
           starts_with(line, "copy to") || starts_with(line, "mode ");
}

bool is_binary_marker(std::string_view line) {
    return starts_with(line, "Binary files ") || starts_with(line, "GIT binary patch");
}

std::string strip_path_prefix(std::string_view p) {
    if (starts_with(p, "a/") || starts_with(p, "b/")) {
        p = p.substr(2);
    }
    return std::string(trim(p));
}

struct LineCursor {
    std::string_view text;
    std::size_t pos = 0;

    bool done() const { return pos >= text.size(); }

    // Returns the next line without its terminator; `offset` is its byte offset.
    std::string_view next(std::size_t& offset) {
        offset = pos;
        std::size_t nl = text.find('\n', pos);
        std::string_view line;
        if (nl == std::string_view::npos) {
            line = text.substr(pos);
            pos = text.size();
        } else {
            line = text.substr(pos, nl - pos);
            pos = nl + 1;
        }
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        return line;
    }
};

}  // namespace

Hunk parse_hunk_header(std::string_view line) {
    const auto fail = [&] {
        throw MalformedHeaderError("malformed hunk header: " + std::string(line));
    };
    if (!starts_with(line, "@@ -")) fail();
    std::size_t pos = 4;
    Hunk h;
    if (!parse_int(line, pos, h.old_start)) fail();
    h.old_count = 1;
    if (pos < line.size() && line[pos] == ',') {
        ++pos;
        if (!parse_int(line, pos, h.old_count)) fail();
    }
    if (!starts_with(line.substr(pos), " +")) fail();
    pos += 2;
    if (!parse_int(line, pos, h.new_start)) fail();
    h.new_count = 1;
    if (pos < line.size() && line[pos] == ',') {
        ++pos;
        if (!parse_int(line, pos, h.new_count)) fail();
    }
    if (!starts_with(line.substr(pos), " @@")) fail();
    pos += 3;
    if (pos < line.size()) {
        if (line[pos] != ' ') fail();
        h.header_context = std::string(line.substr(pos + 1));
    }
    return h;
}

std::vector<FileDiff> parse_unified_diff(std::string_view text) {
    std::vector<FileDiff> files;
    LineCursor cur{text};

    FileDiff* open_file = nullptr;   // file currently accepting hunks
    bool skipping_binary = false;    // current file block is binary / metadata-only
    Hunk pending;                    // hunk being filled
    int remaining_old = 0;
    int remaining_new = 0;
    bool in_hunk = false;

    const auto close_hunk = [&](std::size_t offset) {
        if (!in_hunk) return;
        if (remaining_old != 0 || remaining_new != 0) {
            throw MalformedDiffError("hunk shorter than its declared counts", offset);
        }
        if (!open_file->hunks.empty() && open_file->hunks.back().old_start > pending.old_start) {
            throw MalformedDiffError("hunks out of order", offset);
        }
        open_file->hunks.push_back(std::move(pending));
        pending = Hunk{};
        in_hunk = false;
    };

    while (!cur.done()) {
        std::size_t offset = 0;
        std::string_view line = cur.next(offset);

        if (in_hunk && (remaining_old > 0 || remaining_new > 0)) {
            if (starts_with(line, "\\")) {
                continue;  // "\ No newline at end of file"
            }
            char marker = line.empty() ? ' ' : line[0];
            std::string_view body = line.empty() ? line : line.substr(1);
            switch (marker) {
                case ' ':
                    pending.lines.push_back({LineKind::Context, std::string(body)});
                    --remaining_old;
                    --remaining_new;
                    break;
                case '-':
                    pending.lines.push_back({LineKind::Deleted, std::string(body)});
                    --remaining_old;
                    break;
                case '+':
                    pending.lines.push_back({LineKind::Added, std::string(body)});
                    --remaining_new;
                    break;
                default:
                    throw MalformedDiffError("unexpected line inside hunk", offset);
            }
            if (remaining_old < 0 || remaining_new < 0) {
                throw MalformedDiffError("hunk longer than its declared counts", offset);
            }
            continue;
        }
        close_hunk(offset);

        if (line.empty()) {
            continue;
        }
        if (starts_with(line, "\\")) {
            continue;
        }
        if (starts_with(line, "diff --git ")) {
            open_file = nullptr;
            skipping_binary = false;
            continue;
        }
        if (is_diff_metadata(line)) {
            continue;
        }
        if (is_binary_marker(line)) {
            log::warn("skipping binary/mode-only diff entry: " + std::string(line));
            open_file = nullptr;
            skipping_binary = true;
            continue;
        }
        if (starts_with(line, "--- ")) {
            std::string old_path = strip_path_prefix(line.substr(4));
            std::size_t plus_offset = 0;
            if (cur.done()) {
                throw MalformedDiffError("missing +++ line after ---", offset);
            }
            std::string_view plus = cur.next(plus_offset);
            if (!starts_with(plus, "+++ ")) {
                throw MalformedDiffError("missing +++ line after ---", plus_offset);
            }
            std::string new_path = strip_path_prefix(plus.substr(4));
            std::string path = (new_path == "/dev/null") ? old_path : new_path;
            if (path.empty() || path == "/dev/null") {
                throw MalformedDiffError("file header without a usable path", offset);
            }
            files.push_back(FileDiff{std::move(path), {}});
            open_file = &files.back();
            skipping_binary = false;
            continue;
        }
        if (starts_with(line, "@@")) {
            if (open_file == nullptr) {
                throw MalformedDiffError("hunk header outside a file section", offset);
            }
            pending = parse_hunk_header(line);
            remaining_old = pending.old_count;
            remaining_new = pending.new_count;
            in_hunk = remaining_old > 0 || remaining_new > 0;
            if (!in_hunk) {
                open_file->hunks.push_back(pending);
                pending = Hunk{};
            }
            continue;
        }
        if (skipping_binary) {
            continue;
        }
        throw MalformedDiffError("unrecognized line outside hunk: " + std::string(line), offset);
    }
    close_hunk(text.size());

    // Drop file entries that ended up hunk-less (binary or metadata-only blocks).
    std::erase_if(files, [](const FileDiff& f) { return f.hunks.empty(); });
    return files;
}

CommitRecord parse_git_show(std::string_view text) {
    LineCursor cur{text};
    std::size_t offset = 0;

    // Header: first non-blank line must be "commit <id>".
    std::string_view line;
    do {
        if (cur.done()) {
            throw MalformedCommitError("missing commit header");
        }
        line = cur.next(offset);
    } while (trim(line).empty());
    if (!starts_with(line, "commit ")) {
        throw MalformedCommitError("missing commit header");
    }
    CommitRecord record;
    record.commit_id = std::string(trim(line.substr(7)));
    if (record.commit_id.empty()) {
        throw MalformedCommitError("empty commit id");
    }

    // Skip remaining header lines (Author:, Date:, ...) up to the first blank.
    while (!cur.done()) {
        std::size_t peek = cur.pos;
        line = cur.next(offset);
        if (trim(line).empty()) {
            break;
        }
        if (starts_with(line, "diff --git ") || starts_with(line, "--- ")) {
            cur.pos = peek;  // headerless dump: diff follows immediately
            break;
        }
    }

    // Message block: indented lines until the diff starts at column 0.
    std::vector<std::string> message_lines;
    std::size_t diff_start = text.size();
    while (!cur.done()) {
        std::size_t peek = cur.pos;
        line = cur.next(offset);
        if (starts_with(line, "diff --git ") || starts_with(line, "--- ")) {
            diff_start = peek;
            break;
        }
        std::string_view body = line;
        if (starts_with(body, "    ")) {
            body = body.substr(4);
        }
        message_lines.emplace_back(body);
    }
    while (!message_lines.empty() && trim(message_lines.back()).empty()) {
        message_lines.pop_back();
    }
    std::string message;
    for (std::size_t i = 0; i < message_lines.size(); ++i) {
        if (i > 0) message += '\n';
        message += message_lines[i];
    }
    record.message = std::move(message);

    record.files = parse_unified_diff(text.substr(diff_start));
    if (record.files.empty()) {
        throw MalformedCommitError("commit has no diff section");
    }
    return record;
}

std::string extract_first_sentence(std::string_view message) {
    std::size_t end = message.size();
    for (std::size_t i = 0; i < message.size(); ++i) {
        char c = message[i];
        if (c == '\n') {
            end = i;
            break;
        }
        if (c == '.' || c == '!' || c == '?') {
            if (i + 1 == message.size() || is_ascii_space(message[i + 1])) {
                end = i + 1;
                break;
            }
        }
    }
    return std::string(trim(message.substr(0, end)));
}

namespace {

// Decodes one UTF-8 codepoint; returns 0xFFFD and advances by one on bad input.
std::uint32_t decode_utf8(std::string_view s, std::size_t& i) {
    unsigned char b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    int len = 0;
    std::uint32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        ++i;
        return 0xFFFD;
    }
    if (i + len > s.size()) {
        ++i;
        return 0xFFFD;
    }
    for (int k = 1; k < len; ++k) {
        unsigned char b = static_cast<unsigned char>(s[i + k]);
        if ((b & 0xC0) != 0x80) {
            ++i;
            return 0xFFFD;
        }
        cp = (cp << 6) | (b & 0x3F);
    }
    i += len;
    return cp;
}

bool in_range(std::uint32_t cp, std::uint32_t lo, std::uint32_t hi) {
    return cp >= lo && cp <= hi;
}

// Letter classification by Unicode block; coarse on purpose.
bool is_nonascii_letter(std::uint32_t cp) {
    if (cp == 0xAA || cp == 0xB5 || cp == 0xBA) return true;
    if (in_range(cp, 0xC0, 0xFF)) return cp != 0xD7 && cp != 0xF7;
    return in_range(cp, 0x100, 0x2AF) ||    // Latin extended, IPA
           in_range(cp, 0x370, 0x3FF) ||    // Greek
           in_range(cp, 0x400, 0x52F) ||    // Cyrillic
           in_range(cp, 0x531, 0x58F) ||    // Armenian
           in_range(cp, 0x5D0, 0x5EA) ||    // Hebrew
           in_range(cp, 0x600, 0x6FF) ||    // Arabic
           in_range(cp, 0x900, 0xDFF) ||    // Indic blocks
           in_range(cp, 0xE01, 0xE5B) ||    // Thai
           in_range(cp, 0x10A0, 0x10FF) ||  // Georgian
           in_range(cp, 0x1100, 0x11FF) ||  // Hangul jamo
           in_range(cp, 0x1E00, 0x1FFF) ||  // Latin/Greek extended additional
           in_range(cp, 0x3040, 0x30FF) ||  // Kana
           in_range(cp, 0x3130, 0x318F) ||  // Hangul compatibility
           in_range(cp, 0x3400, 0x4DBF) ||  // CJK ext A
           in_range(cp, 0x4E00, 0x9FFF) ||  // CJK unified
           in_range(cp, 0xA000, 0xA4CF) ||  // Yi
           in_range(cp, 0xAC00, 0xD7A3) ||  // Hangul syllables
           in_range(cp, 0xF900, 0xFAFF) ||  // CJK compatibility
           in_range(cp, 0xFF21, 0xFF3A) || in_range(cp, 0xFF41, 0xFF5A) ||  // fullwidth latin
           in_range(cp, 0xFF66, 0xFFDC) ||  // halfwidth kana
           in_range(cp, 0x20000, 0x2FA1F);  // CJK ext B..F
}

}  // namespace

bool is_english(std::string_view message) {
    std::uint64_t latin = 0;
    std::uint64_t letters = 0;
    std::size_t i = 0;
    while (i < message.size()) {
        std::uint32_t cp = decode_utf8(message, i);
        if (cp < 0x80) {
            if (std::isalpha(static_cast<int>(cp))) {
                ++latin;
                ++letters;
            }
        } else if (is_nonascii_letter(cp)) {
            ++letters;
        }
    }
    if (letters == 0) {
        return false;
    }
    return 10 * latin >= 9 * letters;
}

bool is_consecutive_modification(const CommitRecord& record) {
    if (record.files.size() != 1 || record.files[0].hunks.size() != 1) {
        return false;
    }
    const Hunk& h = record.files[0].hunks[0];
    bool any_change = false;
    for (LineKind kind : {LineKind::Added, LineKind::Deleted}) {
        int runs = 0;
        bool in_run = false;
        for (const ChangedLine& line : h.lines) {
            if (line.kind == kind) {
                if (!in_run) {
                    ++runs;
                    in_run = true;
                }
                any_change = true;
            } else {
                in_run = false;
            }
        }
        if (runs > 1) {
            return false;
        }
    }
    return any_change;
}

std::string render_unified_diff(const std::vector<FileDiff>& files) {
    std::string out;
    for (const FileDiff& f : files) {
        out += "--- a/" + f.path + "\n";
        out += "+++ b/" + f.path + "\n";
        for (const Hunk& h : f.hunks) {
            out += "@@ -" + std::to_string(h.old_start) + "," + std::to_string(h.old_count) +
                   " +" + std::to_string(h.new_start) + "," + std::to_string(h.new_count) + " @@";
            if (!h.header_context.empty()) {
                out += " " + h.header_context;
            }
            out += "\n";
            for (const ChangedLine& line : h.lines) {
                switch (line.kind) {
                    case LineKind::Context: out += ' '; break;
                    case LineKind::Deleted: out += '-'; break;
                    case LineKind::Added: out += '+'; break;
                }
                out += line.text;
                out += '\n';
            }
        }
    }
    return out;
}

std::string render_git_show(const CommitRecord& record) {
    std::string out = "commit " + record.commit_id + "\n\n";
    std::string_view msg = record.message;
    std::size_t start = 0;
    while (true) {
        std::size_t nl = msg.find('\n', start);
        std::string_view line = msg.substr(start, nl == std::string_view::npos ? msg.size() - start
                                                                               : nl - start);
        if (line.empty()) {
            out += "\n";
        } else {
            out += "    ";
            out += line;
            out += "\n";
        }
        if (nl == std::string_view::npos) break;
        start = nl + 1;
    }
    out += "\n";
    out += render_unified_diff(record.files);
    return out;
}

}  // namespace commitlm
