#include "commitlm/sequence.hpp"

#include <algorithm>

namespace commitlm {

namespace {

SegmentId seg_for_kind(LineKind kind) {
    switch (kind) {
        case LineKind::Context: return SegmentId::Ctx;
        case LineKind::Deleted: return SegmentId::Neg;
        case LineKind::Added: return SegmentId::Pos;
    }
    throw std::logic_error("unreachable line kind");
}

void check_length(const SegmentedSequence& seq, const BuildOptions& opts) {
    if (seq.size() > opts.max_length) {
        throw TooLongError(seq.size(), opts.max_length);
    }
}

bool has_change(const CommitRecord& record) {
    for (const FileDiff& file : record.files) {
        for (const Hunk& hunk : file.hunks) {
            for (const ChangedLine& line : hunk.lines) {
                if (line.kind != LineKind::Context) {
                    return true;
                }
            }
        }
    }
    return false;
}

}  // namespace

const char* segment_name(SegmentId seg) {
    switch (seg) {
        case SegmentId::Msg: return "msg";
        case SegmentId::File: return "file";
        case SegmentId::Ctx: return "ctx";
        case SegmentId::Neg: return "neg";
        case SegmentId::Pos: return "pos";
    }
    return "?";
}

SegmentId segment_from_int(int value) {
    if (value < 0 || value >= kNumSegments) {
        throw std::out_of_range("segment id out of range: " + std::to_string(value));
    }
    return static_cast<SegmentId>(value);
}

std::vector<MarkedPiece> serialize_commit(const CommitRecord& record) {
    std::vector<MarkedPiece> out;
    out.push_back(MarkedPiece::special(Vocabulary::kCls, SegmentId::Ctx));
    out.push_back(MarkedPiece::special(Vocabulary::kMsg, SegmentId::Msg));
    out.push_back(MarkedPiece::raw(record.message, SegmentId::Msg));
    for (const FileDiff& file : record.files) {
        out.push_back(MarkedPiece::special(Vocabulary::kFile, SegmentId::File));
        out.push_back(MarkedPiece::raw(file.path, SegmentId::File));
        out.push_back(MarkedPiece::special(Vocabulary::kCode, SegmentId::Ctx));
        for (const Hunk& hunk : file.hunks) {
            std::size_t i = 0;
            while (i < hunk.lines.size()) {
                LineKind kind = hunk.lines[i].kind;
                std::size_t j = i;
                while (j < hunk.lines.size() && hunk.lines[j].kind == kind) {
                    ++j;
                }
                SegmentId seg = seg_for_kind(kind);
                if (kind != LineKind::Context) {
                    int marker = kind == LineKind::Deleted ? Vocabulary::kNeg : Vocabulary::kPos;
                    out.push_back(MarkedPiece::special(marker, seg));
                }
                for (std::size_t k = i; k < j; ++k) {
                    out.push_back(MarkedPiece::raw(hunk.lines[k].text + "\n", seg));
                }
                if (kind != LineKind::Context) {
                    out.push_back(MarkedPiece::special(Vocabulary::kEnd, seg));
                }
                i = j;
            }
        }
    }
    return out;
}

SegmentedSequence encode_pieces(const std::vector<MarkedPiece>& pieces, const Vocabulary& vocab) {
    SegmentedSequence seq;
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        const MarkedPiece& piece = pieces[i];
        if (piece.kind == MarkedPiece::Kind::Special) {
            // [CLS] and [CODE] open whatever region follows them, so they
            // take the next piece's segment; region markers keep their own.
            SegmentId seg = piece.seg;
            if ((piece.special_id == Vocabulary::kCls || piece.special_id == Vocabulary::kCode) &&
                i + 1 < pieces.size()) {
                seg = pieces[i + 1].seg;
            }
            seq.push(piece.special_id, seg);
        } else {
            for (int id : vocab.encode(piece.text)) {
                seq.push(id, piece.seg);
            }
        }
    }
    return seq;
}

SegmentedSequence build_full_input(const CommitRecord& record, const Vocabulary& vocab,
                                   const BuildOptions& opts) {
    SegmentedSequence seq = encode_pieces(serialize_commit(record), vocab);
    check_length(seq, opts);
    return seq;
}

std::pair<SegmentedSequence, SegmentedSequence> build_pl2nl_pair(const CommitRecord& record,
                                                                 const Vocabulary& vocab,
                                                                 const BuildOptions& opts) {
    std::vector<MarkedPiece> pieces = serialize_commit(record);
    std::vector<MarkedPiece> input_pieces;
    input_pieces.reserve(pieces.size());
    for (const MarkedPiece& piece : pieces) {
        if (piece.seg != SegmentId::Msg) {
            input_pieces.push_back(piece);
        }
    }
    SegmentedSequence input = encode_pieces(input_pieces, vocab);
    check_length(input, opts);

    SegmentedSequence target;
    target.push(Vocabulary::kCls, SegmentId::Msg);
    for (int id : vocab.encode(record.message)) {
        target.push(id, SegmentId::Msg);
    }
    target.push(Vocabulary::kEos, SegmentId::Msg);
    check_length(target, opts);
    return {std::move(input), std::move(target)};
}

std::pair<SegmentedSequence, SegmentedSequence> build_plnl2pl_pair(const CommitRecord& record,
                                                                   const Vocabulary& vocab,
                                                                   const BuildOptions& opts) {
    if (!has_change(record)) {
        throw NoChangeError("commit has neither added nor deleted lines");
    }
    std::vector<MarkedPiece> pieces = serialize_commit(record);

    std::vector<MarkedPiece> input_pieces;   // everything except [POS] spans
    std::vector<MarkedPiece> target_pieces;  // code only, [POS] spans kept, [NEG] dropped
    for (const MarkedPiece& piece : pieces) {
        if (piece.seg != SegmentId::Pos) {
            input_pieces.push_back(piece);
        }
        bool is_marker = piece.kind == MarkedPiece::Kind::Special &&
                         (piece.special_id == Vocabulary::kCls ||
                          piece.special_id == Vocabulary::kMsg ||
                          piece.special_id == Vocabulary::kFile ||
                          piece.special_id == Vocabulary::kCode);
        bool is_code = piece.seg == SegmentId::Ctx || piece.seg == SegmentId::Pos;
        if (is_code && !is_marker) {
            target_pieces.push_back(piece);
        }
    }
    SegmentedSequence input = encode_pieces(input_pieces, vocab);
    check_length(input, opts);

    SegmentedSequence body = encode_pieces(target_pieces, vocab);
    SegmentedSequence target;
    target.push(Vocabulary::kCls, body.size() ? body.segs.front() : SegmentId::Ctx);
    for (std::size_t i = 0; i < body.size(); ++i) {
        target.push(body.ids[i], body.segs[i]);
    }
    target.push(Vocabulary::kEos, body.size() ? body.segs.back() : SegmentId::Ctx);
    check_length(target, opts);
    return {std::move(input), std::move(target)};
}

void truncate_tail_context(SegmentedSequence& seq, std::size_t max_length) {
    if (seq.size() <= max_length) {
        return;
    }
    std::size_t excess = seq.size() - max_length;
    // mark droppable context tokens, latest first
    std::vector<bool> drop(seq.size(), false);
    for (std::size_t i = seq.size(); i-- > 0 && excess > 0;) {
        bool droppable = seq.segs[i] == SegmentId::Ctx && seq.ids[i] != Vocabulary::kCls &&
                         seq.ids[i] != Vocabulary::kCode;
        if (droppable) {
            drop[i] = true;
            --excess;
        }
    }
    if (excess > 0) {
        throw TooLongError(seq.size(), max_length);
    }
    std::size_t out = 0;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (!drop[i]) {
            seq.ids[out] = seq.ids[i];
            seq.segs[out] = seq.segs[i];
            ++out;
        }
    }
    seq.ids.resize(out);
    seq.segs.resize(out);
    seq.truncated = true;
}

namespace {

// splits decoded region text into lines, dropping the final empty remainder
std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string current;
    for (char c : text) {
        if (c == '\n') {
            lines.push_back(current);
            current.clear();
        } else {
            current += c;
        }
    }
    if (!current.empty()) {
        lines.push_back(current);
    }
    return lines;
}

LineKind kind_for_seg(SegmentId seg) {
    switch (seg) {
        case SegmentId::Neg: return LineKind::Deleted;
        case SegmentId::Pos: return LineKind::Added;
        default: return LineKind::Context;
    }
}

}  // namespace

ParsedCommit parse_sequence(const SegmentedSequence& seq, const Vocabulary& vocab) {
    if (seq.ids.size() != seq.segs.size()) {
        throw MalformedSequenceError("token/segment lists differ in length");
    }
    if (seq.ids.empty() || seq.ids[0] != Vocabulary::kCls) {
        throw MalformedSequenceError("sequence does not start with [CLS]");
    }

    ParsedCommit out;
    out.truncated = seq.truncated;

    enum class Mode { Top, Message, Path, Code };
    Mode mode = Mode::Top;
    bool span_open = false;
    SegmentId span_seg = SegmentId::Ctx;
    std::vector<int> text_buf;  // pending byte tokens of the current region

    auto flush_code_region = [&](SegmentId seg) {
        if (text_buf.empty()) {
            return;
        }
        if (out.files.empty()) {
            // a builder target without file markers: treat as one anonymous file
            out.files.push_back({});
        }
        ParsedRegion region{kind_for_seg(seg),
                            split_lines(vocab.decode_bytes(text_buf))};
        out.files.back().regions.push_back(std::move(region));
        text_buf.clear();
    };
    auto flush_text = [&]() {
        if (mode == Mode::Message) {
            out.message += vocab.decode_bytes(text_buf);
            text_buf.clear();
        } else if (mode == Mode::Path) {
            out.files.back().path = vocab.decode_bytes(text_buf);
            text_buf.clear();
        } else if (!text_buf.empty()) {
            flush_code_region(span_open ? span_seg : SegmentId::Ctx);
        }
    };
    auto malformed = [&](const std::string& what) -> bool {
        if (seq.truncated) {
            out.truncated = true;
            return true;  // tolerate: stop consuming
        }
        throw MalformedSequenceError(what);
    };

    for (std::size_t i = 1; i < seq.size(); ++i) {
        int id = seq.ids[i];
        SegmentId seg = seq.segs[i];
        if (Vocabulary::is_byte_derived(id)) {
            if (mode == Mode::Top) {
                // content without a leading marker (generation targets)
                mode = seg == SegmentId::Msg ? Mode::Message : Mode::Code;
            }
            text_buf.push_back(id);
            continue;
        }
        switch (id) {
            case Vocabulary::kMsg:
                flush_text();
                mode = Mode::Message;
                break;
            case Vocabulary::kFile:
                if (span_open) {
                    if (malformed("[FILE] inside an open span")) return out;
                }
                flush_text();
                mode = Mode::Path;
                out.files.push_back({});
                break;
            case Vocabulary::kCode:
                if (mode != Mode::Path || out.files.empty()) {
                    if (malformed("[CODE] without a preceding [FILE]")) return out;
                }
                flush_text();
                mode = Mode::Code;
                break;
            case Vocabulary::kNeg:
            case Vocabulary::kPos:
                if (span_open) {
                    if (malformed("span identifier inside an open span")) return out;
                }
                flush_text();
                mode = Mode::Code;
                span_open = true;
                span_seg = id == Vocabulary::kNeg ? SegmentId::Neg : SegmentId::Pos;
                break;
            case Vocabulary::kEnd:
                if (!span_open) {
                    if (malformed("[END] without an open span")) return out;
                    break;
                }
                flush_code_region(span_seg);
                span_open = false;
                break;
            case Vocabulary::kEos:
                flush_text();
                if (span_open) {
                    if (malformed("[EOS] inside an open span")) return out;
                }
                i = seq.size();  // stop
                break;
            case Vocabulary::kSecurity:
            case Vocabulary::kPatch:
            case Vocabulary::kTrue:
            case Vocabulary::kFalse: {
                // whole-word reserved tokens act as plain text
                if (mode == Mode::Top) {
                    mode = seg == SegmentId::Msg ? Mode::Message : Mode::Code;
                }
                for (char c : std::string_view(special_token_name(id))) {
                    text_buf.push_back(Vocabulary::kByteBase +
                                       static_cast<unsigned char>(c));
                }
                break;
            }
            default:
                if (malformed(std::string("unexpected token ") + vocab.token_display(id))) {
                    return out;
                }
        }
    }
    if (span_open) {
        if (!seq.truncated) {
            throw MalformedSequenceError("span identifier never closed by [END]");
        }
        out.truncated = true;
    }
    flush_text();
    return out;
}

}  // namespace commitlm
