#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "commitlm/hash.hpp"
#include "commitlm/model.hpp"

namespace commitlm {

namespace {

constexpr const char* kCkptVersion = "commitlm-ckpt-1";

void append_f32_le(std::string& out, float f) {
    const std::uint32_t u = std::bit_cast<std::uint32_t>(f);
    out.push_back(char(u & 0xFF));
    out.push_back(char((u >> 8) & 0xFF));
    out.push_back(char((u >> 16) & 0xFF));
    out.push_back(char((u >> 24) & 0xFF));
}

float read_f32_le(const char* p) {
    const auto* b = reinterpret_cast<const unsigned char*>(p);
    std::uint32_t u = std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
                      (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
    return std::bit_cast<float>(u);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw ModelError("cannot write " + tmp.string());
        }
        out.write(bytes.data(), std::streamsize(bytes.size()));
        if (!out) {
            throw ModelError("short write to " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace

void save_checkpoint(const ModelState& state, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);

    std::string blob;
    nlohmann::json table = nlohmann::json::object();
    auto emit = [&](const std::string& name, const std::vector<std::size_t>& shape,
                    const std::vector<float>& values) {
        const std::size_t offset = blob.size();
        for (float f : values) {
            append_f32_le(blob, f);
        }
        table[name] = {{"dtype", "f32"},
                       {"shape", shape},
                       {"offset", offset},
                       {"checksum", sha256_hex(std::string_view(blob).substr(offset))}};
    };
    for (const Tensor& t : state.tensors()) {
        emit(t.name, t.shape, t.w);
        emit(t.name + ".adam_m", t.shape, t.m);
        emit(t.name + ".adam_v", t.shape, t.v);
    }

    nlohmann::json manifest = {{"version", kCkptVersion},
                               {"config", nlohmann::json::parse(state.config().to_json())},
                               {"step", state.step()},
                               {"tensors", std::move(table)}};
    write_file_atomic(dir / "params.bin", blob);
    write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

ModelState load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) {
        throw CorruptFileError("missing manifest: " + (dir / "manifest.json").string());
    }
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFileError("unparseable manifest: " + std::string(e.what()));
    }
    if (manifest.value("version", "") != kCkptVersion) {
        throw VersionMismatchError("checkpoint version \"" +
                                   manifest.value("version", std::string("<missing>")) +
                                   "\" is not \"" + kCkptVersion + "\"");
    }

    std::ifstream bin(dir / "params.bin", std::ios::binary);
    if (!bin) {
        throw CorruptFileError("missing blob: " + (dir / "params.bin").string());
    }
    std::ostringstream buf;
    buf << bin.rdbuf();
    const std::string blob = buf.str();

    ModelConfig cfg = ModelConfig::from_json(manifest.at("config").dump());
    ModelState state = ModelState::init(cfg, 0);
    state.set_step(manifest.value("step", std::uint64_t{0}));

    const nlohmann::json& table = manifest.at("tensors");
    auto fill = [&](const std::string& name, std::vector<float>& dst) {
        if (!table.contains(name)) {
            throw CorruptFileError("tensor missing from manifest: " + name);
        }
        const nlohmann::json& entry = table.at(name);
        const std::size_t offset = entry.at("offset").get<std::size_t>();
        const std::size_t bytes = dst.size() * 4;
        if (offset + bytes > blob.size()) {
            throw CorruptFileError("blob too short for tensor " + name);
        }
        const std::string_view span = std::string_view(blob).substr(offset, bytes);
        if (sha256_hex(span) != entry.at("checksum").get<std::string>()) {
            throw CorruptFileError("checksum mismatch for tensor " + name);
        }
        for (std::size_t i = 0; i < dst.size(); ++i) {
            dst[i] = read_f32_le(span.data() + i * 4);
        }
    };
    for (Tensor& t : state.tensors()) {
        fill(t.name, t.w);
        fill(t.name + ".adam_m", t.m);
        fill(t.name + ".adam_v", t.v);
    }
    return state;
}

}  // namespace commitlm
