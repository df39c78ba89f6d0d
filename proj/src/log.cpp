#include "commitlm/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <string>

namespace commitlm::log {

namespace {

Level parse_level() {
    const char* env = std::getenv("COMMITLM_LOG");
    if (env == nullptr) {
        return Level::Warn;
    }
    std::string v(env);
    if (v == "error") return Level::Error;
    if (v == "warn") return Level::Warn;
    if (v == "info") return Level::Info;
    if (v == "debug") return Level::Debug;
    return Level::Warn;
}

const char* tag(Level lvl) {
    switch (lvl) {
        case Level::Error: return "error";
        case Level::Warn: return "warn";
        case Level::Info: return "info";
        case Level::Debug: return "debug";
    }
    return "?";
}

}  // namespace

Level level() {
    static const Level lvl = parse_level();
    return lvl;
}

void emit(Level lvl, std::string_view msg) {
    if (static_cast<int>(lvl) > static_cast<int>(level())) {
        return;
    }
    std::fprintf(stderr, "[%s] %.*s\n", tag(lvl), static_cast<int>(msg.size()), msg.data());
}

}  // namespace commitlm::log
