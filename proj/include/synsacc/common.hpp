#pragma once

#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <string>

namespace synsacc {

inline constexpr const char* kVersion = "0.1.0";

/// Bad or inconsistent configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Broken, missing or inconsistent data files (CLI exit code 3).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numeric divergence during training (CLI exit code 4).
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace log {

enum class Level : int { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

inline Level& threshold() {
    static Level lvl = [] {
        const char* env = std::getenv("SYNSACC_LOG");
        if (!env) return Level::warn;
        if (std::strcmp(env, "debug") == 0) return Level::debug;
        if (std::strcmp(env, "info") == 0) return Level::info;
        if (std::strcmp(env, "warn") == 0) return Level::warn;
        if (std::strcmp(env, "error") == 0) return Level::error;
        if (std::strcmp(env, "off") == 0) return Level::off;
        return Level::warn;
    }();
    return lvl;
}

inline void emit(Level lvl, const char* tag, const char* fmt, va_list args) {
    if (lvl < threshold()) return;
    std::fprintf(stderr, "[synsacc %s] ", tag);
    std::vfprintf(stderr, fmt, args);
    std::fputc('\n', stderr);
}

#define SYNSACC_LOG_FN(name, level)                        \
    inline void name(const char* fmt, ...) {               \
        va_list args;                                      \
        va_start(args, fmt);                               \
        emit(level, #name, fmt, args);                     \
        va_end(args);                                      \
    }

SYNSACC_LOG_FN(debug, Level::debug)
SYNSACC_LOG_FN(info, Level::info)
SYNSACC_LOG_FN(warn, Level::warn)
SYNSACC_LOG_FN(error, Level::error)

#undef SYNSACC_LOG_FN

}  // namespace log

}  // namespace synsacc
