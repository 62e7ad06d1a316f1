#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cussp {

// Error taxonomy shared by all modules. Everything user-facing derives from
// Error so the CLI can map failures to exit codes in one place.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ParseError : Error {
    ParseError(const std::string& msg, int line = -1)
        : Error(line >= 0 ? "parse error at line " + std::to_string(line) + ": " + msg : "parse error: " + msg),
          line_number(line) {}
    int line_number;
};

struct ValidationError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

inline uint64_t fnv1a64(std::string_view bytes, uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Named RNG substream: one global seed fans out to per-stage streams so that
// enabling or disabling one stage cannot shift another stage's randomness.
inline uint64_t substream_seed(uint64_t global_seed, std::string_view name) {
    return splitmix64(global_seed ^ fnv1a64(name));
}

inline uint64_t substream_seed(uint64_t global_seed, std::string_view name, uint64_t index) {
    return splitmix64(substream_seed(global_seed, name) ^ splitmix64(index));
}

}  // namespace cussp
