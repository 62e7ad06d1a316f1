#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "cussp/common.hpp"

namespace cussp::io {

// Self-describing single-file array format (.acz): fixed-layout header
// (magic, version, dtype code, ndim, dims) + UTF-8 key=value metadata block
// + raw row-major buffer. load(save(x)) is byte-exact.
enum class Dtype : uint8_t { u8 = 0, f32 = 1, i16 = 2 };

inline size_t dtype_size(Dtype d) {
    switch (d) {
        case Dtype::u8: return 1;
        case Dtype::f32: return 4;
        case Dtype::i16: return 2;
    }
    throw ValidationError("unknown dtype code");
}

struct ArrayContainer {
    std::vector<uint64_t> shape;
    Dtype dtype = Dtype::u8;
    std::vector<uint8_t> data;                  // raw bytes, row-major
    std::map<std::string, std::string> meta;    // sorted => deterministic on disk

    uint64_t elem_count() const {
        uint64_t n = 1;
        for (uint64_t d : shape) n *= d;
        return n;
    }

    void validate() const {
        if (data.size() != elem_count() * dtype_size(dtype))
            throw ValidationError("array container: buffer length " + std::to_string(data.size()) +
                                  " does not match shape/dtype (" +
                                  std::to_string(elem_count() * dtype_size(dtype)) + " expected)");
        auto it = meta.find("pixel_spacing_mm");
        if (it != meta.end()) {
            float sr = 0.f, sc = 0.f;
            if (std::sscanf(it->second.c_str(), "%f %f", &sr, &sc) != 2 || sr <= 0.f || sc <= 0.f)
                throw ValidationError("array container: pixel_spacing_mm must be two positive floats");
        }
    }

    float meta_float(const std::string& key, float fallback) const {
        auto it = meta.find(key);
        return it == meta.end() ? fallback : std::stof(it->second);
    }

    std::string meta_str(const std::string& key, const std::string& fallback = "") const {
        auto it = meta.find(key);
        return it == meta.end() ? fallback : it->second;
    }

    template <typename T>
    const T* as() const { return reinterpret_cast<const T*>(data.data()); }
    template <typename T>
    T* as() { return reinterpret_cast<T*>(data.data()); }
};

namespace detail {

constexpr char kAczMagic[4] = {'A', 'C', 'Z', '1'};

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, size_t& off) {
    if (off + sizeof(T) > in.size()) throw IoError("array container: truncated file");
    T v;
    std::memcpy(&v, in.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return bytes;
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed for " + path.string());
}

}  // namespace detail

inline void save_array(const ArrayContainer& c, const std::filesystem::path& path) {
    c.validate();
    std::string out;
    out.append(detail::kAczMagic, 4);
    detail::put<uint32_t>(out, 1);  // version
    detail::put<uint8_t>(out, static_cast<uint8_t>(c.dtype));
    detail::put<uint8_t>(out, static_cast<uint8_t>(c.shape.size()));
    detail::put<uint16_t>(out, 0);
    for (uint64_t d : c.shape) detail::put<uint64_t>(out, d);
    std::string meta;
    for (const auto& [k, v] : c.meta) meta += k + "=" + v + "\n";
    detail::put<uint32_t>(out, static_cast<uint32_t>(meta.size()));
    out += meta;
    out.append(reinterpret_cast<const char*>(c.data.data()), c.data.size());
    detail::write_file(path, out);
}

inline ArrayContainer load_array(const std::filesystem::path& path) {
    const std::string in = detail::read_file(path);
    size_t off = 0;
    if (in.size() < 4 || std::memcmp(in.data(), detail::kAczMagic, 4) != 0)
        throw IoError("array container: bad magic in " + path.string());
    off = 4;
    const auto version = detail::take<uint32_t>(in, off);
    if (version != 1) throw IoError("array container: unsupported version " + std::to_string(version));
    ArrayContainer c;
    const auto dtype_code = detail::take<uint8_t>(in, off);
    if (dtype_code > 2) throw IoError("array container: bad dtype code");
    c.dtype = static_cast<Dtype>(dtype_code);
    const auto ndim = detail::take<uint8_t>(in, off);
    detail::take<uint16_t>(in, off);
    c.shape.resize(ndim);
    for (auto& d : c.shape) d = detail::take<uint64_t>(in, off);
    const auto meta_len = detail::take<uint32_t>(in, off);
    if (off + meta_len > in.size()) throw IoError("array container: truncated metadata");
    const std::string meta = in.substr(off, meta_len);
    off += meta_len;
    size_t pos = 0;
    while (pos < meta.size()) {
        const size_t nl = meta.find('\n', pos);
        if (nl == std::string::npos) throw IoError("array container: unterminated metadata line");
        const std::string line = meta.substr(pos, nl - pos);
        pos = nl + 1;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) throw IoError("array container: malformed metadata line '" + line + "'");
        c.meta[line.substr(0, eq)] = line.substr(eq + 1);
    }
    const size_t expected = c.elem_count() * dtype_size(c.dtype);
    if (in.size() - off != expected)
        throw IoError("array container: corrupt payload in " + path.string() + " (" +
                      std::to_string(in.size() - off) + " bytes, expected " + std::to_string(expected) + ")");
    c.data.assign(in.begin() + static_cast<ptrdiff_t>(off), in.end());
    c.validate();
    return c;
}

}  // namespace cussp::io
