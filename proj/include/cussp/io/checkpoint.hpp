#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cussp/common.hpp"
#include "cussp/io/array_container.hpp"

namespace cussp::io {

enum class Component : uint8_t { Segmenter = 0, Encoder = 1, Projector = 2, MlpHead = 3, CnnLstm = 4, Rf = 5 };

inline std::string component_to_string(Component c) {
    switch (c) {
        case Component::Segmenter: return "segmenter";
        case Component::Encoder: return "encoder";
        case Component::Projector: return "projector";
        case Component::MlpHead: return "mlp_head";
        case Component::CnnLstm: return "cnn_lstm";
        case Component::Rf: return "rf";
    }
    throw ValidationError("bad component enum");
}

enum class BlobDtype : uint8_t { f32 = 0, i64 = 1, u8 = 2, f64 = 3 };

inline size_t blob_dtype_size(BlobDtype d) {
    switch (d) {
        case BlobDtype::f32: return 4;
        case BlobDtype::i64: return 8;
        case BlobDtype::u8: return 1;
        case BlobDtype::f64: return 8;
    }
    throw ValidationError("bad blob dtype");
}

struct TensorBlob {
    BlobDtype dtype = BlobDtype::f32;
    std::vector<int64_t> shape;
    std::vector<uint8_t> bytes;

    int64_t elem_count() const {
        int64_t n = 1;
        for (int64_t d : shape) n *= d;
        return n;
    }
    bool operator==(const TensorBlob& o) const {
        return dtype == o.dtype && shape == o.shape && bytes == o.bytes;
    }
};

// Model checkpoint: parameter blobs keyed by layer name, plus the config
// snapshot needed to rebuild the architecture, the rng seed, and the epoch.
// Blobs live in a sorted map, so save(load(x)) is byte-identical.
struct Checkpoint {
    Component component = Component::Segmenter;
    int64_t epoch = 0;
    uint64_t rng_seed = 0;
    std::string config_json;  // stored verbatim
    std::map<std::string, TensorBlob> blobs;

    const TensorBlob& blob(const std::string& name) const {
        auto it = blobs.find(name);
        if (it == blobs.end()) throw ValidationError("checkpoint: missing blob '" + name + "'");
        return it->second;
    }
};

namespace detail {
constexpr char kCkptMagic[4] = {'C', 'K', 'P', '1'};
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
    std::string out;
    out.append(detail::kCkptMagic, 4);
    detail::put<uint32_t>(out, 1);
    detail::put<uint8_t>(out, static_cast<uint8_t>(c.component));
    detail::put<int64_t>(out, c.epoch);
    detail::put<uint64_t>(out, c.rng_seed);
    detail::put<uint32_t>(out, static_cast<uint32_t>(c.config_json.size()));
    out += c.config_json;
    detail::put<uint32_t>(out, static_cast<uint32_t>(c.blobs.size()));
    for (const auto& [name, blob] : c.blobs) {
        detail::put<uint32_t>(out, static_cast<uint32_t>(name.size()));
        out += name;
        detail::put<uint8_t>(out, static_cast<uint8_t>(blob.dtype));
        detail::put<uint8_t>(out, static_cast<uint8_t>(blob.shape.size()));
        for (int64_t d : blob.shape) detail::put<int64_t>(out, d);
        detail::put<uint64_t>(out, blob.bytes.size());
        out.append(reinterpret_cast<const char*>(blob.bytes.data()), blob.bytes.size());
    }
    detail::write_file(path, out);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::string in = detail::read_file(path);
    if (in.size() < 4 || std::memcmp(in.data(), detail::kCkptMagic, 4) != 0)
        throw IoError("checkpoint: bad magic in " + path.string());
    size_t off = 4;
    const auto version = detail::take<uint32_t>(in, off);
    if (version != 1) throw IoError("checkpoint: unsupported version");
    Checkpoint c;
    const auto comp = detail::take<uint8_t>(in, off);
    if (comp > 5) throw IoError("checkpoint: bad component tag");
    c.component = static_cast<Component>(comp);
    c.epoch = detail::take<int64_t>(in, off);
    c.rng_seed = detail::take<uint64_t>(in, off);
    const auto cfg_len = detail::take<uint32_t>(in, off);
    if (off + cfg_len > in.size()) throw IoError("checkpoint: truncated config");
    c.config_json = in.substr(off, cfg_len);
    off += cfg_len;
    const auto n_blobs = detail::take<uint32_t>(in, off);
    for (uint32_t i = 0; i < n_blobs; ++i) {
        const auto name_len = detail::take<uint32_t>(in, off);
        if (off + name_len > in.size()) throw IoError("checkpoint: truncated blob name");
        std::string name = in.substr(off, name_len);
        off += name_len;
        TensorBlob b;
        const auto dt = detail::take<uint8_t>(in, off);
        if (dt > 3) throw IoError("checkpoint: bad blob dtype");
        b.dtype = static_cast<BlobDtype>(dt);
        const auto ndim = detail::take<uint8_t>(in, off);
        b.shape.resize(ndim);
        for (auto& d : b.shape) d = detail::take<int64_t>(in, off);
        const auto nbytes = detail::take<uint64_t>(in, off);
        if (off + nbytes > in.size()) throw IoError("checkpoint: truncated blob data");
        if (nbytes != static_cast<uint64_t>(b.elem_count()) * blob_dtype_size(b.dtype))
            throw IoError("checkpoint: blob '" + name + "' size mismatch");
        b.bytes.assign(in.begin() + static_cast<ptrdiff_t>(off), in.begin() + static_cast<ptrdiff_t>(off + nbytes));
        off += nbytes;
        c.blobs.emplace(std::move(name), std::move(b));
    }
    if (off != in.size()) throw IoError("checkpoint: trailing bytes in " + path.string());
    return c;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path, Component expected) {
    Checkpoint c = load_checkpoint(path);
    if (c.component != expected)
        throw ValidationError("checkpoint " + path.string() + " holds a '" + component_to_string(c.component) +
                              "' component, expected '" + component_to_string(expected) + "'");
    return c;
}

}  // namespace cussp::io
