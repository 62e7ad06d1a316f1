#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cussp/common.hpp"
#include "cussp/io/array_container.hpp"

namespace cussp {

// T x H x W grayscale cine with physical pixel spacing and a view tag.
struct CineSequence {
    int t = 0, h = 0, w = 0;
    std::vector<uint8_t> voxels;  // t*h*w, row-major
    float spacing_row_mm = 1.0f, spacing_col_mm = 1.0f;
    float frame_interval_ms = 20.0f;
    std::string view;  // "4CH" | "2CH" | "SA"
    std::map<std::string, std::string> meta;

    uint8_t& at(int ti, int r, int c) { return voxels[(static_cast<size_t>(ti) * h + r) * w + c]; }
    uint8_t at(int ti, int r, int c) const { return voxels[(static_cast<size_t>(ti) * h + r) * w + c]; }
    const uint8_t* frame(int ti) const { return voxels.data() + static_cast<size_t>(ti) * h * w; }
    uint8_t* frame(int ti) { return voxels.data() + static_cast<size_t>(ti) * h * w; }
};

// Per-frame integer label maps over the chamber classes.
struct MaskSequence {
    int t = 0, h = 0, w = 0;
    std::vector<uint8_t> labels;
    float spacing_row_mm = 1.0f, spacing_col_mm = 1.0f;
    std::string view;

    uint8_t& at(int ti, int r, int c) { return labels[(static_cast<size_t>(ti) * h + r) * w + c]; }
    uint8_t at(int ti, int r, int c) const { return labels[(static_cast<size_t>(ti) * h + r) * w + c]; }
    const uint8_t* frame(int ti) const { return labels.data() + static_cast<size_t>(ti) * h * w; }
    uint8_t* frame(int ti) { return labels.data() + static_cast<size_t>(ti) * h * w; }

    size_t class_pixels(int ti, uint8_t cls) const {
        size_t n = 0;
        const uint8_t* f = frame(ti);
        const size_t hw = static_cast<size_t>(h) * w;
        for (size_t i = 0; i < hw; ++i) n += (f[i] == cls);
        return n;
    }
};

// Short-axis slice stack: T frames x S slices of images plus label maps.
struct SaStack {
    int t = 0, s = 0, h = 0, w = 0;
    std::vector<uint8_t> voxels;  // t*s*h*w
    std::vector<uint8_t> labels;
    float spacing_row_mm = 1.0f, spacing_col_mm = 1.0f;
    float slice_thickness_mm = 8.0f;
    float frame_interval_ms = 20.0f;

    size_t plane(int ti, int si) const { return (static_cast<size_t>(ti) * s + si) * h * w; }
    const uint8_t* image(int ti, int si) const { return voxels.data() + plane(ti, si); }
    const uint8_t* mask(int ti, int si) const { return labels.data() + plane(ti, si); }
    uint8_t* image(int ti, int si) { return voxels.data() + plane(ti, si); }
    uint8_t* mask(int ti, int si) { return labels.data() + plane(ti, si); }
};

inline io::ArrayContainer to_container(const CineSequence& s) {
    io::ArrayContainer c;
    c.shape = {static_cast<uint64_t>(s.t), static_cast<uint64_t>(s.h), static_cast<uint64_t>(s.w)};
    c.dtype = io::Dtype::u8;
    c.data = s.voxels;
    c.meta = s.meta;
    c.meta["pixel_spacing_mm"] = std::to_string(s.spacing_row_mm) + " " + std::to_string(s.spacing_col_mm);
    c.meta["frame_interval_ms"] = std::to_string(s.frame_interval_ms);
    c.meta["view"] = s.view;
    c.meta["kind"] = "cine";
    return c;
}

inline CineSequence cine_from_container(const io::ArrayContainer& c) {
    if (c.shape.size() != 3 || c.dtype != io::Dtype::u8)
        throw ValidationError("cine container must be u8 with shape T x H x W");
    CineSequence s;
    s.t = static_cast<int>(c.shape[0]);
    s.h = static_cast<int>(c.shape[1]);
    s.w = static_cast<int>(c.shape[2]);
    s.voxels = c.data;
    std::sscanf(c.meta_str("pixel_spacing_mm", "1 1").c_str(), "%f %f", &s.spacing_row_mm, &s.spacing_col_mm);
    s.frame_interval_ms = c.meta_float("frame_interval_ms", 20.0f);
    s.view = c.meta_str("view");
    s.meta = c.meta;
    return s;
}

inline io::ArrayContainer to_container(const MaskSequence& m) {
    io::ArrayContainer c;
    c.shape = {static_cast<uint64_t>(m.t), static_cast<uint64_t>(m.h), static_cast<uint64_t>(m.w)};
    c.dtype = io::Dtype::u8;
    c.data = m.labels;
    c.meta["pixel_spacing_mm"] = std::to_string(m.spacing_row_mm) + " " + std::to_string(m.spacing_col_mm);
    c.meta["view"] = m.view;
    c.meta["kind"] = "mask";
    return c;
}

inline MaskSequence mask_from_container(const io::ArrayContainer& c) {
    if (c.shape.size() != 3 || c.dtype != io::Dtype::u8)
        throw ValidationError("mask container must be u8 with shape T x H x W");
    MaskSequence m;
    m.t = static_cast<int>(c.shape[0]);
    m.h = static_cast<int>(c.shape[1]);
    m.w = static_cast<int>(c.shape[2]);
    m.labels = c.data;
    std::sscanf(c.meta_str("pixel_spacing_mm", "1 1").c_str(), "%f %f", &m.spacing_row_mm, &m.spacing_col_mm);
    m.view = c.meta_str("view");
    return m;
}

}  // namespace cussp
