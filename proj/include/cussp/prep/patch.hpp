#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "cussp/common.hpp"
#include "cussp/io/array_container.hpp"
#include "cussp/prep/valve.hpp"
#include "cussp/seg/classes.hpp"
#include "cussp/sequence.hpp"

namespace cussp::prep {

struct PreprocessConfig {
    int patch_size = 64;
    double crop_factor = 2.0;   // crop side = crop_factor * valve_extent
    double min_crop_px = 32.0;
    bool truncate25 = false;
};

struct ValvePatchSequence {
    int t = 0, p = 0;
    std::vector<uint8_t> patches;  // t*p*p
    std::vector<int> source_frames;
    int systolic_start = -1;  // window anchor for 25-frame truncation at load time
    ValveGeometry geometry;
    std::vector<std::pair<float, float>> eq_ranges;  // per output frame

    const uint8_t* patch(int ti) const { return patches.data() + static_cast<size_t>(ti) * p * p; }
    uint8_t* patch(int ti) { return patches.data() + static_cast<size_t>(ti) * p * p; }
};

inline float bilinear_sample(const uint8_t* img, int h, int w, double r, double c) {
    const int r0 = static_cast<int>(std::floor(r));
    const int c0 = static_cast<int>(std::floor(c));
    const double fr = r - r0, fc = c - c0;
    auto px = [&](int rr, int cc) -> double {
        if (rr < 0 || rr >= h || cc < 0 || cc >= w) return 0.0;  // zero padding
        return img[static_cast<size_t>(rr) * w + cc];
    };
    const double v = px(r0, c0) * (1 - fr) * (1 - fc) + px(r0, c0 + 1) * (1 - fr) * fc +
                     px(r0 + 1, c0) * fr * (1 - fc) + px(r0 + 1, c0 + 1) * fr * fc;
    return static_cast<float>(v);
}

// Rotation-normalized square crop: the frame is rotated by (90 deg - lv_axis_angle)
// about the valve center so the LV long axis points up and the valve plane lies
// horizontal, then a square of side crop_factor * valve_extent (floored at
// min_crop_px) is resampled bilinearly to out_size x out_size. Out-of-frame
// area reads as zero.
inline std::vector<float> crop_patch(const uint8_t* frame, int h, int w, const ValveGeometry& g, int out_size,
                                     double crop_factor = 2.0, double min_crop_px = 32.0) {
    if (out_size < 2) throw ValidationError("crop_patch: out_size too small");
    const double side = std::max(crop_factor * g.valve_extent_px, min_crop_px);
    const double step = side / out_size;
    const double angle_rad = g.lv_axis_angle_deg * M_PI / 180.0;
    // unit vector from the valve toward the LV, in image (row, col) coords
    const double dr = -std::sin(angle_rad), dc = std::cos(angle_rad);
    const double ic = (out_size - 1) / 2.0;
    std::vector<float> out(static_cast<size_t>(out_size) * out_size);
    for (int i = 0; i < out_size; ++i)
        for (int j = 0; j < out_size; ++j) {
            const double di = (i - ic) * step, dj = (j - ic) * step;
            const double r = g.valve_row + di * (-dr) + dj * dc;
            const double c = g.valve_col + di * (-dc) + dj * (-dr);
            out[static_cast<size_t>(i) * out_size + j] = bilinear_sample(frame, h, w, r, c);
        }
    return out;
}

// (1st, 99th) percentile of the intensities under the LA mask.
inline std::pair<float, float> la_intensity_range(const uint8_t* frame, const uint8_t* mask, int h, int w) {
    std::vector<uint8_t> vals;
    const size_t hw = static_cast<size_t>(h) * w;
    for (size_t i = 0; i < hw; ++i)
        if (mask[i] == seg::kLa) vals.push_back(frame[i]);
    if (vals.empty()) throw ValidationError("la_intensity_range: LA mask empty");
    std::sort(vals.begin(), vals.end());
    auto pct = [&](double q) {
        const size_t idx = static_cast<size_t>(std::llround(q * static_cast<double>(vals.size() - 1)));
        return static_cast<float>(vals[idx]);
    };
    return {pct(0.01), pct(0.99)};
}

inline std::pair<float, float> la_intensity_range(const CineSequence& seq, const MaskSequence& masks, int frame) {
    return la_intensity_range(seq.frame(frame), masks.frame(frame), seq.h, seq.w);
}

// Histogram equalization over 256 bins spanning [lo, hi]. Values are clipped
// to the range first; the CDF mapping stretches the occupied bins to the full
// uint8 range. A constant patch maps to mid-gray 128.
inline std::vector<uint8_t> equalize(const std::vector<float>& patch, float lo, float hi) {
    if (lo > hi) throw ValidationError("equalize: lo > hi");
    std::vector<uint8_t> out(patch.size());
    if (hi == lo) {
        std::fill(out.begin(), out.end(), static_cast<uint8_t>(128));
        return out;
    }
    const double scale = 256.0 / (hi - lo);
    std::array<uint32_t, 256> hist{};
    std::vector<uint8_t> bins(patch.size());
    for (size_t i = 0; i < patch.size(); ++i) {
        const double v = std::clamp(static_cast<double>(patch[i]), static_cast<double>(lo), static_cast<double>(hi));
        const int b = std::min(255, static_cast<int>((v - lo) * scale));
        bins[i] = static_cast<uint8_t>(b);
        ++hist[static_cast<size_t>(b)];
    }
    const double n = static_cast<double>(patch.size());
    std::array<uint8_t, 256> lut{};
    double cum = 0;
    double cdf_min = -1;
    for (int b = 0; b < 256; ++b) {
        cum += hist[static_cast<size_t>(b)];
        if (cdf_min < 0 && hist[static_cast<size_t>(b)] > 0) cdf_min = cum / n;
        const double cdf = cum / n;
        const double mapped = cdf_min < 1.0 ? 255.0 * (cdf - cdf_min) / (1.0 - cdf_min) : 255.0;
        lut[static_cast<size_t>(b)] = static_cast<uint8_t>(std::clamp(std::lround(mapped), 0l, 255l));
    }
    for (size_t i = 0; i < patch.size(); ++i) out[i] = lut[bins[i]];
    return out;
}

// The 25 consecutive frame indices (cyclic) starting at end-diastole, the
// frame of maximal LV bloodpool area. Ties break to the lowest index.
inline std::vector<int> systolic_window(const MaskSequence& masks, int window = 25) {
    if (masks.t < window)
        throw ValidationError("systolic_window: need at least " + std::to_string(window) + " frames, have " +
                              std::to_string(masks.t));
    size_t best_area = 0;
    int best = 0;
    for (int t = 0; t < masks.t; ++t) {
        const size_t a = masks.class_pixels(t, seg::kLvBloodpool);
        if (a == 0) throw ValidationError("systolic_window: LV bloodpool absent in frame " + std::to_string(t));
        if (a > best_area) {
            best_area = a;
            best = t;
        }
    }
    std::vector<int> idx(static_cast<size_t>(window));
    for (int k = 0; k < window; ++k) idx[static_cast<size_t>(k)] = (best + k) % masks.t;
    return idx;
}

// Steps 2-4 of the pipeline for one sequence: locate once at end-diastole,
// then crop and equalize every (optionally truncated) frame with that single
// geometry. Equalization runs per frame with that frame's LA range.
inline ValvePatchSequence preprocess_sequence(const CineSequence& seq, const MaskSequence& masks,
                                              const PreprocessConfig& cfg) {
    if (seq.t != masks.t || seq.h != masks.h || seq.w != masks.w)
        throw ValidationError("preprocess_sequence: sequence/mask shape mismatch");
    std::vector<int> indices;
    if (cfg.truncate25) {
        indices = systolic_window(masks);
    } else {
        indices.resize(static_cast<size_t>(seq.t));
        for (int t = 0; t < seq.t; ++t) indices[static_cast<size_t>(t)] = t;
    }
    // end-diastolic frame for the sequence-wide geometry
    size_t best_area = 0;
    int ed = 0;
    for (int t = 0; t < masks.t; ++t) {
        const size_t a = masks.class_pixels(t, seg::kLvBloodpool);
        if (a > best_area) {
            best_area = a;
            ed = t;
        }
    }
    ValvePatchSequence out;
    if (masks.t >= 25) out.systolic_start = systolic_window(masks).front();
    try {
        out.geometry = locate_valve(masks, ed);
    } catch (const ValidationError& e) {
        throw ValidationError("preprocess_sequence: frame " + std::to_string(ed) + ": " + e.what());
    }
    out.t = static_cast<int>(indices.size());
    out.p = cfg.patch_size;
    out.patches.resize(static_cast<size_t>(out.t) * out.p * out.p);
    out.source_frames = indices;
    out.eq_ranges.resize(indices.size());
    for (size_t k = 0; k < indices.size(); ++k) {
        const int t = indices[k];
        try {
            const std::vector<float> raw =
                crop_patch(seq.frame(t), seq.h, seq.w, out.geometry, cfg.patch_size, cfg.crop_factor, cfg.min_crop_px);
            const auto range = la_intensity_range(seq, masks, t);
            out.eq_ranges[k] = range;
            const std::vector<uint8_t> eq = equalize(raw, range.first, range.second);
            std::copy(eq.begin(), eq.end(), out.patch(static_cast<int>(k)));
        } catch (const ValidationError& e) {
            throw ValidationError("preprocess_sequence: frame " + std::to_string(t) + ": " + e.what());
        }
    }
    return out;
}

inline io::ArrayContainer to_container(const ValvePatchSequence& v) {
    io::ArrayContainer c;
    c.shape = {static_cast<uint64_t>(v.t), static_cast<uint64_t>(v.p), static_cast<uint64_t>(v.p)};
    c.dtype = io::Dtype::u8;
    c.data = v.patches;
    std::string frames;
    for (size_t i = 0; i < v.source_frames.size(); ++i)
        frames += (i ? "," : "") + std::to_string(v.source_frames[i]);
    c.meta["source_frames"] = frames;
    c.meta["systolic_start"] = std::to_string(v.systolic_start);
    c.meta["kind"] = "patches";
    return c;
}

inline ValvePatchSequence patches_from_container(const io::ArrayContainer& c) {
    if (c.shape.size() != 3 || c.shape[1] != c.shape[2] || c.dtype != io::Dtype::u8)
        throw ValidationError("patch container must be u8 with shape T x P x P");
    ValvePatchSequence v;
    v.t = static_cast<int>(c.shape[0]);
    v.p = static_cast<int>(c.shape[1]);
    v.patches = c.data;
    std::stringstream ss(c.meta_str("source_frames"));
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) v.source_frames.push_back(std::stoi(tok));
    v.systolic_start = std::stoi(c.meta_str("systolic_start", "-1"));
    return v;
}

inline void save_geometry_sidecar(const ValvePatchSequence& v, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write geometry sidecar " + path.string());
    f << "valve_row " << v.geometry.valve_row << "\n";
    f << "valve_col " << v.geometry.valve_col << "\n";
    f << "lv_axis_angle_deg " << v.geometry.lv_axis_angle_deg << "\n";
    f << "valve_extent_px " << v.geometry.valve_extent_px << "\n";
    for (size_t i = 0; i < v.eq_ranges.size(); ++i)
        f << "eq_range " << v.source_frames[i] << " " << v.eq_ranges[i].first << " " << v.eq_ranges[i].second << "\n";
}

}  // namespace cussp::prep
