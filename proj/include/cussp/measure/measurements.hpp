#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "cussp/common.hpp"
#include "cussp/seg/classes.hpp"
#include "cussp/sequence.hpp"

namespace cussp::measure {

inline double chamber_area_mm2(const uint8_t* mask, int h, int w, uint8_t cls, double spacing_row_mm,
                               double spacing_col_mm) {
    size_t n = 0;
    const size_t hw = static_cast<size_t>(h) * w;
    for (size_t i = 0; i < hw; ++i) n += (mask[i] == cls);
    return static_cast<double>(n) * spacing_row_mm * spacing_col_mm;
}

inline double chamber_area_mm2(const MaskSequence& masks, int frame, uint8_t cls) {
    return chamber_area_mm2(masks.frame(frame), masks.h, masks.w, cls, masks.spacing_row_mm, masks.spacing_col_mm);
}

// Longest chord through the mask centroid along the principal axis, in mm.
inline double long_axis_length_mm(const uint8_t* mask, int h, int w, uint8_t cls, double spacing_row_mm,
                                  double spacing_col_mm) {
    double mr = 0, mc = 0;
    size_t n = 0;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (mask[static_cast<size_t>(r) * w + c] == cls) {
                mr += r;
                mc += c;
                ++n;
            }
    if (n == 0) throw ValidationError("long_axis_length: empty mask for class " + std::to_string(cls));
    mr /= static_cast<double>(n);
    mc /= static_cast<double>(n);
    double vrr = 0, vcc = 0, vrc = 0;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (mask[static_cast<size_t>(r) * w + c] == cls) {
                vrr += (r - mr) * (r - mr);
                vcc += (c - mc) * (c - mc);
                vrc += (r - mr) * (c - mc);
            }
    double er, ec;
    if (std::abs(vrc) < 1e-12) {
        er = vrr >= vcc ? 1.0 : 0.0;
        ec = vrr >= vcc ? 0.0 : 1.0;
    } else {
        const double lambda = 0.5 * (vrr + vcc) + std::sqrt(0.25 * (vrr - vcc) * (vrr - vcc) + vrc * vrc);
        const double nn = std::hypot(lambda - vcc, vrc);
        er = (lambda - vcc) / nn;
        ec = vrc / nn;
    }
    auto inside = [&](double r, double c) {
        const int ri = static_cast<int>(std::lround(r));
        const int ci = static_cast<int>(std::lround(c));
        if (ri < 0 || ri >= h || ci < 0 || ci >= w) return false;
        return mask[static_cast<size_t>(ri) * w + ci] == cls;
    };
    const double step = 0.25;
    double s_pos = 0, s_neg = 0;
    for (double s = step;; s += step) {
        if (!inside(mr + s * er, mc + s * ec)) break;
        s_pos = s;
    }
    for (double s = step;; s += step) {
        if (!inside(mr - s * er, mc - s * ec)) break;
        s_neg = s;
    }
    const double half = 0.5 * step;  // pixel membership extends half a step past the last hit
    const double len_r = (s_pos + s_neg + 2 * half) * er;
    const double len_c = (s_pos + s_neg + 2 * half) * ec;
    return std::hypot(len_r * spacing_row_mm, len_c * spacing_col_mm);
}

inline double long_axis_length_mm(const MaskSequence& masks, int frame, uint8_t cls) {
    return long_axis_length_mm(masks.frame(frame), masks.h, masks.w, cls, masks.spacing_row_mm,
                               masks.spacing_col_mm);
}

// Biplane area-length estimator: V = (8 / 3pi) * A_2ch * A_4ch / L, in mL.
inline double biplane_volume_ml(double area_2ch_mm2, double area_4ch_mm2, double length_mm) {
    if (area_2ch_mm2 < 0 || area_4ch_mm2 < 0) throw ValidationError("biplane_volume: negative area");
    if (area_2ch_mm2 == 0 || area_4ch_mm2 == 0) return 0.0;
    if (length_mm <= 0) throw ValidationError("biplane_volume: length must be positive");
    return (8.0 / (3.0 * M_PI)) * area_2ch_mm2 * area_4ch_mm2 / length_mm / 1000.0;
}

// Single-plane variant: V = (8 / 3pi) * A^2 / L.
inline double single_plane_volume_ml(double area_mm2, double length_mm) {
    if (area_mm2 < 0) throw ValidationError("single_plane_volume: negative area");
    if (area_mm2 == 0) return 0.0;
    if (length_mm <= 0) throw ValidationError("single_plane_volume: length must be positive");
    return (8.0 / (3.0 * M_PI)) * area_mm2 * area_mm2 / length_mm / 1000.0;
}

// Simpson's summation over short-axis slices, in mL.
inline double simpson_volume_ml(const std::vector<double>& slice_areas_mm2, double slice_thickness_mm) {
    if (slice_areas_mm2.empty()) throw ValidationError("simpson_volume: need at least one slice");
    double v = 0;
    for (double a : slice_areas_mm2) v += a * slice_thickness_mm;
    return v / 1000.0;
}

inline double ventricular_volume_ml(const SaStack& sa, int frame, uint8_t cls) {
    std::vector<double> areas(static_cast<size_t>(sa.s));
    for (int k = 0; k < sa.s; ++k)
        areas[static_cast<size_t>(k)] =
            chamber_area_mm2(sa.mask(frame, k), sa.h, sa.w, cls, sa.spacing_row_mm, sa.spacing_col_mm);
    return simpson_volume_ml(areas, sa.slice_thickness_mm);
}

struct AtrialPanel {
    double vol_max_ml = 0, vol_min_ml = 0, stroke_vol_ml = 0, ef_pct = 0;
};
struct VentriclePanel {
    double esv_ml = 0, edv_ml = 0, stroke_vol_ml = 0, ef_pct = 0;
};

struct CardiacMeasurements {
    AtrialPanel la, ra;
    VentriclePanel lv, rv;
    double lv_cardiac_output_l_min = 0;
    double lv_mass_g = 0;
};

constexpr double kMyocardialDensityGPerMl = 1.05;

// Full Table-style panel. LA volumes use the biplane method over 2CH+4CH,
// RA uses the single-plane method on 4CH, ventricles use Simpson sums over
// the SA stack. One cine covers exactly one cardiac cycle, so
// HR = 60000 / (T * frame_interval_ms).
inline CardiacMeasurements derive_measurements(const MaskSequence& masks_4ch, const MaskSequence& masks_2ch,
                                               const SaStack& sa, double frame_interval_ms) {
    const int T = masks_4ch.t;
    if (masks_2ch.t != T || sa.t != T)
        throw ValidationError("derive_measurements: frame count mismatch across views");
    if (T < 1) throw ValidationError("derive_measurements: empty sequences");
    if (frame_interval_ms <= 0) throw ValidationError("derive_measurements: frame interval must be positive");

    CardiacMeasurements m;
    std::vector<double> la_vol(static_cast<size_t>(T)), ra_vol(static_cast<size_t>(T)),
        lv_vol(static_cast<size_t>(T)), rv_vol(static_cast<size_t>(T));
    for (int t = 0; t < T; ++t) {
        const double la4 = chamber_area_mm2(masks_4ch, t, seg::kLa);
        const double la2 = chamber_area_mm2(masks_2ch, t, seg::kLa);
        double la_len = 0;
        if (la4 > 0 && la2 > 0)
            la_len = std::min(long_axis_length_mm(masks_4ch, t, seg::kLa), long_axis_length_mm(masks_2ch, t, seg::kLa));
        la_vol[static_cast<size_t>(t)] = (la4 > 0 && la2 > 0) ? biplane_volume_ml(la2, la4, la_len) : 0.0;

        const double ra4 = chamber_area_mm2(masks_4ch, t, seg::kRa);
        ra_vol[static_cast<size_t>(t)] =
            ra4 > 0 ? single_plane_volume_ml(ra4, long_axis_length_mm(masks_4ch, t, seg::kRa)) : 0.0;

        lv_vol[static_cast<size_t>(t)] = ventricular_volume_ml(sa, t, seg::kLvBloodpool);
        rv_vol[static_cast<size_t>(t)] = ventricular_volume_ml(sa, t, seg::kRv);
    }

    auto atrial = [](const std::vector<double>& vols) {
        AtrialPanel p;
        p.vol_max_ml = *std::max_element(vols.begin(), vols.end());
        p.vol_min_ml = *std::min_element(vols.begin(), vols.end());
        p.stroke_vol_ml = p.vol_max_ml - p.vol_min_ml;
        p.ef_pct = p.vol_max_ml > 0 ? 100.0 * p.stroke_vol_ml / p.vol_max_ml : 0.0;
        return p;
    };
    auto ventricle = [](const std::vector<double>& vols) {
        VentriclePanel p;
        p.edv_ml = *std::max_element(vols.begin(), vols.end());
        p.esv_ml = *std::min_element(vols.begin(), vols.end());
        p.stroke_vol_ml = p.edv_ml - p.esv_ml;
        if (p.edv_ml <= 0) throw ValidationError("derive_measurements: zero EDV");
        p.ef_pct = 100.0 * p.stroke_vol_ml / p.edv_ml;
        return p;
    };
    m.la = atrial(la_vol);
    m.ra = atrial(ra_vol);
    m.lv = ventricle(lv_vol);
    m.rv = ventricle(rv_vol);

    const double hr_bpm = 60000.0 / (static_cast<double>(T) * frame_interval_ms);
    m.lv_cardiac_output_l_min = m.lv.stroke_vol_ml * hr_bpm / 1000.0;

    // end-diastolic frame: maximal LV volume, ties to the lowest index
    int ed = 0;
    for (int t = 1; t < T; ++t)
        if (lv_vol[static_cast<size_t>(t)] > lv_vol[static_cast<size_t>(ed)]) ed = t;
    m.lv_mass_g = ventricular_volume_ml(sa, ed, seg::kLvMyocardium) * kMyocardialDensityGPerMl;
    return m;
}

// The 18 Table values in fixed order (left-to-right, top-to-bottom):
// row 1: LA VolMax, RA VolMax, LV ESV, RV ESV
// row 2: LA VolMin, RA VolMin, LV EDV, RV EDV
// row 3: LA SV,     RA SV,     LV SV,  RV SV
// row 4: LA EF,     RA EF,     LV EF,  RV EF
// row 5: LV CO,  row 6: LV Mass
using FeatureVector18 = std::array<double, 18>;

inline FeatureVector18 measurement_vector(const CardiacMeasurements& m) {
    return {m.la.vol_max_ml,    m.ra.vol_max_ml,    m.lv.esv_ml,        m.rv.esv_ml,
            m.la.vol_min_ml,    m.ra.vol_min_ml,    m.lv.edv_ml,        m.rv.edv_ml,
            m.la.stroke_vol_ml, m.ra.stroke_vol_ml, m.lv.stroke_vol_ml, m.rv.stroke_vol_ml,
            m.la.ef_pct,        m.ra.ef_pct,        m.lv.ef_pct,        m.rv.ef_pct,
            m.lv_cardiac_output_l_min, m.lv_mass_g};
}

inline const std::array<const char*, 18>& feature_names() {
    static const std::array<const char*, 18> names = {
        "la_vol_max", "ra_vol_max", "lv_esv", "rv_esv", "la_vol_min", "ra_vol_min", "lv_edv", "rv_edv",
        "la_sv",      "ra_sv",      "lv_sv",  "rv_sv",  "la_ef",      "ra_ef",      "lv_ef",  "rv_ef",
        "lv_co",      "lv_mass"};
    return names;
}

// BSA indexing: every Table value divided by body surface area. No
// imputation: a missing or non-positive BSA fails loudly.
inline FeatureVector18 features_bsa(const CardiacMeasurements& m, double bsa_m2) {
    if (!(bsa_m2 > 0)) throw ValidationError("features_bsa: BSA must be positive (no imputation)");
    FeatureVector18 f = measurement_vector(m);
    for (double& v : f) {
        v /= bsa_m2;
        if (!std::isfinite(v)) throw ValidationError("features_bsa: non-finite feature");
    }
    return f;
}

}  // namespace cussp::measure
