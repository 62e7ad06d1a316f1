#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "cussp/common.hpp"
#include "cussp/io/manifest.hpp"
#include "cussp/prep/valve.hpp"
#include "cussp/seg/classes.hpp"
#include "cussp/sequence.hpp"

namespace cussp::phantom {

// Ellipse in the heart frame. u runs along the LV long axis (positive toward
// the atria), w across it. Area swings sinusoidally by `amplitude` over the
// cycle; atria move in anti-phase with the ventricles.
struct ChamberSpec {
    double cu = 0, cw = 0;  // center
    double au = 1, aw = 1;  // semi-axes
    double amplitude = 0;   // fractional area swing in [0,1)
    bool anti_phase = false;
};

// Short-axis stack: concentric LV disc + myocardium ring + RV crescent per
// slice, with radii varying linearly along the stack.
struct SaSpec {
    bool enabled = true;
    int size = 64;
    int slices = 8;
    double r_lv = 14;        // basal LV cavity radius, px
    double lv_taper = 0.6;   // apical radius = r_lv * (1 - lv_taper)
    double myo_thickness = 4;
    double r_rv = 10;
    double rv_taper = 0.5;
    double rv_offset = 16;   // RV disc center offset from LV center, px
    float slice_thickness_mm = 8.0f;
};

struct Intensities {
    double background = 25, myocardium = 80, blood = 190;
};

struct PhantomSpec {
    int height = 128, width = 128, frames = 50;
    float spacing_mm = 1.8f;
    float frame_interval_ms = 20.0f;
    double heart_row = 62, heart_col = 64;
    double angle_deg = -10;
    // la.cu keeps the LA ellipse crossing the valve plane even at maximal
    // atrial contraction, so the LA/LV interface never opens a gap
    ChamberSpec lv{-20, 10, 30, 17, 0.45, false};
    ChamberSpec la{17, 10, 17, 13, 0.25, true};
    ChamberSpec rv{-22, -28, 26, 11, 0.45, false};
    ChamberSpec ra{20, -25, 15, 10, 0.25, true};
    double myo_thickness_px = 5;
    double valve_u = 4;      // clip plane: ventricles at u <= valve_u, atria above
    int phase = 0;           // frame of maximal LV area (end-diastole)
    double noise_sigma = 6;
    Intensities intensity;
    double angle_2ch_deg = 15;    // extra in-plane rotation of the 2CH view
    double axis_2ch_factor = 0.9; // cross-axis scale of the 2CH plane
    bool render_2ch = true;
    SaSpec sa;

    void validate() const {
        if (frames < 2) throw ValidationError("phantom: frames must be >= 2");
        if (height < 32 || width < 32) throw ValidationError("phantom: canvas too small");
        if (spacing_mm <= 0) throw ValidationError("phantom: spacing must be positive");
        for (const ChamberSpec* c : {&lv, &la, &rv, &ra})
            if (c->amplitude < 0 || c->amplitude >= 1)
                throw ValidationError("phantom: amplitude must be in [0,1)");
    }
};

// Regurgitant jet: a tapered streak of intensity offset from the valve center
// into the LA, active over a cyclic systolic frame window.
struct JetParams {
    bool present = false;
    double delta = -40;        // signed intensity offset; dark jet by default
    double width_px = 4;
    double length_frac = 0.5;  // of the LA long axis
    double noise_sigma = 2;    // used by inject_jet only
    int frame_start = 1;
    int frame_len = 23;
};

namespace detail {

// area scale factor of a chamber at frame t; max 1 at the chamber's own
// end-diastole (t == phase for ventricles, phase + T/2 for atria)
inline double area_factor(const ChamberSpec& c, int t, int phase, int frames) {
    const double ph = 2.0 * M_PI * static_cast<double>(t - phase) / static_cast<double>(frames);
    const double swing = c.anti_phase ? (1.0 + std::cos(ph)) : (1.0 - std::cos(ph));
    return 1.0 - 0.5 * c.amplitude * swing;
}

struct HeartFrame {
    double hr, hc, cos_t, sin_t;
    explicit HeartFrame(const PhantomSpec& s, double extra_angle_deg = 0)
        : hr(s.heart_row), hc(s.heart_col) {
        const double a = (s.angle_deg + extra_angle_deg) * M_PI / 180.0;
        cos_t = std::cos(a);
        sin_t = std::sin(a);
    }
    // image (row, col) -> heart (u, w)
    void to_heart(double r, double c, double& u, double& w) const {
        const double dr = r - hr, dc = c - hc;
        u = dr * cos_t + dc * sin_t;
        w = -dr * sin_t + dc * cos_t;
    }
};

inline bool in_ellipse(double u, double w, const ChamberSpec& c, double scale, double grow = 0) {
    const double du = (u - c.cu) / (c.au * scale + grow);
    const double dw = (w - c.cw) / (c.aw * scale + grow);
    return du * du + dw * dw <= 1.0;
}

// The valve plane tracks LV contraction (annular motion): it sits a fixed
// overhang below the LV ellipse tip, and the atria translate with it so the
// LA/LV interface never opens a gap over the cycle.
struct PlaneState {
    double v;   // valve plane u-coordinate at this frame
    double dv;  // atrial translation relative to the design-time plane
};

inline PlaneState valve_plane(const PhantomSpec& s, int t) {
    const double sv = std::sqrt(area_factor(s.lv, t, s.phase, s.frames));
    const double overhang = s.lv.cu + s.lv.au - s.valve_u;
    const double v = s.lv.cu + s.lv.au * sv - overhang;
    return {v, v - s.valve_u};
}

inline bool jet_active(const JetParams& j, int t, int frames) {
    if (!j.present || j.frame_len <= 0) return false;
    const int rel = ((t - j.frame_start) % frames + frames) % frames;
    return rel < j.frame_len;
}

// coverage in [0,1] of the jet streak at heart coordinates (u, w), frame t;
// streak runs from the valve plane into the LA and narrows along its length
inline double jet_coverage_heart(const PhantomSpec& s, const JetParams& j, int t, double u, double w,
                                 bool* outside_la = nullptr) {
    if (!jet_active(j, t, s.frames)) return 0.0;
    const PlaneState plane = valve_plane(s, t);
    const double sla = std::sqrt(area_factor(s.la, t, s.phase, s.frames));
    ChamberSpec la = s.la;
    la.cu += plane.dv;
    const double length = j.length_frac * 2.0 * la.au * sla;
    const double jet_w = la.cw;
    int hits = 0, total = 0, clipped = 0;
    for (int i = 0; i < 4; ++i)
        for (int k = 0; k < 4; ++k) {
            const double uu = u + (i + 0.5) / 4.0 - 0.5;
            const double ww = w + (k + 0.5) / 4.0 - 0.5;
            ++total;
            const double l = uu - plane.v;
            if (l < 0 || l > length) continue;
            const double half_width = 0.5 * j.width_px * (1.0 - 0.7 * l / std::max(length, 1e-9));
            if (std::abs(ww - jet_w) > half_width) continue;
            const bool inside_la = uu > plane.v && in_ellipse(uu, ww, la, sla);
            if (!inside_la) {
                ++clipped;
                continue;
            }
            ++hits;
        }
    if (outside_la && clipped > 0) *outside_la = true;
    return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace detail

// Same physical heart on a k-times finer pixel grid: all pixel-unit geometry
// scales by k while the physical spacing shrinks to match.
inline PhantomSpec refine_grid(const PhantomSpec& spec, double k) {
    PhantomSpec s = spec;
    s.height = static_cast<int>(std::lround(spec.height * k));
    s.width = static_cast<int>(std::lround(spec.width * k));
    s.spacing_mm = static_cast<float>(spec.spacing_mm / k);
    s.heart_row *= k;
    s.heart_col *= k;
    for (ChamberSpec* c : {&s.lv, &s.la, &s.rv, &s.ra}) {
        c->cu *= k;
        c->cw *= k;
        c->au *= k;
        c->aw *= k;
    }
    s.myo_thickness_px *= k;
    s.valve_u *= k;
    s.noise_sigma = spec.noise_sigma;
    s.sa.size = static_cast<int>(std::lround(spec.sa.size * k));
    s.sa.r_lv *= k;
    s.sa.r_rv *= k;
    s.sa.rv_offset *= k;
    s.sa.myo_thickness *= k;
    return s;
}

// Jet coverage at an image pixel; exposed so tests can build ground-truth jet
// masks without duplicating the streak geometry.
inline double jet_coverage(const PhantomSpec& spec, const JetParams& jet, int t, double row, double col) {
    detail::HeartFrame hf(spec);
    double u, w;
    hf.to_heart(row, col, u, w);
    return detail::jet_coverage_heart(spec, jet, t, u, w);
}

// Renders the long-axis views. The 2CH plane reuses the left-heart geometry
// with its own rotation and cross-axis scale and carries no right heart.
inline void render_long_axis(const PhantomSpec& spec, const JetParams& jet, uint64_t seed, bool two_chamber,
                             CineSequence& cine, MaskSequence& masks) {
    spec.validate();
    const int T = spec.frames, H = spec.height, W = spec.width;
    cine = CineSequence{};
    cine.t = T;
    cine.h = H;
    cine.w = W;
    cine.voxels.assign(static_cast<size_t>(T) * H * W, 0);
    cine.spacing_row_mm = cine.spacing_col_mm = spec.spacing_mm;
    cine.frame_interval_ms = spec.frame_interval_ms;
    cine.view = two_chamber ? "2CH" : "4CH";
    masks = MaskSequence{};
    masks.t = T;
    masks.h = H;
    masks.w = W;
    masks.labels.assign(static_cast<size_t>(T) * H * W, 0);
    masks.spacing_row_mm = masks.spacing_col_mm = spec.spacing_mm;
    masks.view = cine.view;

    detail::HeartFrame hf(spec, two_chamber ? spec.angle_2ch_deg : 0.0);
    const double axis_scale = two_chamber ? spec.axis_2ch_factor : 1.0;
    ChamberSpec lv = spec.lv, la = spec.la;
    lv.aw *= axis_scale;
    la.aw *= axis_scale;

    std::mt19937_64 rng(splitmix64(seed));
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);

    for (int t = 0; t < T; ++t) {
        const detail::PlaneState plane = detail::valve_plane(spec, t);
        const double s_v = std::sqrt(detail::area_factor(lv, t, spec.phase, T));
        const double s_a = std::sqrt(detail::area_factor(la, t, spec.phase, T));
        const double s_rv = std::sqrt(detail::area_factor(spec.rv, t, spec.phase, T));
        const double s_ra = std::sqrt(detail::area_factor(spec.ra, t, spec.phase, T));
        ChamberSpec la_t = la;
        la_t.cu += plane.dv;  // atria ride the moving annulus
        for (int r = 0; r < H; ++r)
            for (int c = 0; c < W; ++c) {
                double u, w;
                hf.to_heart(r, c, u, w);
                const bool in_lv = u <= plane.v && detail::in_ellipse(u, w, lv, s_v);
                const bool in_myo = !in_lv && u <= plane.v &&
                                    detail::in_ellipse(u, w, lv, s_v, spec.myo_thickness_px);
                const bool in_la = u > plane.v && detail::in_ellipse(u, w, la_t, s_a);
                const bool in_rv = !two_chamber && detail::in_ellipse(u, w, spec.rv, s_rv);
                const bool in_ra = !two_chamber && u > plane.v && detail::in_ellipse(u, w, spec.ra, s_ra);
                const int claims = int(in_lv) + int(in_myo) + int(in_la) + int(in_rv) + int(in_ra);
                if (claims > 1)
                    throw ValidationError("phantom: overlapping chamber spec at frame " + std::to_string(t) +
                                          " pixel (" + std::to_string(r) + "," + std::to_string(c) + ")");
                uint8_t label = seg::kBackground;
                double value = spec.intensity.background;
                if (in_lv) {
                    label = seg::kLvBloodpool;
                    value = spec.intensity.blood;
                } else if (in_myo) {
                    label = seg::kLvMyocardium;
                    value = spec.intensity.myocardium;
                } else if (in_la) {
                    label = seg::kLa;
                    value = spec.intensity.blood;
                } else if (in_rv) {
                    label = seg::kRv;
                    value = spec.intensity.blood;
                } else if (in_ra) {
                    label = seg::kRa;
                    value = spec.intensity.blood;
                }
                if (!two_chamber && in_la && jet.present && jet.delta != 0.0) {
                    const double cov = detail::jet_coverage_heart(spec, jet, t, u, w);
                    value += jet.delta * cov;
                }
                value += noise(rng);
                masks.at(t, r, c) = label;
                cine.at(t, r, c) = static_cast<uint8_t>(std::clamp(std::lround(value), 0l, 255l));
            }
    }
}

// Spec'd op: synthesize one 4CH cine with ground-truth masks and its label.
inline std::tuple<CineSequence, MaskSequence, io::Label> generate_sequence(const PhantomSpec& spec,
                                                                           const JetParams& jet, uint64_t seed) {
    CineSequence cine;
    MaskSequence masks;
    render_long_axis(spec, jet, seed, /*two_chamber=*/false, cine, masks);
    return {std::move(cine), std::move(masks), jet.present ? io::Label::MR : io::Label::NonMR};
}

inline SaStack render_short_axis(const PhantomSpec& spec, uint64_t seed) {
    spec.validate();
    const SaSpec& sa = spec.sa;
    SaStack st;
    st.t = spec.frames;
    st.s = sa.slices;
    st.h = st.w = sa.size;
    st.voxels.assign(static_cast<size_t>(st.t) * st.s * st.h * st.w, 0);
    st.labels.assign(st.voxels.size(), 0);
    st.spacing_row_mm = st.spacing_col_mm = spec.spacing_mm;
    st.slice_thickness_mm = sa.slice_thickness_mm;
    st.frame_interval_ms = spec.frame_interval_ms;

    std::mt19937_64 rng(splitmix64(seed));
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    const double ctr = (sa.size - 1) / 2.0;

    for (int t = 0; t < st.t; ++t) {
        const double s_lv = std::sqrt(detail::area_factor(spec.lv, t, spec.phase, st.t));
        const double s_rv = std::sqrt(detail::area_factor(spec.rv, t, spec.phase, st.t));
        for (int k = 0; k < st.s; ++k) {
            const double frac = st.s > 1 ? static_cast<double>(k) / (st.s - 1) : 0.0;
            const double r_cav = sa.r_lv * (1.0 - sa.lv_taper * frac) * s_lv;
            const double r_out = r_cav + sa.myo_thickness;
            const double r_rv = sa.r_rv * (1.0 - sa.rv_taper * frac) * s_rv;
            uint8_t* img = st.image(t, k);
            uint8_t* msk = st.mask(t, k);
            for (int r = 0; r < st.h; ++r)
                for (int c = 0; c < st.w; ++c) {
                    const double dr = r - ctr, dc = c - ctr;
                    const double d_lv = std::hypot(dr, dc);
                    const double d_rv = std::hypot(dr, dc + sa.rv_offset);
                    uint8_t label = seg::kBackground;
                    double value = spec.intensity.background;
                    if (d_lv <= r_cav) {
                        label = seg::kLvBloodpool;
                        value = spec.intensity.blood;
                    } else if (d_lv <= r_out) {
                        label = seg::kLvMyocardium;
                        value = spec.intensity.myocardium;
                    } else if (d_rv <= r_rv) {
                        label = seg::kRv;
                        value = spec.intensity.blood;
                    }
                    value += noise(rng);
                    msk[static_cast<size_t>(r) * st.w + c] = label;
                    img[static_cast<size_t>(r) * st.w + c] =
                        static_cast<uint8_t>(std::clamp(std::lround(value), 0l, 255l));
                }
        }
    }
    return st;
}

struct PhantomSample {
    CineSequence cine_4ch, cine_2ch;
    MaskSequence masks_4ch, masks_2ch;
    SaStack sa;
    io::Label label = io::Label::NonMR;
};

inline PhantomSample generate_sample(const PhantomSpec& spec, const JetParams& jet, uint64_t seed) {
    PhantomSample out;
    render_long_axis(spec, jet, substream_seed(seed, "4ch"), false, out.cine_4ch, out.masks_4ch);
    if (spec.render_2ch)
        render_long_axis(spec, jet, substream_seed(seed, "2ch"), true, out.cine_2ch, out.masks_2ch);
    if (spec.sa.enabled) out.sa = render_short_axis(spec, substream_seed(seed, "sa"));
    out.label = jet.present ? io::Label::MR : io::Label::NonMR;
    return out;
}

// Post-hoc jet injection into an existing cine using its masks. The valve
// plane and LV orientation come from the masks, not from any phantom spec.
inline CineSequence inject_jet(const CineSequence& seq, const MaskSequence& masks, const JetParams& jet,
                               uint64_t seed) {
    if (!jet.present) throw ValidationError("inject_jet: jet.present must be true");
    if (seq.t != masks.t || seq.h != masks.h || seq.w != masks.w)
        throw ValidationError("inject_jet: sequence/mask shape mismatch");
    CineSequence out = seq;
    if (jet.delta == 0.0) return out;

    const prep::ValveGeometry g = prep::locate_valve(masks, 0);
    // direction from the LV centroid through the valve center, continued into the LA
    double lv_r = 0, lv_c = 0;
    size_t n_lv = 0;
    const uint8_t* m0 = masks.frame(0);
    for (int r = 0; r < masks.h; ++r)
        for (int c = 0; c < masks.w; ++c)
            if (m0[static_cast<size_t>(r) * masks.w + c] == seg::kLvBloodpool) {
                lv_r += r;
                lv_c += c;
                ++n_lv;
            }
    if (n_lv == 0) throw ValidationError("inject_jet: LV bloodpool empty");
    double dir_r = g.valve_row - lv_r / static_cast<double>(n_lv);
    double dir_c = g.valve_col - lv_c / static_cast<double>(n_lv);
    const double norm = std::hypot(dir_r, dir_c);
    if (norm < 1e-9) throw ValidationError("inject_jet: degenerate valve geometry");
    dir_r /= norm;
    dir_c /= norm;

    // LA long axis proxy: farthest LA pixel from the valve along the jet direction
    double la_len = 0;
    for (int r = 0; r < masks.h; ++r)
        for (int c = 0; c < masks.w; ++c)
            if (m0[static_cast<size_t>(r) * masks.w + c] == seg::kLa) {
                const double along = (r - g.valve_row) * dir_r + (c - g.valve_col) * dir_c;
                la_len = std::max(la_len, along);
            }
    const double length = jet.length_frac * la_len;

    std::mt19937_64 rng(splitmix64(seed));
    std::normal_distribution<double> noise(0.0, jet.noise_sigma);
    bool clipped = false;
    for (int t = 0; t < seq.t; ++t) {
        if (!detail::jet_active(jet, t, seq.t)) continue;
        const uint8_t* m = masks.frame(t);
        for (int r = 0; r < seq.h; ++r)
            for (int c = 0; c < seq.w; ++c) {
                const double along = (r - g.valve_row) * dir_r + (c - g.valve_col) * dir_c;
                if (along < 0 || along > length) continue;
                const double across = std::abs(-(r - g.valve_row) * dir_c + (c - g.valve_col) * dir_r);
                const double half_width = 0.5 * jet.width_px * (1.0 - 0.7 * along / std::max(length, 1e-9));
                if (across > half_width) continue;
                if (m[static_cast<size_t>(r) * seq.w + c] != seg::kLa) {
                    clipped = true;
                    continue;
                }
                const double v = out.at(t, r, c) + jet.delta + noise(rng);
                out.at(t, r, c) = static_cast<uint8_t>(std::clamp(std::lround(v), 0l, 255l));
            }
    }
    if (clipped) out.meta["jet_clipped"] = "1";
    return out;
}

}  // namespace cussp::phantom
