#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <thread>
#include <vector>

#include "cussp/io/manifest.hpp"
#include "cussp/phantom/phantom.hpp"

namespace cussp::phantom {

// Population jitter applied on top of the base PhantomSpec. The whole heart is
// scaled/rotated/shifted rigidly so chamber gaps are preserved and no jittered
// sample can trip the overlap check.
struct PopulationRanges {
    double scale_lo = 0.92, scale_hi = 1.08;
    double shift_px = 4.0;
    double angle_deg = 25.0;
    double amp_ventricle_lo = 0.35, amp_ventricle_hi = 0.50;
    double amp_atrium_lo = 0.18, amp_atrium_hi = 0.30;
    double noise_lo = 5.0, noise_hi = 8.0;
    double blood_lo = 175, blood_hi = 205;
    double myo_lo = 70, myo_hi = 90;
    double bg_lo = 18, bg_hi = 30;
    double bsa_lo = 1.5, bsa_hi = 2.3;
    double jet_width_lo = 3.0, jet_width_hi = 5.5;
    double jet_delta_factor_lo = 0.8, jet_delta_factor_hi = 1.2;
    double jet_length_lo = 0.4, jet_length_hi = 0.6;
};

struct DatasetGenConfig {
    int n_unlabeled = 0;
    int n_labeled = 0;
    double mr_fraction = 0.0;
    PhantomSpec base;
    JetParams jet_base{true, -40, 4, 0.5, 2, 1, 23};
    PopulationRanges ranges;
    bool unlabeled_mr_mix = true;  // hidden jets in the unlabeled pool at mr_fraction
    int threads = 2;
};

namespace detail {

inline void scale_chamber(ChamberSpec& c, double k) {
    c.cu *= k;
    c.cw *= k;
    c.au *= k;
    c.aw *= k;
}

struct SampleDraw {
    PhantomSpec spec;
    JetParams jet;
    double bsa;
};

inline SampleDraw draw_sample(const DatasetGenConfig& cfg, uint64_t sample_seed, bool with_jet) {
    std::mt19937_64 rng(splitmix64(sample_seed));
    auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    const PopulationRanges& pr = cfg.ranges;

    SampleDraw d;
    d.spec = cfg.base;
    const double k = uni(pr.scale_lo, pr.scale_hi);
    scale_chamber(d.spec.lv, k);
    scale_chamber(d.spec.la, k);
    scale_chamber(d.spec.rv, k);
    scale_chamber(d.spec.ra, k);
    d.spec.myo_thickness_px *= k;
    d.spec.valve_u *= k;
    d.spec.sa.r_lv *= k;
    d.spec.sa.r_rv *= k;
    d.spec.sa.rv_offset *= k;
    d.spec.sa.myo_thickness *= k;
    d.spec.heart_row += uni(-pr.shift_px, pr.shift_px);
    d.spec.heart_col += uni(-pr.shift_px, pr.shift_px);
    d.spec.angle_deg += uni(-pr.angle_deg, pr.angle_deg);
    d.spec.angle_2ch_deg += uni(-10, 10);
    d.spec.lv.amplitude = uni(pr.amp_ventricle_lo, pr.amp_ventricle_hi);
    d.spec.rv.amplitude = uni(pr.amp_ventricle_lo, pr.amp_ventricle_hi);
    d.spec.la.amplitude = uni(pr.amp_atrium_lo, pr.amp_atrium_hi);
    d.spec.ra.amplitude = uni(pr.amp_atrium_lo, pr.amp_atrium_hi);
    d.spec.noise_sigma = uni(pr.noise_lo, pr.noise_hi);
    d.spec.intensity.blood = uni(pr.blood_lo, pr.blood_hi);
    d.spec.intensity.myocardium = uni(pr.myo_lo, pr.myo_hi);
    d.spec.intensity.background = uni(pr.bg_lo, pr.bg_hi);
    d.spec.phase = static_cast<int>(std::uniform_int_distribution<int>(0, d.spec.frames - 1)(rng));
    d.bsa = uni(pr.bsa_lo, pr.bsa_hi);

    d.jet = cfg.jet_base;
    d.jet.present = with_jet;
    d.jet.width_px = uni(pr.jet_width_lo, pr.jet_width_hi) * k;
    d.jet.delta = cfg.jet_base.delta * uni(pr.jet_delta_factor_lo, pr.jet_delta_factor_hi);
    d.jet.length_frac = uni(pr.jet_length_lo, pr.jet_length_hi);
    // systolic window: contraction runs from end-diastole (phase) for ~T/2
    d.jet.frame_start = (d.spec.phase + 1) % d.spec.frames;
    d.jet.frame_len = std::min(cfg.jet_base.frame_len, d.spec.frames / 2 - 2);
    return d;
}

}  // namespace detail

// Writes containers plus ground-truth masks for every sample and returns the
// manifest (also written to out_dir/manifest.tsv). Ground-truth mask paths
// follow the `<stem>_gt.acz` convention next to each view container.
inline io::DatasetManifest generate_dataset(const DatasetGenConfig& cfg, const std::filesystem::path& out_dir,
                                            uint64_t seed) {
    if (cfg.mr_fraction < 0 || cfg.mr_fraction > 1)
        throw ValidationError("generate_dataset: mr_fraction must be in [0,1]");
    if (cfg.mr_fraction > 0 && static_cast<double>(cfg.n_labeled) * cfg.mr_fraction < 1.0 && cfg.n_labeled > 0)
        throw ValidationError("generate_dataset: n_labeled * mr_fraction must be >= 1 when positive");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (!std::filesystem::exists(out_dir)) throw IoError("cannot create output dir " + out_dir.string());

    const int n_total = cfg.n_unlabeled + cfg.n_labeled;
    const int n_mr_labeled = static_cast<int>(std::llround(cfg.mr_fraction * cfg.n_labeled));

    // jet assignment: labeled ids get exactly n_mr_labeled jets, unlabeled ids
    // get hidden jets at the same fraction when mixing is on
    std::vector<bool> with_jet(static_cast<size_t>(n_total), false);
    {
        std::mt19937_64 rng(substream_seed(seed, "jet-assignment"));
        std::vector<int> labeled_idx(static_cast<size_t>(cfg.n_labeled));
        for (int i = 0; i < cfg.n_labeled; ++i) labeled_idx[static_cast<size_t>(i)] = cfg.n_unlabeled + i;
        std::shuffle(labeled_idx.begin(), labeled_idx.end(), rng);
        for (int i = 0; i < n_mr_labeled; ++i) with_jet[static_cast<size_t>(labeled_idx[static_cast<size_t>(i)])] = true;
        if (cfg.unlabeled_mr_mix && cfg.n_unlabeled > 0) {
            std::bernoulli_distribution coin(cfg.mr_fraction);
            for (int i = 0; i < cfg.n_unlabeled; ++i) with_jet[static_cast<size_t>(i)] = coin(rng);
        }
    }

    std::vector<io::ManifestEntry> entries(static_cast<size_t>(n_total));
    std::vector<std::string> failures(static_cast<size_t>(n_total));
    auto worker = [&](int begin, int step) {
        for (int i = begin; i < n_total; i += step) {
            try {
                char id[16];
                std::snprintf(id, sizeof(id), "s%05d", i);
                const uint64_t sample_seed = substream_seed(seed, "sample", static_cast<uint64_t>(i));
                const detail::SampleDraw d = detail::draw_sample(cfg, sample_seed, with_jet[static_cast<size_t>(i)]);
                const PhantomSample s = generate_sample(d.spec, d.jet, substream_seed(sample_seed, "render"));

                io::ManifestEntry e;
                e.sample_id = id;
                const bool labeled = i >= cfg.n_unlabeled;
                e.label = labeled ? s.label : io::Label::Unlabeled;
                e.bsa_m2 = d.bsa;
                const std::string stem = std::string(id);
                io::save_array(to_container(s.cine_4ch), out_dir / (stem + "_4ch.acz"));
                io::save_array(to_container(s.masks_4ch), out_dir / (stem + "_4ch_gt.acz"));
                e.view_paths["4CH"] = stem + "_4ch.acz";
                if (d.spec.render_2ch) {
                    io::save_array(to_container(s.cine_2ch), out_dir / (stem + "_2ch.acz"));
                    io::save_array(to_container(s.masks_2ch), out_dir / (stem + "_2ch_gt.acz"));
                    e.view_paths["2CH"] = stem + "_2ch.acz";
                }
                if (d.spec.sa.enabled) {
                    io::ArrayContainer img, msk;
                    img.shape = msk.shape = {static_cast<uint64_t>(s.sa.t), static_cast<uint64_t>(s.sa.s),
                                             static_cast<uint64_t>(s.sa.h), static_cast<uint64_t>(s.sa.w)};
                    img.dtype = msk.dtype = io::Dtype::u8;
                    img.data = s.sa.voxels;
                    msk.data = s.sa.labels;
                    img.meta["pixel_spacing_mm"] = msk.meta["pixel_spacing_mm"] =
                        std::to_string(s.sa.spacing_row_mm) + " " + std::to_string(s.sa.spacing_col_mm);
                    img.meta["slice_thickness_mm"] = msk.meta["slice_thickness_mm"] =
                        std::to_string(s.sa.slice_thickness_mm);
                    img.meta["frame_interval_ms"] = std::to_string(s.sa.frame_interval_ms);
                    img.meta["view"] = msk.meta["view"] = "SA";
                    io::save_array(img, out_dir / (stem + "_sa.acz"));
                    io::save_array(msk, out_dir / (stem + "_sa_gt.acz"));
                    e.view_paths["SA"] = stem + "_sa.acz";
                }
                entries[static_cast<size_t>(i)] = std::move(e);
            } catch (const std::exception& ex) {
                failures[static_cast<size_t>(i)] = ex.what();
            }
        }
    };
    const int n_threads = std::max(1, cfg.threads);
    std::vector<std::thread> pool;
    for (int th = 1; th < n_threads; ++th) pool.emplace_back(worker, th, n_threads);
    worker(0, n_threads);
    for (auto& th : pool) th.join();
    for (int i = 0; i < n_total; ++i)
        if (!failures[static_cast<size_t>(i)].empty())
            throw Error("generate_dataset: sample " + std::to_string(i) + " failed: " + failures[static_cast<size_t>(i)]);

    io::DatasetManifest m;
    m.base_dir = out_dir;
    m.entries = std::move(entries);
    io::save_manifest(m, out_dir / "manifest.tsv");
    return m;
}

// Ground-truth mask path convention for phantom datasets.
inline std::filesystem::path gt_mask_path(const std::filesystem::path& view_container) {
    std::filesystem::path p = view_container;
    p.replace_extension("");
    return p.string() + "_gt.acz";
}

}  // namespace cussp::phantom
