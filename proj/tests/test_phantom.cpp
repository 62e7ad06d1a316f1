#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "cussp/phantom/dataset.hpp"
#include "cussp/phantom/phantom.hpp"
#include "oracles.hpp"

using namespace cussp;
using phantom::JetParams;
using phantom::PhantomSpec;

namespace {

std::filesystem::path temp_dir() {
    static int counter = 0;
    auto p = std::filesystem::temp_directory_path() /
             ("cussp_phantom_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(p);
    return p;
}

double masked_mean(const CineSequence& seq, const MaskSequence& masks, int t, uint8_t cls) {
    double sum = 0;
    size_t n = 0;
    for (int r = 0; r < seq.h; ++r)
        for (int c = 0; c < seq.w; ++c)
            if (masks.at(t, r, c) == cls) {
                sum += seq.at(t, r, c);
                ++n;
            }
    return n ? sum / static_cast<double>(n) : 0.0;
}

}  // namespace

TEST(Phantom, ZeroAmplitudeFreezesAllFrames) {
    PhantomSpec spec;
    spec.lv.amplitude = spec.la.amplitude = spec.rv.amplitude = spec.ra.amplitude = 0;
    spec.noise_sigma = 0;
    auto [cine, masks, label] = phantom::generate_sequence(spec, JetParams{}, 5);
    for (int t = 1; t < cine.t; ++t) {
        EXPECT_EQ(0, std::memcmp(cine.frame(t), cine.frame(0), static_cast<size_t>(cine.h) * cine.w)) << t;
        EXPECT_EQ(0, std::memcmp(masks.frame(t), masks.frame(0), static_cast<size_t>(masks.h) * masks.w)) << t;
    }
    EXPECT_EQ(label, io::Label::NonMR);
}

TEST(Phantom, NoJetMeansHomogeneousLaUpToNoise) {
    PhantomSpec spec;
    auto [cine, masks, label] = phantom::generate_sequence(spec, JetParams{}, 11);
    EXPECT_EQ(label, io::Label::NonMR);
    // LA intensity std should be close to the configured noise level
    for (int t : {0, 10, 25}) {
        double sum = 0, sum2 = 0;
        size_t n = 0;
        for (int r = 0; r < cine.h; ++r)
            for (int c = 0; c < cine.w; ++c)
                if (masks.at(t, r, c) == seg::kLa) {
                    sum += cine.at(t, r, c);
                    sum2 += cine.at(t, r, c) * cine.at(t, r, c);
                    ++n;
                }
        const double mean = sum / n;
        const double sd = std::sqrt(sum2 / n - mean * mean);
        EXPECT_NEAR(sd, spec.noise_sigma, 1.5) << "frame " << t;
    }
}

TEST(Phantom, DeterministicBytesUnderSeed) {
    PhantomSpec spec;
    JetParams jet;
    jet.present = true;
    auto [a_cine, a_masks, a_label] = phantom::generate_sequence(spec, jet, 42);
    auto [b_cine, b_masks, b_label] = phantom::generate_sequence(spec, jet, 42);
    EXPECT_EQ(a_cine.voxels, b_cine.voxels);
    EXPECT_EQ(a_masks.labels, b_masks.labels);
    auto [c_cine, c_masks, c_label] = phantom::generate_sequence(spec, jet, 43);
    EXPECT_NE(a_cine.voxels, c_cine.voxels);
}

TEST(Phantom, MaskIntensityConsistency) {
    PhantomSpec spec;
    auto [cine, masks, label] = phantom::generate_sequence(spec, JetParams{}, 9);
    for (int t : {0, 12, 37}) {
        const double myo = masked_mean(cine, masks, t, seg::kLvMyocardium);
        for (uint8_t cls : {seg::kLvBloodpool, seg::kLa, seg::kRv, seg::kRa}) {
            const double chamber = masked_mean(cine, masks, t, cls);
            EXPECT_GE(chamber - myo, 3.0 * spec.noise_sigma) << "class " << int(cls) << " frame " << t;
        }
    }
}

TEST(Phantom, JetSignalExistsIffMr) {
    PhantomSpec spec;
    spec.noise_sigma = 5;
    JetParams jet;
    jet.present = true;
    jet.delta = -40;
    jet.frame_start = 1;
    jet.frame_len = 23;
    auto [mr, mr_masks, mr_label] = phantom::generate_sequence(spec, jet, 77);
    auto [nn, nn_masks, nn_label] = phantom::generate_sequence(spec, JetParams{}, 77);
    EXPECT_EQ(mr_label, io::Label::MR);
    ASSERT_EQ(mr_masks.labels, nn_masks.labels);  // jet never alters masks

    // systolic frame inside the jet window: jet region mean sits well below
    // the surrounding LA; in the twin non-MR sample the same region is flat
    const int t = 5;
    double jet_sum_mr = 0, jet_sum_nn = 0, la_sum = 0;
    size_t jet_n = 0, la_n = 0;
    for (int r = 0; r < mr.h; ++r)
        for (int c = 0; c < mr.w; ++c) {
            if (mr_masks.at(t, r, c) != seg::kLa) continue;
            if (phantom::jet_coverage(spec, jet, t, r, c) > 0.99) {
                jet_sum_mr += mr.at(t, r, c);
                jet_sum_nn += nn.at(t, r, c);
                ++jet_n;
            } else {
                la_sum += nn.at(t, r, c);
                ++la_n;
            }
        }
    ASSERT_GT(jet_n, 10u);
    const double la_mean = la_sum / static_cast<double>(la_n);
    EXPECT_LT(jet_sum_mr / jet_n, la_mean - 30) << "jet must darken the LA core region";
    EXPECT_NEAR(jet_sum_nn / jet_n, la_mean, 6) << "non-MR twin must be flat in the jet region";

    // outside the jet window the MR and twin frames agree pixelwise
    const int quiet = (jet.frame_start + jet.frame_len + 3) % spec.frames;
    EXPECT_EQ(0, std::memcmp(mr.frame(quiet), nn.frame(quiet), static_cast<size_t>(mr.h) * mr.w));
}

TEST(Phantom, LvAreaHasUniqueExtremaAtPhase) {
    PhantomSpec spec;
    spec.phase = 7;
    auto [cine, masks, label] = phantom::generate_sequence(spec, JetParams{}, 3);
    std::vector<size_t> area(static_cast<size_t>(masks.t));
    for (int t = 0; t < masks.t; ++t) area[static_cast<size_t>(t)] = masks.class_pixels(t, seg::kLvBloodpool);
    const auto max_it = std::max_element(area.begin(), area.end());
    const auto min_it = std::min_element(area.begin(), area.end());
    EXPECT_EQ(max_it - area.begin(), 7);
    EXPECT_EQ(min_it - area.begin(), (7 + spec.frames / 2) % spec.frames);
}

TEST(Phantom, OverlappingChambersRejected) {
    PhantomSpec spec;
    spec.rv.cw = spec.lv.cw;  // collide RV with the left heart
    JetParams jet;
    EXPECT_THROW(phantom::generate_sequence(spec, jet, 1), ValidationError);
}

TEST(Phantom, RasterizedAreasTrackClosedForm) {
    PhantomSpec spec;
    spec.noise_sigma = 0;
    auto [cine, masks, label] = phantom::generate_sequence(spec, JetParams{}, 21);
    for (int t : {0, 13, 25, 44}) {
        const oracle::LongAxisAreas a = oracle::long_axis_areas(spec, t, false);
        EXPECT_NEAR(masks.class_pixels(t, seg::kLvBloodpool), a.lv, 0.03 * a.lv + 6) << t;
        EXPECT_NEAR(masks.class_pixels(t, seg::kLa), a.la, 0.03 * a.la + 6) << t;
        EXPECT_NEAR(masks.class_pixels(t, seg::kRv), a.rv, 0.03 * a.rv + 6) << t;
        EXPECT_NEAR(masks.class_pixels(t, seg::kRa), a.ra, 0.03 * a.ra + 6) << t;
        EXPECT_NEAR(masks.class_pixels(t, seg::kLvMyocardium), a.myo, 0.05 * a.myo + 8) << t;
    }
}

TEST(InjectJet, ZeroDeltaIsIdentity) {
    PhantomSpec spec;
    auto [cine, masks, label] = phantom::generate_sequence(spec, JetParams{}, 8);
    JetParams jet;
    jet.present = true;
    jet.delta = 0;
    const CineSequence out = phantom::inject_jet(cine, masks, jet, 1);
    EXPECT_EQ(out.voxels, cine.voxels);
}

TEST(InjectJet, FramesOutsideRangeUntouched) {
    PhantomSpec spec;
    auto [cine, masks, label] = phantom::generate_sequence(spec, JetParams{}, 8);
    JetParams jet;
    jet.present = true;
    jet.delta = -30;
    jet.width_px = 3;
    jet.frame_start = 10;
    jet.frame_len = 25;
    const CineSequence out = phantom::inject_jet(cine, masks, jet, 2);
    size_t altered_inside = 0;
    for (int t = 0; t < cine.t; ++t) {
        const bool inside = t >= 10 && t < 35;
        const bool same = std::memcmp(out.frame(t), cine.frame(t), static_cast<size_t>(cine.h) * cine.w) == 0;
        if (!inside) EXPECT_TRUE(same) << "frame " << t;
        else altered_inside += !same;
    }
    EXPECT_EQ(altered_inside, 25u);
}

TEST(InjectJet, DeltaShiftsJetPixelMean) {
    PhantomSpec spec;
    spec.intensity.blood = 180;
    spec.noise_sigma = 2;
    auto [cine, masks, label] = phantom::generate_sequence(spec, JetParams{}, 15);
    JetParams jet;
    jet.present = true;
    jet.delta = -40;
    jet.noise_sigma = 1;
    jet.frame_start = 2;
    jet.frame_len = 20;
    const CineSequence out = phantom::inject_jet(cine, masks, jet, 3);
    double diff_sum = 0;
    size_t n = 0;
    for (int t = 2; t < 22; ++t)
        for (int r = 0; r < cine.h; ++r)
            for (int c = 0; c < cine.w; ++c)
                if (out.at(t, r, c) != cine.at(t, r, c)) {
                    diff_sum += out.at(t, r, c);
                    ++n;
                }
    ASSERT_GT(n, 50u);
    EXPECT_NEAR(diff_sum / static_cast<double>(n), 140.0, 4.0);  // LA mean 180 + delta -40
}

TEST(GenerateDataset, CountsFilesAndDeterminism) {
    const auto dir = temp_dir();
    phantom::DatasetGenConfig cfg;
    cfg.n_unlabeled = 6;
    cfg.n_labeled = 30;
    cfg.mr_fraction = 0.2;
    cfg.base.frames = 30;
    const io::DatasetManifest m = phantom::generate_dataset(cfg, dir, 99);
    const io::LabelCounts c = m.counts();
    EXPECT_EQ(c.mr, 6u);
    EXPECT_EQ(c.non_mr, 24u);
    EXPECT_EQ(c.unlabeled, 6u);
    const io::DatasetManifest reloaded = io::load_manifest(dir / "manifest.tsv");  // validates paths
    EXPECT_EQ(reloaded.entries.size(), 36u);
    for (const auto& e : reloaded.entries) {
        ASSERT_TRUE(e.view_paths.count("4CH"));
        ASSERT_TRUE(e.view_paths.count("2CH"));
        ASSERT_TRUE(e.view_paths.count("SA"));
        EXPECT_TRUE(std::filesystem::exists(phantom::gt_mask_path(reloaded.resolve(e.view_paths.at("4CH")))));
    }
    // per-sample determinism regardless of worker interleaving
    const auto dir2 = temp_dir();
    cfg.threads = 1;
    phantom::generate_dataset(cfg, dir2, 99);
    const auto a = io::load_array(dir / "s00012_4ch.acz");
    const auto b = io::load_array(dir2 / "s00012_4ch.acz");
    EXPECT_EQ(a.data, b.data);
}

TEST(GenerateDataset, MrFractionBoundaries) {
    const auto dir = temp_dir();
    phantom::DatasetGenConfig cfg;
    cfg.n_labeled = 5;
    cfg.mr_fraction = 1.0;
    cfg.base.frames = 4;
    cfg.base.sa.enabled = false;
    cfg.base.render_2ch = false;
    const io::DatasetManifest m = phantom::generate_dataset(cfg, dir, 1);
    EXPECT_EQ(m.counts().mr, 5u);
    phantom::DatasetGenConfig bad = cfg;
    bad.mr_fraction = 0.05;  // 5 * 0.05 < 1
    EXPECT_THROW(phantom::generate_dataset(bad, dir, 1), ValidationError);
}

TEST(GenerateDataset, AllUnlabeledShape) {
    const auto dir = temp_dir();
    phantom::DatasetGenConfig cfg;
    cfg.n_unlabeled = 8;
    cfg.mr_fraction = 0.14;
    cfg.base.frames = 4;
    cfg.base.sa.enabled = false;
    cfg.base.render_2ch = false;
    const io::DatasetManifest m = phantom::generate_dataset(cfg, dir, 2);
    EXPECT_EQ(m.counts().unlabeled, 8u);
    EXPECT_EQ(m.counts().labeled(), 0u);
}

TEST(Phantom, SaStackShapesAndSimpsonFriendlyRadii) {
    PhantomSpec spec;
    const SaStack sa = phantom::render_short_axis(spec, 5);
    EXPECT_EQ(sa.t, spec.frames);
    EXPECT_EQ(sa.s, spec.sa.slices);
    // slice areas shrink monotonically toward the apex
    double prev = 1e9;
    for (int k = 0; k < sa.s; ++k) {
        size_t n = 0;
        const uint8_t* msk = sa.mask(0, k);
        for (size_t i = 0; i < static_cast<size_t>(sa.h) * sa.w; ++i) n += msk[i] == seg::kLvBloodpool;
        EXPECT_LT(static_cast<double>(n), prev);
        const oracle::SaAreas a = oracle::sa_areas(spec, 0, k);
        EXPECT_NEAR(static_cast<double>(n), a.lv, 0.05 * a.lv + 5) << "slice " << k;
        prev = static_cast<double>(n);
    }
}

int main(int argc, char** argv) {
    ::testing::InitGoogleTest(&argc, argv);
    return RUN_ALL_TESTS();
}
