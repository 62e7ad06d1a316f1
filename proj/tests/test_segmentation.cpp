#include <gtest/gtest.h>
#include <torch/torch.h>

#include "cussp/phantom/phantom.hpp"
#include "cussp/seg/dice.hpp"
#include "cussp/seg/segmenter.hpp"

using namespace cussp;
using seg::LabeledFrame;
using seg::SegmenterConfig;

namespace {

std::vector<LabeledFrame> phantom_frames(int n_samples, int frames_per_sample, uint64_t seed) {
    std::vector<LabeledFrame> out;
    phantom::PhantomSpec spec;
    spec.frames = frames_per_sample;
    for (int s = 0; s < n_samples; ++s) {
        phantom::PhantomSpec sp = spec;
        sp.angle_deg = -10 + 7 * s;
        sp.phase = (3 * s) % frames_per_sample;
        auto [cine, masks, label] = phantom::generate_sequence(sp, phantom::JetParams{}, seed + static_cast<uint64_t>(s));
        for (int t = 0; t < frames_per_sample; ++t) {
            LabeledFrame f;
            f.h = cine.h;
            f.w = cine.w;
            f.image.assign(cine.frame(t), cine.frame(t) + static_cast<size_t>(cine.h) * cine.w);
            f.mask.assign(masks.frame(t), masks.frame(t) + static_cast<size_t>(masks.h) * masks.w);
            out.push_back(std::move(f));
        }
    }
    return out;
}

SegmenterConfig small_config() {
    SegmenterConfig cfg;
    cfg.view = "4CH";
    cfg.depth = 3;
    cfg.base_width = 16;
    cfg.input_px = 64;
    cfg.epochs = 10;
    cfg.batch = 8;
    cfg.lr = 2e-3;
    cfg.seed = 5;
    return cfg;
}

// trained once, shared across tests in this binary
const seg::SegTrainResult& trained() {
    static const seg::SegTrainResult result = [] {
        return seg::train_segmenter(phantom_frames(6, 6, 900), small_config());
    }();
    return result;
}

}  // namespace

TEST(Dice, CountingCases) {
    MaskSequence a, b;
    a.t = b.t = 1;
    a.h = b.h = 10;
    a.w = b.w = 30;
    a.labels.assign(300, 0);
    b.labels.assign(300, 0);
    for (int i = 0; i < 100; ++i) a.labels[static_cast<size_t>(i)] = 1;
    for (int i = 50; i < 150; ++i) b.labels[static_cast<size_t>(i)] = 1;
    EXPECT_DOUBLE_EQ(seg::dice(a, a, 1), 1.0);
    EXPECT_DOUBLE_EQ(seg::dice(a, b, 1), 0.5);  // |A|=|B|=100, overlap 50
    EXPECT_DOUBLE_EQ(seg::dice(a, b, 7), 1.0);  // both empty
    MaskSequence c = b;
    for (auto& v : c.labels) v = v ? 0 : 0;
    for (int i = 200; i < 250; ++i) c.labels[static_cast<size_t>(i)] = 1;
    EXPECT_DOUBLE_EQ(seg::dice(a, c, 1), 0.0);  // disjoint
    MaskSequence shrunk = b;
    shrunk.w = 15;
    shrunk.labels.resize(150);
    EXPECT_THROW(seg::dice(a, shrunk, 1), ValidationError);
}

TEST(SegmenterConfig, InputDivisibilityValidation) {
    SegmenterConfig cfg;
    cfg.input_px = 127;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg.input_px = 64;
    cfg.loss = "nope";
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(TrainSegmenter, ZeroEpochsEqualsInitialization) {
    const auto frames = phantom_frames(1, 2, 43);
    SegmenterConfig cfg = small_config();
    cfg.epochs = 0;
    cfg.val_fraction = 0.5;
    const auto a = seg::train_segmenter(frames, cfg);
    const auto b = seg::train_segmenter(frames, cfg);
    for (const auto& [name, blob] : a.checkpoint.blobs) EXPECT_TRUE(b.checkpoint.blob(name) == blob) << name;
    EXPECT_EQ(a.checkpoint.epoch, 0);
}

TEST(TrainSegmenter, LearnsPhantomAnatomy) {
    const auto& result = trained();
    EXPECT_GT(result.val_soft_dice, 0.85) << "held-out soft Dice after training";
    // window-averaged training loss must not increase (tolerance 1e-3)
    const auto& losses = result.epoch_losses;
    ASSERT_GE(losses.size(), 10u);
    auto window = [&](size_t at) {
        double s = 0;
        for (size_t k = at; k < at + 5; ++k) s += losses[k];
        return s / 5.0;
    };
    for (size_t at = 0; at + 6 <= losses.size(); ++at)
        EXPECT_LE(window(at + 1), window(at) + 1e-3) << "window at " << at;
}

TEST(Segment, PhantomDiceAgainstGroundTruth) {
    phantom::PhantomSpec spec;
    spec.frames = 4;
    spec.angle_deg = 3;
    auto [cine, masks, label] = phantom::generate_sequence(spec, phantom::JetParams{}, 4242);
    const MaskSequence pred = seg::segment(trained().checkpoint, cine);
    ASSERT_EQ(pred.t, cine.t);
    ASSERT_EQ(pred.h, cine.h);
    ASSERT_EQ(pred.w, cine.w);
    for (uint8_t cls : {seg::kLvBloodpool, seg::kLa, seg::kRv, seg::kRa})
        EXPECT_GT(seg::dice(pred, masks, cls), 0.8) << "class " << int(cls);
}

TEST(Segment, DegenerateInputStaysValid) {
    CineSequence zeros;
    zeros.t = 2;
    zeros.h = zeros.w = 128;
    zeros.view = "4CH";
    zeros.voxels.assign(2 * 128 * 128, 0);
    const MaskSequence pred = seg::segment(trained().checkpoint, zeros);
    EXPECT_EQ(pred.t, 2);
    const auto classes = seg::classes_for_view("4CH");
    for (uint8_t v : pred.labels)
        EXPECT_NE(std::find(classes.begin(), classes.end(), v), classes.end());
}

TEST(Segment, ViewMismatchRejected) {
    phantom::PhantomSpec spec;
    spec.frames = 2;
    phantom::PhantomSample s = phantom::generate_sample(spec, phantom::JetParams{}, 9);
    EXPECT_THROW(seg::segment(trained().checkpoint, s.cine_2ch), ValidationError);
}

TEST(Segment, FlipEquivarianceWithinTolerance) {
    phantom::PhantomSpec spec;
    spec.frames = 3;
    auto [cine, masks, label] = phantom::generate_sequence(spec, phantom::JetParams{}, 77);
    const MaskSequence direct = seg::segment(trained().checkpoint, cine);

    CineSequence flipped = cine;
    MaskSequence flipped_truth = masks;
    for (int t = 0; t < cine.t; ++t)
        for (int r = 0; r < cine.h; ++r)
            for (int c = 0; c < cine.w; ++c) {
                flipped.at(t, r, c) = cine.at(t, r, cine.w - 1 - c);
                flipped_truth.at(t, r, c) = masks.at(t, r, masks.w - 1 - c);
            }
    const MaskSequence pred_flipped = seg::segment(trained().checkpoint, flipped);
    for (uint8_t cls : {seg::kLvBloodpool, seg::kLa}) {
        const double d_direct = seg::dice(direct, masks, cls);
        const double d_flip = seg::dice(pred_flipped, flipped_truth, cls);
        EXPECT_LT(std::abs(d_direct - d_flip), 0.05) << "class " << int(cls);
    }
}

TEST(TrainSegmenter, TernausPresetTrains) {
    auto frames = phantom_frames(2, 3, 321);
    SegmenterConfig cfg = small_config();
    cfg.preset = "ternaus";
    cfg.input_px = 64;
    cfg.epochs = 2;
    const auto result = seg::train_segmenter(frames, cfg);
    EXPECT_EQ(result.checkpoint.epoch, 2);
    EXPECT_FALSE(result.checkpoint.blobs.empty());
}

int main(int argc, char** argv) {
    at::set_num_threads(2);
    ::testing::InitGoogleTest(&argc, argv);
    return RUN_ALL_TESTS();
}
