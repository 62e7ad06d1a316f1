#include <gtest/gtest.h>
#include <torch/torch.h>

#include <random>

#include "cussp/repr/augment.hpp"
#include "cussp/repr/encoder.hpp"
#include "cussp/repr/losses.hpp"
#include "cussp/repr/train.hpp"

using namespace cussp;
using namespace cussp::repr;

namespace {

// brute-force Barlow Twins: double loops, same standardization convention
double naive_barlow(const std::vector<std::vector<double>>& za, const std::vector<std::vector<double>>& zb,
                    double lambda) {
    const size_t b = za.size(), d = za[0].size();
    auto standardize = [&](const std::vector<std::vector<double>>& z) {
        std::vector<std::vector<double>> out(b, std::vector<double>(d));
        for (size_t j = 0; j < d; ++j) {
            double mean = 0;
            for (size_t i = 0; i < b; ++i) mean += z[i][j];
            mean /= static_cast<double>(b);
            double var = 0;
            for (size_t i = 0; i < b; ++i) var += (z[i][j] - mean) * (z[i][j] - mean);
            var /= static_cast<double>(b);
            for (size_t i = 0; i < b; ++i) out[i][j] = (z[i][j] - mean) / std::sqrt(var + kStandardizeEps);
        }
        return out;
    };
    const auto a_n = standardize(za);
    const auto b_n = standardize(zb);
    double loss = 0;
    for (size_t i = 0; i < d; ++i)
        for (size_t j = 0; j < d; ++j) {
            double c = 0;
            for (size_t k = 0; k < b; ++k) c += a_n[k][i] * b_n[k][j];
            c /= static_cast<double>(b);
            loss += i == j ? (1 - c) * (1 - c) : lambda * c * c;
        }
    return loss;
}

torch::Tensor to_tensor64(const std::vector<std::vector<double>>& m) {
    torch::Tensor t = torch::empty({static_cast<int64_t>(m.size()), static_cast<int64_t>(m[0].size())},
                                   torch::kFloat64);
    for (size_t i = 0; i < m.size(); ++i)
        for (size_t j = 0; j < m[0].size(); ++j) t[static_cast<int64_t>(i)][static_cast<int64_t>(j)] = m[i][j];
    return t;
}

std::vector<std::vector<double>> random_matrix(size_t b, size_t d, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0, 1);
    std::vector<std::vector<double>> m(b, std::vector<double>(d));
    for (auto& row : m)
        for (auto& v : row) v = n(rng);
    return m;
}

prep::ValvePatchSequence synthetic_patches(int t, int p, bool dark_spot, uint64_t seed) {
    prep::ValvePatchSequence v;
    v.t = t;
    v.p = p;
    v.systolic_start = 0;
    v.patches.resize(static_cast<size_t>(t) * p * p);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> u(60, 200);
    for (auto& px : v.patches) px = static_cast<uint8_t>(u(rng));
    if (dark_spot)
        for (int ti = 0; ti < t; ++ti)
            for (int r = p / 4; r < p / 2; ++r)
                for (int c = p / 4; c < p / 2; ++c) v.patch(ti)[r * p + c] = 15;
    for (int ti = 0; ti < t; ++ti) v.source_frames.push_back(ti);
    return v;
}

}  // namespace

TEST(BarlowTwins, DecorrelatedUnitVarianceGivesZero) {
    // columns standardized and pairwise decorrelated -> C = I
    const torch::Tensor za = to_tensor64({{1, 1}, {-1, 1}, {1, -1}, {-1, -1}});
    const torch::Tensor loss = barlow_twins_loss(za, za.clone(), 5e-3);
    EXPECT_LT(loss.item<double>(), 1e-8);
}

TEST(BarlowTwins, UncorrelatedViewsGiveInvarianceTermOnly) {
    // four mutually orthogonal mean-zero Hadamard columns over a batch of 8:
    // every entry of C vanishes, so the loss is D * (1-0)^2
    const torch::Tensor za = to_tensor64({{1, 1}, {-1, 1}, {1, -1}, {-1, -1}, {1, 1}, {-1, 1}, {1, -1}, {-1, -1}});
    const torch::Tensor zb = to_tensor64({{1, 1}, {1, -1}, {1, -1}, {1, 1}, {-1, -1}, {-1, 1}, {-1, 1}, {-1, -1}});
    EXPECT_NEAR(barlow_twins_loss(za, zb, 5e-3).item<double>(), 2.0, 1e-4);
}

TEST(BarlowTwins, MatchesNaiveImplementationTo1e6) {
    std::mt19937_64 rng(7);
    for (int rep = 0; rep < 10; ++rep) {
        const auto za = random_matrix(8, 16, rng);
        const auto zb = random_matrix(8, 16, rng);
        const double got = barlow_twins_loss(to_tensor64(za), to_tensor64(zb), 5e-3).item<double>();
        const double want = naive_barlow(za, zb, 5e-3);
        EXPECT_NEAR(got, want, 1e-6 * std::max(1.0, std::abs(want)));
    }
}

TEST(BarlowTwins, GradientMatchesCentralDifferences) {
    std::mt19937_64 rng(11);
    torch::Tensor za = to_tensor64(random_matrix(8, 16, rng)).requires_grad_(true);
    torch::Tensor zb = to_tensor64(random_matrix(8, 16, rng));
    barlow_twins_loss(za, zb, 5e-3).backward();
    const torch::Tensor grad = za.grad().clone();
    std::uniform_int_distribution<int> pick_b(0, 7), pick_d(0, 15);
    const double h = 1e-6;
    for (int probe = 0; probe < 50; ++probe) {
        const int i = pick_b(rng), j = pick_d(rng);
        torch::Tensor z = za.detach().clone();
        z[i][j] += h;
        const double up = barlow_twins_loss(z, zb, 5e-3).item<double>();
        z[i][j] -= 2 * h;
        const double dn = barlow_twins_loss(z, zb, 5e-3).item<double>();
        const double fd = (up - dn) / (2 * h);
        const double an = grad[i][j].item<double>();
        EXPECT_NEAR(an, fd, 1e-3 * std::max(1.0, std::abs(fd))) << "probe " << probe;
    }
}

TEST(BarlowTwins, SymmetrizedFlagIsSymmetric) {
    std::mt19937_64 rng(13);
    const torch::Tensor za = to_tensor64(random_matrix(6, 12, rng));
    const torch::Tensor zb = to_tensor64(random_matrix(6, 12, rng));
    const double ab = barlow_twins_loss(za, zb, 5e-3, /*symmetrized=*/true).item<double>();
    const double ba = barlow_twins_loss(zb, za, 5e-3, /*symmetrized=*/true).item<double>();
    EXPECT_NEAR(ab, ba, 1e-12);
}

TEST(BarlowTwins, ZeroVarianceFeatureStaysFinite) {
    std::mt19937_64 rng(17);
    auto za = random_matrix(8, 4, rng);
    for (auto& row : za) row[2] = 3.14;  // dead feature
    const double loss = barlow_twins_loss(to_tensor64(za), to_tensor64(za), 5e-3).item<double>();
    EXPECT_TRUE(std::isfinite(loss));
    EXPECT_THROW(barlow_twins_loss(to_tensor64({{1.0, 2.0}}), to_tensor64({{1.0, 2.0}}), 5e-3), ValidationError);
}

TEST(ContrastiveLoss, WorkedCases) {
    const torch::Tensor e = torch::tensor({0.3f, -0.7f, 0.1f});
    EXPECT_NEAR(contrastive_loss(e, e.clone(), true, 1.0).item<double>(), 0.0, 1e-12);
    // orthogonal unit vectors: d = sqrt(2) > m = 1 -> 0
    const torch::Tensor a = torch::tensor({1.0f, 0.0f});
    const torch::Tensor b = torch::tensor({0.0f, 1.0f});
    EXPECT_NEAR(contrastive_loss(a, b, false, 1.0).item<double>(), 0.0, 1e-12);
    // identical vectors, different class, m = 1 -> (1 - 0)^2 = 1
    EXPECT_NEAR(contrastive_loss(a, a.clone(), false, 1.0).item<double>(), 1.0, 1e-6);
}

TEST(ContrastiveLoss, GradientMatchesCentralDifferences) {
    std::mt19937_64 rng(19);
    std::normal_distribution<double> n(0, 1);
    int checked = 0;
    for (int probe = 0; probe < 200 && checked < 50; ++probe) {
        torch::Tensor e1 = torch::empty({6}, torch::kFloat64);
        torch::Tensor e2 = torch::empty({6}, torch::kFloat64);
        for (int i = 0; i < 6; ++i) {
            e1[i] = n(rng);
            e2[i] = n(rng);
        }
        const bool same = probe % 2 == 0;
        const double m = 1.0;
        {  // stay away from the max() kink
            const torch::Tensor d = (e1 / e1.norm() - e2 / e2.norm()).norm();
            if (!same && std::abs(m - d.item<double>()) < 1e-2) continue;
        }
        torch::Tensor e1g = e1.clone().requires_grad_(true);
        contrastive_loss(e1g, e2, same, m).backward();
        const int j = probe % 6;
        const double h = 1e-6;
        torch::Tensor ep = e1.clone();
        ep[j] += h;
        const double up = contrastive_loss(ep, e2, same, m).item<double>();
        ep[j] -= 2 * h;
        const double dn = contrastive_loss(ep, e2, same, m).item<double>();
        const double fd = (up - dn) / (2 * h);
        const double an = e1g.grad()[j].item<double>();
        EXPECT_NEAR(an, fd, 1e-3 * std::max(0.1, std::abs(fd))) << "probe " << probe;
        ++checked;
    }
    EXPECT_GE(checked, 50);
}

TEST(Encode, MeanPoolingInvariances) {
    torch::manual_seed(3);
    EncoderConfig cfg;
    cfg.input_px = 32;
    ResNetEncoder enc(cfg);
    enc->eval();
    const prep::ValvePatchSequence seq = synthetic_patches(8, 32, false, 5);
    torch::NoGradGuard guard;
    const torch::Tensor frames = patches_to_tensor(seq);
    const torch::Tensor base = encode_frames(enc, frames);
    EXPECT_EQ(base.numel(), 512);
    // frame permutation leaves the mean unchanged
    const torch::Tensor perm = torch::randperm(8, torch::kInt64);
    const torch::Tensor shuffled = encode_frames(enc, frames.index_select(0, perm));
    EXPECT_LT((base - shuffled).abs().max().item<double>(), 1e-5);
    // T identical frames equal the single-frame embedding
    const torch::Tensor rep = frames.slice(0, 0, 1).repeat({6, 1, 1, 1});
    const torch::Tensor single = encode_frames(enc, frames.slice(0, 0, 1));
    EXPECT_LT((encode_frames(enc, rep) - single).abs().max().item<double>(), 1e-5);
    // 25- and 50-frame inputs both produce 512-d embeddings
    const prep::ValvePatchSequence s25 = synthetic_patches(25, 32, false, 6);
    const prep::ValvePatchSequence s50 = synthetic_patches(50, 32, false, 7);
    EXPECT_EQ(encode_frames(enc, patches_to_tensor(s25)).numel(), 512);
    EXPECT_EQ(encode_frames(enc, patches_to_tensor(s50)).numel(), 512);
}

TEST(SamplePair, AnchorAlwaysNonMrOtherBalanced) {
    std::vector<int> labels(200, 0);
    for (int i = 0; i < 40; ++i) labels[static_cast<size_t>(i)] = 1;
    std::mt19937_64 rng(23);
    int mr_draws = 0;
    for (int i = 0; i < 10000; ++i) {
        const PairDraw d = sample_pair(labels, rng);
        ASSERT_EQ(labels[d.anchor], 0);
        ASSERT_EQ(d.same_class, labels[d.other] == 0);
        mr_draws += labels[d.other];
    }
    EXPECT_NEAR(mr_draws / 10000.0, 0.5, 0.02);
    // single-MR sets repeat the lone sample without failing
    std::vector<int> tiny{0, 0, 0, 1};
    std::mt19937_64 rng2(5);
    for (int i = 0; i < 50; ++i) {
        const PairDraw d = sample_pair(tiny, rng2);
        if (!d.same_class) EXPECT_EQ(d.other, 3u);
    }
    // deterministic stream
    std::mt19937_64 ra(9), rb(9);
    for (int i = 0; i < 20; ++i) {
        const PairDraw a = sample_pair(labels, ra);
        const PairDraw b = sample_pair(labels, rb);
        EXPECT_EQ(a.anchor, b.anchor);
        EXPECT_EQ(a.other, b.other);
    }
    std::vector<int> single(5, 0);
    std::mt19937_64 rc(1);
    EXPECT_THROW(sample_pair(single, rc), ValidationError);
}

TEST(Pretrain, ZeroEpochsEqualsInitializationAndDeterminism) {
    std::vector<prep::ValvePatchSequence> seqs;
    std::vector<std::string> ids;
    for (int i = 0; i < 4; ++i) {
        seqs.push_back(synthetic_patches(4, 32, false, 100 + static_cast<uint64_t>(i)));
        ids.push_back("s" + std::to_string(i));
    }
    EncoderConfig cfg;
    cfg.input_px = 32;
    PretrainOptions opt;
    opt.epochs = 0;
    opt.batch = 4;
    opt.seed = 42;
    const PretrainResult a = pretrain(seqs, ids, cfg, {}, opt);
    const PretrainResult b = pretrain(seqs, ids, cfg, {}, opt);
    EXPECT_EQ(a.checkpoint.blobs.size(), b.checkpoint.blobs.size());
    for (const auto& [name, blob] : a.checkpoint.blobs) EXPECT_TRUE(b.checkpoint.blob(name) == blob) << name;
    EXPECT_DOUBLE_EQ(a.probe_loss_initial, a.probe_loss_final);

    PretrainOptions bad = opt;
    bad.batch = 1;
    EXPECT_THROW(pretrain(seqs, ids, cfg, {}, bad), ValidationError);
}

TEST(Pretrain, DeterministicLossesAndProbeDrop) {
    std::vector<prep::ValvePatchSequence> seqs;
    std::vector<std::string> ids;
    for (int i = 0; i < 12; ++i) {
        seqs.push_back(synthetic_patches(5, 32, i % 2 == 0, 200 + static_cast<uint64_t>(i)));
        ids.push_back("s" + std::to_string(i));
    }
    EncoderConfig cfg;
    cfg.input_px = 32;
    PretrainOptions opt;
    opt.epochs = 3;
    opt.batch = 6;
    opt.lr = 2e-3;
    opt.seed = 77;
    const PretrainResult a = pretrain(seqs, ids, cfg, {}, opt);
    const PretrainResult b = pretrain(seqs, ids, cfg, {}, opt);
    ASSERT_EQ(a.epoch_losses.size(), 3u);
    for (size_t e = 0; e < 3; ++e) EXPECT_NEAR(a.epoch_losses[e], b.epoch_losses[e], 1e-6);
    EXPECT_NEAR(a.probe_loss_final, b.probe_loss_final, 1e-6);
    EXPECT_LT(a.probe_loss_final, 0.8 * a.probe_loss_initial) << "probe loss must drop by at least 20%";
}

TEST(Finetune, FreezeContractAndZeroEpochIdentity) {
    std::vector<prep::ValvePatchSequence> seqs;
    std::vector<std::string> ids;
    std::vector<int> labels;
    for (int i = 0; i < 10; ++i) {
        const bool mr = i % 3 == 0;
        seqs.push_back(synthetic_patches(4, 32, mr, 300 + static_cast<uint64_t>(i)));
        ids.push_back("s" + std::to_string(i));
        labels.push_back(mr ? 1 : 0);
    }
    EncoderConfig cfg;
    cfg.input_px = 32;
    PretrainOptions popt;
    popt.epochs = 1;
    popt.batch = 5;
    popt.seed = 31;
    const PretrainResult pre = pretrain(seqs, ids, cfg, {}, popt);

    FinetuneOptions fopt;
    fopt.epochs = 0;
    const io::Checkpoint same = finetune_siamese(pre.checkpoint, seqs, labels, fopt);
    for (const auto& [name, blob] : pre.checkpoint.blobs) EXPECT_TRUE(same.blob(name) == blob) << name;

    fopt.epochs = 2;
    fopt.batch_pairs = 5;
    fopt.lr = 1e-3;
    fopt.seed = 8;
    const io::Checkpoint tuned = finetune_siamese(pre.checkpoint, seqs, labels, fopt);
    size_t changed_last_block = 0;
    for (const auto& [name, blob] : pre.checkpoint.blobs) {
        const bool last_block = name.rfind("encoder.layer4", 0) == 0;
        if (last_block) {
            changed_last_block += !(tuned.blob(name) == blob);
        } else {
            EXPECT_TRUE(tuned.blob(name) == blob) << "frozen blob changed: " << name;
        }
    }
    EXPECT_GT(changed_last_block, 0u);
    EXPECT_EQ(repr::encoder_stage(tuned), "finetuned");
}

TEST(Finetune, ClassGapWidensOnSeparableData) {
    std::vector<prep::ValvePatchSequence> seqs;
    std::vector<std::string> ids;
    std::vector<int> labels;
    for (int i = 0; i < 16; ++i) {
        const bool mr = i < 6;
        seqs.push_back(synthetic_patches(4, 32, mr, 400 + static_cast<uint64_t>(i)));
        ids.push_back("s" + std::to_string(i));
        labels.push_back(mr ? 1 : 0);
    }
    EncoderConfig cfg;
    cfg.input_px = 32;
    PretrainOptions popt;
    popt.epochs = 1;
    popt.batch = 8;
    popt.seed = 55;
    const PretrainResult pre = pretrain(seqs, ids, cfg, {}, popt);

    auto probe_gap = [&](const io::Checkpoint& ckpt) {
        ResNetEncoder enc(encoder_config_from(ckpt));
        load_encoder(enc, ckpt);
        enc->eval();
        torch::NoGradGuard guard;
        std::vector<torch::Tensor> embs;
        for (const auto& s : seqs) {
            torch::Tensor e = encode_frames(enc, patches_to_tensor(s));
            embs.push_back(e / (e.norm() + 1e-12));
        }
        double same_d = 0, cross_d = 0;
        int same_n = 0, cross_n = 0;
        for (size_t i = 0; i < seqs.size(); ++i)
            for (size_t j = i + 1; j < seqs.size(); ++j) {
                const double d = (embs[i] - embs[j]).norm().item<double>();
                if (labels[i] == labels[j]) {
                    same_d += d;
                    ++same_n;
                } else {
                    cross_d += d;
                    ++cross_n;
                }
            }
        return cross_d / cross_n - same_d / same_n;
    };

    const double gap_before = probe_gap(pre.checkpoint);
    FinetuneOptions fopt;
    fopt.epochs = 4;
    fopt.batch_pairs = 8;
    fopt.pairs_per_epoch = 32;
    fopt.lr = 1e-3;
    fopt.seed = 3;
    const io::Checkpoint tuned = finetune_siamese(pre.checkpoint, seqs, labels, fopt);
    const double gap_after = probe_gap(tuned);
    EXPECT_GT(gap_after, gap_before) << "cross-class minus same-class distance must widen";
}

int main(int argc, char** argv) {
    at::set_num_threads(2);
    ::testing::InitGoogleTest(&argc, argv);
    return RUN_ALL_TESTS();
}
