#pragma once

#include <torch/torch.h>

#include <json.hpp>
#include <random>
#include <string>
#include <vector>

#include "cussp/common.hpp"
#include "cussp/io/checkpoint.hpp"
#include "cussp/nn/torch_io.hpp"
#include "cussp/seg/classes.hpp"
#include "cussp/seg/dice.hpp"
#include "cussp/seg/unet.hpp"
#include "cussp/sequence.hpp"

namespace cussp::seg {

struct SegmenterConfig {
    std::string view = "4CH";
    std::string preset = "unet";  // unet | ternaus
    int depth = 4;
    int base_width = 32;
    int input_px = 64;
    int epochs = 30;
    int batch = 8;
    double lr = 1e-3;
    std::string loss = "sum";  // cross_entropy | soft_dice | sum
    uint64_t seed = 0;
    bool augment_hflip = true;
    double val_fraction = 0.15;

    void validate() const {
        classes_for_view(view);
        const int div = preset == "ternaus" ? 16 : (1 << depth);
        if (input_px % div != 0)
            throw ConfigError("segmenter: input size " + std::to_string(input_px) + " not divisible by " +
                              std::to_string(div));
        if (loss != "cross_entropy" && loss != "soft_dice" && loss != "sum")
            throw ConfigError("segmenter: unknown loss '" + loss + "'");
        if (preset != "unet" && preset != "ternaus") throw ConfigError("segmenter: unknown preset '" + preset + "'");
        if (batch < 1 || epochs < 0) throw ConfigError("segmenter: bad batch/epochs");
    }

    nlohmann::json to_json() const {
        return {{"view", view},   {"preset", preset},       {"depth", depth},
                {"base_width", base_width}, {"input_px", input_px}, {"epochs", epochs},
                {"batch", batch}, {"lr", lr},               {"loss", loss},
                {"seed", seed},   {"augment_hflip", augment_hflip}, {"val_fraction", val_fraction}};
    }

    static SegmenterConfig from_json(const nlohmann::json& j) {
        SegmenterConfig c;
        c.view = j.value("view", c.view);
        c.preset = j.value("preset", c.preset);
        c.depth = j.value("depth", c.depth);
        c.base_width = j.value("base_width", c.base_width);
        c.input_px = j.value("input_px", c.input_px);
        c.epochs = j.value("epochs", c.epochs);
        c.batch = j.value("batch", c.batch);
        c.lr = j.value("lr", c.lr);
        c.loss = j.value("loss", c.loss);
        c.seed = j.value("seed", c.seed);
        c.augment_hflip = j.value("augment_hflip", c.augment_hflip);
        c.val_fraction = j.value("val_fraction", c.val_fraction);
        return c;
    }
};

struct LabeledFrame {
    int h = 0, w = 0;
    std::vector<uint8_t> image;
    std::vector<uint8_t> mask;
};

namespace detail {

// per-frame min-max normalization to [0,1], resampled to the network input
inline torch::Tensor frame_to_input(const uint8_t* img, int h, int w, int input_px) {
    torch::Tensor t = torch::empty({1, 1, h, w}, torch::kUInt8);
    std::memcpy(t.data_ptr(), img, static_cast<size_t>(h) * w);
    torch::Tensor f = t.to(torch::kFloat32);
    const double lo = f.min().item<double>(), hi = f.max().item<double>();
    f = hi > lo ? (f - lo) / (hi - lo) : torch::zeros_like(f);
    namespace F = torch::nn::functional;
    if (h != input_px || w != input_px)
        f = F::interpolate(f, F::InterpolateFuncOptions()
                                  .size(std::vector<int64_t>{input_px, input_px})
                                  .mode(torch::kBilinear)
                                  .align_corners(false));
    return f;  // (1,1,in,in)
}

inline torch::Tensor mask_to_classes(const uint8_t* mask, int h, int w, const std::vector<uint8_t>& classes,
                                     int input_px) {
    torch::Tensor t = torch::empty({1, 1, h, w}, torch::kUInt8);
    std::memcpy(t.data_ptr(), mask, static_cast<size_t>(h) * w);
    torch::Tensor f = t.to(torch::kFloat32);
    namespace F = torch::nn::functional;
    if (h != input_px || w != input_px)
        f = F::interpolate(f, F::InterpolateFuncOptions().size(std::vector<int64_t>{input_px, input_px}).mode(torch::kNearest));
    torch::Tensor idx = torch::zeros({1, input_px, input_px}, torch::kInt64);
    const torch::Tensor rounded = f.round().to(torch::kUInt8).squeeze(1);
    for (size_t k = 0; k < classes.size(); ++k)
        idx.masked_fill_(rounded == classes[k], static_cast<int64_t>(k));
    return idx;  // (1,in,in) dense class indices
}

inline torch::Tensor soft_dice_loss(const torch::Tensor& logits, const torch::Tensor& target,
                                    const std::vector<bool>& in_macro) {
    const torch::Tensor probs = torch::softmax(logits, 1);
    const int64_t n_classes = logits.size(1);
    const torch::Tensor onehot =
        torch::one_hot(target, n_classes).permute({0, 3, 1, 2}).to(torch::kFloat32);
    torch::Tensor acc = torch::zeros({}, torch::kFloat32);
    int n = 0;
    for (int64_t c = 1; c < n_classes; ++c) {  // foreground macro
        if (!in_macro[static_cast<size_t>(c)]) continue;
        const torch::Tensor p = probs.select(1, c);
        const torch::Tensor g = onehot.select(1, c);
        const torch::Tensor d = (2.0 * (p * g).sum() + 1e-6) / (p.sum() + g.sum() + 1e-6);
        acc = acc + (1.0 - d);
        ++n;
    }
    return n ? acc / n : acc;
}

}  // namespace detail

struct SegTrainResult {
    io::Checkpoint checkpoint;
    std::vector<double> epoch_losses;
    double val_soft_dice = 0;
    std::vector<std::string> warnings;
};

// Supervised training over labeled frames. Classes absent from every mask are
// excluded from the Dice macro (with a warning); batch order, initialization
// and the hflip augmentation stream are all pure functions of the seed.
inline SegTrainResult train_segmenter(const std::vector<LabeledFrame>& frames, const SegmenterConfig& cfg) {
    cfg.validate();
    if (frames.empty()) throw ValidationError("train_segmenter: empty training set");
    const std::vector<uint8_t> classes = classes_for_view(cfg.view);

    std::vector<torch::Tensor> xs, ys;
    std::vector<size_t> class_count(classes.size(), 0);
    for (const auto& f : frames) {
        xs.push_back(detail::frame_to_input(f.image.data(), f.h, f.w, cfg.input_px));
        ys.push_back(detail::mask_to_classes(f.mask.data(), f.h, f.w, classes, cfg.input_px));
        for (size_t k = 0; k < classes.size(); ++k)
            class_count[k] += static_cast<size_t>((ys.back() == static_cast<int64_t>(k)).sum().item<int64_t>());
    }
    SegTrainResult result;
    std::vector<bool> in_macro(classes.size(), true);
    for (size_t k = 1; k < classes.size(); ++k)
        if (class_count[k] == 0) {
            in_macro[k] = false;
            result.warnings.push_back("class " + std::to_string(classes[k]) +
                                      " absent from all masks; excluded from Dice macro");
        }

    // deterministic validation holdout
    std::vector<size_t> order(frames.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 split_rng(substream_seed(cfg.seed, "seg-val"));
    std::shuffle(order.begin(), order.end(), split_rng);
    size_t n_val = static_cast<size_t>(std::llround(cfg.val_fraction * static_cast<double>(frames.size())));
    if (cfg.val_fraction > 0 && n_val == 0 && frames.size() > 1) n_val = 1;
    const std::vector<size_t> val_idx(order.begin(), order.begin() + static_cast<ptrdiff_t>(n_val));
    const std::vector<size_t> train_idx(order.begin() + static_cast<ptrdiff_t>(n_val), order.end());
    if (train_idx.empty()) throw ValidationError("train_segmenter: no frames left after validation split");

    torch::manual_seed(substream_seed(cfg.seed, "seg-init"));
    UNet net(static_cast<int>(classes.size()), cfg.depth, cfg.base_width, cfg.preset);
    torch::optim::Adam optim(net->parameters(), torch::optim::AdamOptions(cfg.lr));

    std::vector<size_t> batch_order = train_idx;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::mt19937_64 order_rng(substream_seed(cfg.seed, "seg-order", static_cast<uint64_t>(epoch)));
        std::shuffle(batch_order.begin(), batch_order.end(), order_rng);
        std::mt19937_64 aug_rng(substream_seed(cfg.seed, "seg-aug", static_cast<uint64_t>(epoch)));
        net->train();
        double loss_sum = 0;
        int n_batches = 0;
        for (size_t at = 0; at < batch_order.size(); at += static_cast<size_t>(cfg.batch)) {
            const size_t take = std::min<size_t>(static_cast<size_t>(cfg.batch), batch_order.size() - at);
            std::vector<torch::Tensor> bx, by;
            for (size_t k = 0; k < take; ++k) {
                torch::Tensor x = xs[batch_order[at + k]];
                torch::Tensor y = ys[batch_order[at + k]];
                if (cfg.augment_hflip && std::uniform_real_distribution<double>(0, 1)(aug_rng) < 0.5) {
                    x = x.flip(3);
                    y = y.flip(2);
                }
                bx.push_back(x);
                by.push_back(y);
            }
            const torch::Tensor x = torch::cat(bx, 0);
            const torch::Tensor y = torch::cat(by, 0);
            optim.zero_grad();
            const torch::Tensor logits = net->forward(x);
            torch::Tensor loss = torch::zeros({}, torch::kFloat32);
            if (cfg.loss != "soft_dice") loss = loss + torch::nn::functional::cross_entropy(logits, y);
            if (cfg.loss != "cross_entropy") loss = loss + detail::soft_dice_loss(logits, y, in_macro);
            loss.backward();
            optim.step();
            loss_sum += loss.item<double>();
            ++n_batches;
        }
        result.epoch_losses.push_back(n_batches ? loss_sum / n_batches : 0.0);
    }

    // validation soft-Dice, macro over usable foreground classes
    {
        torch::NoGradGuard guard;
        net->eval();
        const std::vector<size_t>& pool = val_idx.empty() ? train_idx : val_idx;
        double acc = 0;
        for (size_t i : pool) {
            const torch::Tensor logits = net->forward(xs[i]);
            acc += 1.0 - detail::soft_dice_loss(logits, ys[i], in_macro).item<double>();
        }
        result.val_soft_dice = acc / static_cast<double>(pool.size());
    }

    result.checkpoint.component = io::Component::Segmenter;
    result.checkpoint.epoch = cfg.epochs;
    result.checkpoint.rng_seed = cfg.seed;
    result.checkpoint.config_json = cfg.to_json().dump();
    nn::store_module(result.checkpoint, *net);
    return result;
}

// Per-frame argmax labeling at the original resolution (nearest upsample of
// the class map back to H x W).
inline MaskSequence segment(const io::Checkpoint& ckpt, const CineSequence& seq) {
    if (ckpt.component != io::Component::Segmenter) throw ValidationError("segment: not a segmenter checkpoint");
    const SegmenterConfig cfg = SegmenterConfig::from_json(nlohmann::json::parse(ckpt.config_json));
    if (!seq.view.empty() && seq.view != cfg.view)
        throw ValidationError("segment: checkpoint is for view " + cfg.view + ", sequence is " + seq.view);
    const std::vector<uint8_t> classes = classes_for_view(cfg.view);
    UNet net(static_cast<int>(classes.size()), cfg.depth, cfg.base_width, cfg.preset);
    nn::load_module(*net, ckpt);
    net->eval();

    MaskSequence out;
    out.t = seq.t;
    out.h = seq.h;
    out.w = seq.w;
    out.spacing_row_mm = seq.spacing_row_mm;
    out.spacing_col_mm = seq.spacing_col_mm;
    out.view = seq.view.empty() ? cfg.view : seq.view;
    out.labels.assign(static_cast<size_t>(seq.t) * seq.h * seq.w, 0);

    torch::NoGradGuard guard;
    namespace F = torch::nn::functional;
    const int chunk = 32;
    for (int t0 = 0; t0 < seq.t; t0 += chunk) {
        const int take = std::min(chunk, seq.t - t0);
        std::vector<torch::Tensor> bx;
        for (int k = 0; k < take; ++k)
            bx.push_back(detail::frame_to_input(seq.frame(t0 + k), seq.h, seq.w, cfg.input_px));
        const torch::Tensor logits = net->forward(torch::cat(bx, 0));
        torch::Tensor pred = logits.argmax(1, /*keepdim=*/true).to(torch::kFloat32);
        if (cfg.input_px != seq.h || cfg.input_px != seq.w)
            pred = F::interpolate(pred, F::InterpolateFuncOptions()
                                            .size(std::vector<int64_t>{seq.h, seq.w})
                                            .mode(torch::kNearest));
        const torch::Tensor idx = pred.squeeze(1).round().to(torch::kInt64);
        auto acc = idx.accessor<int64_t, 3>();
        for (int k = 0; k < take; ++k)
            for (int r = 0; r < seq.h; ++r)
                for (int c = 0; c < seq.w; ++c) out.at(t0 + k, r, c) = classes[static_cast<size_t>(acc[k][r][c])];
    }
    return out;
}

}  // namespace cussp::seg
