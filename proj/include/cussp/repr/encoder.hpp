#pragma once

#include <torch/torch.h>

#include <json.hpp>
#include <string>
#include <vector>

#include "cussp/common.hpp"
#include "cussp/io/checkpoint.hpp"
#include "cussp/nn/torch_io.hpp"
#include "cussp/prep/patch.hpp"

namespace cussp::repr {

// 18-layer residual encoder over single-channel patches, 512-d output,
// followed by the 512 -> 2048 -> 2048 projector used during pretraining.
struct EncoderConfig {
    int embedding_dim = 512;
    int projector_hidden = 2048;
    int projector_out = 2048;
    int input_px = 64;
    std::string temporal_pooling = "mean";

    void validate() const {
        if (embedding_dim != 512) throw ConfigError("encoder: embedding dim is pinned to 512");
        if (projector_hidden != 2048 || projector_out != 2048)
            throw ConfigError("encoder: projector dims are pinned to 2048/2048");
        if (input_px < 16) throw ConfigError("encoder: input_px too small");
        if (temporal_pooling != "mean") throw ConfigError("encoder: only mean pooling is supported");
    }
};

struct BasicBlockImpl : torch::nn::Module {
    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
    torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
    torch::nn::Sequential downsample{nullptr};

    BasicBlockImpl(int in_ch, int out_ch, int stride) {
        conv1 = register_module(
            "conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, out_ch, 3).stride(stride).padding(1).bias(false)));
        bn1 = register_module("bn1", torch::nn::BatchNorm2d(out_ch));
        conv2 = register_module(
            "conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(out_ch, out_ch, 3).stride(1).padding(1).bias(false)));
        bn2 = register_module("bn2", torch::nn::BatchNorm2d(out_ch));
        if (stride != 1 || in_ch != out_ch) {
            downsample = torch::nn::Sequential(
                torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, out_ch, 1).stride(stride).bias(false)),
                torch::nn::BatchNorm2d(out_ch));
            register_module("downsample", downsample);
        }
    }

    torch::Tensor forward(const torch::Tensor& x) {
        torch::Tensor out = torch::relu(bn1(conv1(x)));
        out = bn2(conv2(out));
        const torch::Tensor identity = downsample.is_empty() ? x : downsample->forward(x);
        return torch::relu(out + identity);
    }
};
TORCH_MODULE(BasicBlock);

struct ResNetEncoderImpl : torch::nn::Module {
    torch::nn::Conv2d stem{nullptr};
    torch::nn::BatchNorm2d stem_bn{nullptr};
    torch::nn::Sequential layer1, layer2, layer3, layer4;

    explicit ResNetEncoderImpl(const EncoderConfig& cfg = {}) {
        cfg.validate();
        stem = register_module("conv1",
                               torch::nn::Conv2d(torch::nn::Conv2dOptions(1, 64, 7).stride(2).padding(3).bias(false)));
        stem_bn = register_module("bn1", torch::nn::BatchNorm2d(64));
        layer1 = make_layer(64, 64, 1);
        layer2 = make_layer(64, 128, 2);
        layer3 = make_layer(128, 256, 2);
        layer4 = make_layer(256, 512, 2);
        register_module("layer1", layer1);
        register_module("layer2", layer2);
        register_module("layer3", layer3);
        register_module("layer4", layer4);
    }

    static torch::nn::Sequential make_layer(int in_ch, int out_ch, int stride) {
        torch::nn::Sequential seq;
        seq->push_back(BasicBlock(in_ch, out_ch, stride));
        seq->push_back(BasicBlock(out_ch, out_ch, 1));
        return seq;
    }

    // (B, 1, P, P) -> (B, 512)
    torch::Tensor forward(const torch::Tensor& x) {
        torch::Tensor h = torch::relu(stem_bn(stem(x)));
        h = torch::max_pool2d(h, 3, 2, 1);
        h = layer1->forward(h);
        h = layer2->forward(h);
        h = layer3->forward(h);
        h = layer4->forward(h);
        h = torch::adaptive_avg_pool2d(h, {1, 1});
        return h.flatten(1);
    }
};
TORCH_MODULE(ResNetEncoder);

struct ProjectorImpl : torch::nn::Module {
    torch::nn::Linear fc1{nullptr}, fc2{nullptr};
    torch::nn::BatchNorm1d bn{nullptr};

    explicit ProjectorImpl(const EncoderConfig& cfg = {}) {
        fc1 = register_module("fc1", torch::nn::Linear(cfg.embedding_dim, cfg.projector_hidden));
        bn = register_module("bn", torch::nn::BatchNorm1d(cfg.projector_hidden));
        fc2 = register_module("fc2", torch::nn::Linear(cfg.projector_hidden, cfg.projector_out));
    }

    torch::Tensor forward(const torch::Tensor& x) { return fc2(torch::relu(bn(fc1(x)))); }
};
TORCH_MODULE(Projector);

// Freeze everything outside the last residual block. Frozen BatchNorm modules
// must also run in eval mode during training so their buffers stay put; call
// set_frozen_bn_eval after every train() flip.
inline void freeze_all_but_last_block(ResNetEncoder& enc) {
    for (auto& p : enc->named_parameters())
        p.value().set_requires_grad(p.key().rfind("layer4", 0) == 0);
}

inline void set_frozen_bn_eval(ResNetEncoder& enc) {
    for (const auto& m : enc->named_modules("", /*include_self=*/false)) {
        if (m.key().rfind("layer4", 0) == 0) continue;
        if (auto* bn = m.value()->as<torch::nn::BatchNorm2d>()) bn->eval();
    }
}

inline std::vector<torch::Tensor> trainable_parameters(torch::nn::Module& m) {
    std::vector<torch::Tensor> out;
    for (auto& p : m.parameters())
        if (p.requires_grad()) out.push_back(p);
    return out;
}

// uint8 patches -> (T, 1, P, P) float in [0, 1]
inline torch::Tensor patches_to_tensor(const prep::ValvePatchSequence& v) {
    torch::Tensor t = torch::empty({v.t, 1, v.p, v.p}, torch::kUInt8);
    std::memcpy(t.data_ptr(), v.patches.data(), v.patches.size());
    return t.to(torch::kFloat32) / 255.0;
}

struct SequenceEmbedding {
    std::vector<float> values;  // 512-d
    std::string sample_id;
    std::string encoder_ckpt_id;
};

// Per-frame encoder outputs mean-pooled over frames (order-invariant).
inline torch::Tensor encode_frames(ResNetEncoder& enc, const torch::Tensor& frames) {
    return enc->forward(frames).mean(0);
}

inline SequenceEmbedding encode(ResNetEncoder& enc, const prep::ValvePatchSequence& patches,
                                const std::string& sample_id = "") {
    torch::NoGradGuard guard;
    enc->eval();
    const torch::Tensor e = encode_frames(enc, patches_to_tensor(patches));
    SequenceEmbedding out;
    out.sample_id = sample_id;
    out.values.resize(static_cast<size_t>(e.numel()));
    std::memcpy(out.values.data(), e.contiguous().data_ptr<float>(), out.values.size() * sizeof(float));
    return out;
}

inline io::Checkpoint encoder_checkpoint(ResNetEncoder& enc, Projector& proj, const EncoderConfig& cfg,
                                         uint64_t seed, int64_t epoch, const std::string& stage = "pretrained") {
    io::Checkpoint ckpt;
    ckpt.component = io::Component::Encoder;
    ckpt.epoch = epoch;
    ckpt.rng_seed = seed;
    ckpt.config_json = nlohmann::json{{"embedding_dim", cfg.embedding_dim},
                                      {"input_px", cfg.input_px},
                                      {"projector_hidden", cfg.projector_hidden},
                                      {"projector_out", cfg.projector_out},
                                      {"stage", stage}}
                           .dump();
    nn::store_module(ckpt, *enc, "encoder.");
    nn::store_module(ckpt, *proj, "projector.");
    return ckpt;
}

inline EncoderConfig encoder_config_from(const io::Checkpoint& ckpt) {
    EncoderConfig cfg;
    const nlohmann::json j = nlohmann::json::parse(ckpt.config_json);
    cfg.input_px = j.value("input_px", 64);
    return cfg;
}

inline std::string encoder_stage(const io::Checkpoint& ckpt) {
    return nlohmann::json::parse(ckpt.config_json).value("stage", "pretrained");
}

inline void load_encoder(ResNetEncoder& enc, const io::Checkpoint& ckpt) { nn::load_module(*enc, ckpt, "encoder."); }
inline void load_projector(Projector& proj, const io::Checkpoint& ckpt) { nn::load_module(*proj, ckpt, "projector."); }

}  // namespace cussp::repr
