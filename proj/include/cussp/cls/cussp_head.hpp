#pragma once

#include <torch/torch.h>

#include <json.hpp>
#include <string>
#include <vector>

#include "cussp/common.hpp"
#include "cussp/io/checkpoint.hpp"
#include "cussp/nn/torch_io.hpp"
#include "cussp/prep/patch.hpp"
#include "cussp/repr/augment.hpp"
#include "cussp/repr/train.hpp"

namespace cussp::cls {

enum class CusspVariant { Cussp1, Cussp2, Cussp3, Siam, Siam25 };

inline std::string variant_name(CusspVariant v) {
    switch (v) {
        case CusspVariant::Cussp1: return "cussp1";
        case CusspVariant::Cussp2: return "cussp2";
        case CusspVariant::Cussp3: return "cussp3";
        case CusspVariant::Siam: return "cussp_siam";
        case CusspVariant::Siam25: return "cussp_siam25";
    }
    throw ValidationError("bad variant");
}

inline CusspVariant variant_from_name(const std::string& s) {
    if (s == "cussp1") return CusspVariant::Cussp1;
    if (s == "cussp2") return CusspVariant::Cussp2;
    if (s == "cussp3") return CusspVariant::Cussp3;
    if (s == "cussp_siam") return CusspVariant::Siam;
    if (s == "cussp_siam25") return CusspVariant::Siam25;
    throw ValidationError("unknown CUSSP variant '" + s + "'");
}

// Joint-loss weights per variant: CUSSP-1/2/3 mix the cross-correlation and
// cross-entropy terms (0.9/0.1, 0.5/0.5, 0.1/0.9); the SIAM variants train
// with cross-entropy only on a frozen-except-last-block encoder.
struct CusspHeadConfig {
    CusspVariant variant = CusspVariant::Siam25;
    double w_corr = 0.0, w_ce = 1.0;
    bool truncate25 = true;
    double dropout = 0.1;
    double lambda = 5e-3;  // off-diagonal weight inside the correlation term
    int epochs = 5;
    int batch = 16;
    double lr = 1e-4;
    uint64_t seed = 0;
    bool pos_weight_balance = true;
    int frame_stride = 1;
    prep::PreprocessConfig prep;  // embedded so predict() can rebuild patches

    static CusspHeadConfig for_variant(CusspVariant v) {
        CusspHeadConfig c;
        c.variant = v;
        switch (v) {
            case CusspVariant::Cussp1: c.w_corr = 0.9; c.w_ce = 0.1; c.truncate25 = false; break;
            case CusspVariant::Cussp2: c.w_corr = 0.5; c.w_ce = 0.5; c.truncate25 = false; break;
            case CusspVariant::Cussp3: c.w_corr = 0.1; c.w_ce = 0.9; c.truncate25 = false; break;
            case CusspVariant::Siam: c.w_corr = 0.0; c.w_ce = 1.0; c.truncate25 = false; break;
            case CusspVariant::Siam25: c.w_corr = 0.0; c.w_ce = 1.0; c.truncate25 = true; break;
        }
        return c;
    }

    bool is_siam() const { return variant == CusspVariant::Siam || variant == CusspVariant::Siam25; }

    void validate() const {
        if (is_siam()) {
            if (w_ce != 1.0 || w_corr != 0.0)
                throw ConfigError("cussp: SIAM variants train with cross-entropy only");
            if (variant == CusspVariant::Siam25 && !truncate25)
                throw ConfigError("cussp: SIAM-25 requires truncate25");
        } else {
            if (std::abs(w_corr + w_ce - 1.0) > 1e-12)
                throw ConfigError("cussp: loss weights must satisfy w_corr + w_ce = 1");
        }
        if (dropout < 0 || dropout >= 1) throw ConfigError("cussp: bad dropout");
    }

    nlohmann::json to_json() const {
        return {{"variant", variant_name(variant)},
                {"w_corr", w_corr},
                {"w_ce", w_ce},
                {"truncate25", truncate25},
                {"dropout", dropout},
                {"lambda", lambda},
                {"epochs", epochs},
                {"batch", batch},
                {"lr", lr},
                {"seed", seed},
                {"pos_weight_balance", pos_weight_balance},
                {"frame_stride", frame_stride},
                {"prep_patch_size", prep.patch_size},
                {"prep_crop_factor", prep.crop_factor},
                {"prep_min_crop_px", prep.min_crop_px}};
    }

    static CusspHeadConfig from_json(const nlohmann::json& j) {
        CusspHeadConfig c = for_variant(variant_from_name(j.at("variant").get<std::string>()));
        c.w_corr = j.value("w_corr", c.w_corr);
        c.w_ce = j.value("w_ce", c.w_ce);
        c.truncate25 = j.value("truncate25", c.truncate25);
        c.dropout = j.value("dropout", c.dropout);
        c.lambda = j.value("lambda", c.lambda);
        c.epochs = j.value("epochs", c.epochs);
        c.batch = j.value("batch", c.batch);
        c.lr = j.value("lr", c.lr);
        c.seed = j.value("seed", c.seed);
        c.pos_weight_balance = j.value("pos_weight_balance", c.pos_weight_balance);
        c.frame_stride = j.value("frame_stride", c.frame_stride);
        c.prep.patch_size = j.value("prep_patch_size", c.prep.patch_size);
        c.prep.crop_factor = j.value("prep_crop_factor", c.prep.crop_factor);
        c.prep.min_crop_px = j.value("prep_min_crop_px", c.prep.min_crop_px);
        return c;
    }
};

// 3-layer MLP head: 512 -> 256 -> 64 -> 1.
struct MlpHeadImpl : torch::nn::Module {
    torch::nn::Linear fc1{nullptr}, fc2{nullptr}, fc3{nullptr};
    torch::nn::Dropout drop{nullptr};

    explicit MlpHeadImpl(double dropout = 0.1) {
        fc1 = register_module("fc1", torch::nn::Linear(512, 256));
        fc2 = register_module("fc2", torch::nn::Linear(256, 64));
        fc3 = register_module("fc3", torch::nn::Linear(64, 1));
        drop = register_module("drop", torch::nn::Dropout(dropout));
    }

    torch::Tensor forward(const torch::Tensor& x) {
        torch::Tensor h = torch::relu(fc1(x));
        h = drop(h);
        h = torch::relu(fc2(h));
        return fc3(h).squeeze(-1);  // logits
    }
};
TORCH_MODULE(MlpHead);

struct CusspModel {
    repr::ResNetEncoder encoder{nullptr};
    repr::Projector projector{nullptr};
    MlpHead head{nullptr};
    CusspHeadConfig config;
};

inline io::Checkpoint cussp_model_checkpoint(CusspModel& m, uint64_t seed, int64_t epoch) {
    io::Checkpoint ckpt;
    ckpt.component = io::Component::MlpHead;
    ckpt.epoch = epoch;
    ckpt.rng_seed = seed;
    ckpt.config_json = m.config.to_json().dump();
    nn::store_module(ckpt, *m.encoder, "encoder.");
    nn::store_module(ckpt, *m.projector, "projector.");
    nn::store_module(ckpt, *m.head, "head.");
    return ckpt;
}

inline CusspModel load_cussp_model(const io::Checkpoint& ckpt) {
    if (ckpt.component != io::Component::MlpHead)
        throw ValidationError("load_cussp_model: not a CUSSP classifier checkpoint");
    CusspModel m;
    m.config = CusspHeadConfig::from_json(nlohmann::json::parse(ckpt.config_json));
    repr::EncoderConfig ecfg;
    ecfg.input_px = m.config.prep.patch_size;
    m.encoder = repr::ResNetEncoder(ecfg);
    m.projector = repr::Projector(ecfg);
    m.head = MlpHead(m.config.dropout);
    nn::load_module(*m.encoder, ckpt, "encoder.");
    nn::load_module(*m.projector, ckpt, "projector.");
    nn::load_module(*m.head, ckpt, "head.");
    return m;
}

// Joint objective for variants 1-3: w_corr * BarlowTwins(proj(hA), proj(hB))
// + w_ce * mean of the two views' weighted cross-entropies. With w_corr = 0
// this reduces numerically to the pure cross-entropy term.
inline torch::Tensor cussp_joint_loss(CusspModel& m, const std::vector<torch::Tensor>& view_a,
                                      const std::vector<torch::Tensor>& view_b, const torch::Tensor& y,
                                      double pos_weight) {
    namespace F = torch::nn::functional;
    const torch::Tensor pw = torch::tensor({pos_weight}, torch::kFloat32);
    auto bce = [&](const torch::Tensor& logits) {
        return F::binary_cross_entropy_with_logits(logits, y,
                                                   F::BinaryCrossEntropyWithLogitsFuncOptions().pos_weight(pw));
    };
    const torch::Tensor ha = repr::encode_batch(m.encoder, view_a);
    const torch::Tensor hb = repr::encode_batch(m.encoder, view_b);
    const torch::Tensor ce = 0.5 * (bce(m.head->forward(ha)) + bce(m.head->forward(hb)));
    torch::Tensor corr = torch::zeros({}, torch::kFloat32);
    if (m.config.w_corr > 0)
        corr = repr::barlow_twins_loss(m.projector->forward(ha), m.projector->forward(hb), m.config.lambda);
    return m.config.w_corr * corr + m.config.w_ce * ce;
}

// Step (iii): classifier training. SIAM variants: cross-entropy only with the
// fine-tuned encoder frozen outside layer4. CUSSP-1/2/3: end-to-end joint
// loss; the correlation term runs on two augmented copies of every batch
// sequence, mirroring pretraining, and the cross-entropy averages both views.
inline io::Checkpoint train_cussp(const io::Checkpoint& encoder_ckpt,
                                  const std::vector<prep::ValvePatchSequence>& seqs,
                                  const std::vector<std::string>& ids, const std::vector<int>& labels,
                                  const CusspHeadConfig& cfg_in, const repr::AugmentationPolicy& policy = {}) {
    CusspHeadConfig cfg = cfg_in;
    cfg.validate();
    if (encoder_ckpt.component != io::Component::Encoder)
        throw ValidationError("train_cussp: need an encoder checkpoint");
    const std::string stage = repr::encoder_stage(encoder_ckpt);
    if (cfg.is_siam() && stage != "finetuned")
        throw ValidationError("train_cussp: SIAM variants require a siamese-finetuned encoder, got '" + stage + "'");
    if (!cfg.is_siam() && stage != "pretrained")
        throw ValidationError("train_cussp: variants 1-3 train from the pretrained encoder, got '" + stage + "'");
    if (seqs.empty() || seqs.size() != labels.size() || seqs.size() != ids.size())
        throw ValidationError("train_cussp: bad labeled set");

    size_t n_pos = 0;
    for (int l : labels) n_pos += static_cast<size_t>(l);
    if (n_pos == 0 || n_pos == labels.size()) throw ValidationError("train_cussp: need both classes");

    torch::manual_seed(substream_seed(cfg.seed, "cussp-init"));
    CusspModel m;
    m.config = cfg;
    repr::EncoderConfig ecfg = repr::encoder_config_from(encoder_ckpt);
    m.encoder = repr::ResNetEncoder(ecfg);
    m.projector = repr::Projector(ecfg);
    m.head = MlpHead(cfg.dropout);
    repr::load_encoder(m.encoder, encoder_ckpt);
    repr::load_projector(m.projector, encoder_ckpt);

    std::vector<torch::Tensor> params;
    if (cfg.is_siam()) {
        repr::freeze_all_but_last_block(m.encoder);
        params = repr::trainable_parameters(*m.encoder);
    } else {
        params = m.encoder->parameters();
        for (auto& p : m.projector->parameters()) params.push_back(p);
    }
    for (auto& p : m.head->parameters()) params.push_back(p);
    torch::optim::Adam optim(params, torch::optim::AdamOptions(cfg.lr));

    const double pos_weight =
        cfg.pos_weight_balance ? static_cast<double>(labels.size() - n_pos) / static_cast<double>(n_pos) : 1.0;
    const torch::Tensor pw = torch::tensor({pos_weight}, torch::kFloat32);
    namespace F = torch::nn::functional;
    auto bce = [&](const torch::Tensor& logits, const torch::Tensor& y) {
        return F::binary_cross_entropy_with_logits(logits, y,
                                                   F::BinaryCrossEntropyWithLogitsFuncOptions().pos_weight(pw));
    };

    std::vector<size_t> order(seqs.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::mt19937_64 order_rng(substream_seed(cfg.seed, "cussp-order", static_cast<uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), order_rng);
        m.encoder->train();
        if (cfg.is_siam()) repr::set_frozen_bn_eval(m.encoder);
        m.projector->train();
        m.head->train();
        for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch)) {
            const size_t take = std::min<size_t>(static_cast<size_t>(cfg.batch), order.size() - at);
            if (cfg.w_corr > 0 && take < 2) break;  // correlation term needs a real batch
            std::vector<torch::Tensor> va, vb;
            std::vector<float> ys;
            for (size_t k = 0; k < take; ++k) {
                const size_t i = order[at + k];
                const torch::Tensor base = repr::select_frames(seqs[i], cfg.truncate25, cfg.frame_stride);
                ys.push_back(static_cast<float>(labels[i]));
                if (cfg.is_siam()) {
                    va.push_back(base);
                } else {
                    auto rng_a = repr::view_rng(cfg.seed, ids[i], 0, epoch);
                    auto rng_b = repr::view_rng(cfg.seed, ids[i], 1, epoch);
                    va.push_back(repr::augment_view(base, policy, rng_a));
                    vb.push_back(repr::augment_view(base, policy, rng_b));
                }
            }
            const torch::Tensor y = torch::tensor(ys, torch::kFloat32);
            optim.zero_grad();
            torch::Tensor loss;
            if (cfg.is_siam()) {
                const torch::Tensor h = repr::encode_batch(m.encoder, va);
                loss = bce(m.head->forward(h), y);
            } else {
                loss = cussp_joint_loss(m, va, vb, y, pos_weight);
            }
            loss.backward();
            optim.step();
        }
    }
    return cussp_model_checkpoint(m, cfg.seed, cfg.epochs);
}

// probability for one already-preprocessed patch sequence
inline double predict_patches(CusspModel& m, const prep::ValvePatchSequence& patches) {
    torch::NoGradGuard guard;
    m.encoder->eval();
    m.head->eval();
    const torch::Tensor frames = repr::select_frames(patches, m.config.truncate25, m.config.frame_stride);
    const torch::Tensor h = m.encoder->forward(frames).mean(0, /*keepdim=*/true);
    return torch::sigmoid(m.head->forward(h)).item<double>();
}

// Full pipeline prediction: preprocess (per the model's stored patch config),
// encode with mean pooling, MLP head, sigmoid.
inline double predict(const io::Checkpoint& model_ckpt, const CineSequence& seq, const MaskSequence& masks) {
    CusspModel m = load_cussp_model(model_ckpt);
    prep::PreprocessConfig pc = m.config.prep;
    pc.truncate25 = false;  // keep all frames; truncation happens at frame selection
    const prep::ValvePatchSequence patches = prep::preprocess_sequence(seq, masks, pc);
    return predict_patches(m, patches);
}

}  // namespace cussp::cls
