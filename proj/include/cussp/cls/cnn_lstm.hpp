#pragma once

#include <torch/torch.h>

#include <json.hpp>
#include <random>
#include <string>
#include <vector>

#include "cussp/common.hpp"
#include "cussp/io/checkpoint.hpp"
#include "cussp/nn/torch_io.hpp"
#include "cussp/sequence.hpp"

namespace cussp::cls {

// Intensity center-of-mass crop of the raw cine: one window, computed on the
// temporal-mean frame, applied to every frame; zero-padded at the borders.
inline CineSequence center_crop_by_mass(const CineSequence& seq, int size) {
    if (size > seq.h || size > seq.w) throw ValidationError("center_crop_by_mass: size exceeds frame dims");
    double sum = 0, mr = 0, mc = 0;
    for (int r = 0; r < seq.h; ++r)
        for (int c = 0; c < seq.w; ++c) {
            double acc = 0;
            for (int t = 0; t < seq.t; ++t) acc += seq.at(t, r, c);
            sum += acc;
            mr += acc * r;
            mc += acc * c;
        }
    const double com_r = sum > 0 ? mr / sum : (seq.h - 1) / 2.0;
    const double com_c = sum > 0 ? mc / sum : (seq.w - 1) / 2.0;
    const int r0 = static_cast<int>(std::lround(com_r)) - size / 2;
    const int c0 = static_cast<int>(std::lround(com_c)) - size / 2;

    CineSequence out;
    out.t = seq.t;
    out.h = out.w = size;
    out.spacing_row_mm = seq.spacing_row_mm;
    out.spacing_col_mm = seq.spacing_col_mm;
    out.frame_interval_ms = seq.frame_interval_ms;
    out.view = seq.view;
    out.voxels.assign(static_cast<size_t>(seq.t) * size * size, 0);
    for (int t = 0; t < seq.t; ++t)
        for (int r = 0; r < size; ++r)
            for (int c = 0; c < size; ++c) {
                const int sr = r0 + r, sc = c0 + c;
                if (sr < 0 || sr >= seq.h || sc < 0 || sc >= seq.w) continue;  // zero padding
                out.at(t, r, c) = seq.at(t, sr, sc);
            }
    return out;
}

struct CnnLstmConfig {
    std::string preset = "mini";  // densenet121 | mini
    bool use_attention = true;
    int lstm_hidden = 128;
    int center_crop_px = 96;
    int input_px = 64;
    int epochs = 5;
    int batch = 8;
    double lr = 1e-4;
    double dropout = 0.1;
    uint64_t seed = 0;
    bool pos_weight_balance = true;
    int frame_stride = 1;

    void validate() const {
        if (preset != "densenet121" && preset != "mini") throw ConfigError("cnn_lstm: unknown preset '" + preset + "'");
        if (lstm_hidden < 1 || input_px < 16) throw ConfigError("cnn_lstm: bad dims");
    }

    nlohmann::json to_json() const {
        return {{"preset", preset},   {"use_attention", use_attention}, {"lstm_hidden", lstm_hidden},
                {"center_crop_px", center_crop_px}, {"input_px", input_px}, {"epochs", epochs},
                {"batch", batch},     {"lr", lr},   {"dropout", dropout},  {"seed", seed},
                {"pos_weight_balance", pos_weight_balance}, {"frame_stride", frame_stride}};
    }

    static CnnLstmConfig from_json(const nlohmann::json& j) {
        CnnLstmConfig c;
        c.preset = j.value("preset", c.preset);
        c.use_attention = j.value("use_attention", c.use_attention);
        c.lstm_hidden = j.value("lstm_hidden", c.lstm_hidden);
        c.center_crop_px = j.value("center_crop_px", c.center_crop_px);
        c.input_px = j.value("input_px", c.input_px);
        c.epochs = j.value("epochs", c.epochs);
        c.batch = j.value("batch", c.batch);
        c.lr = j.value("lr", c.lr);
        c.dropout = j.value("dropout", c.dropout);
        c.seed = j.value("seed", c.seed);
        c.pos_weight_balance = j.value("pos_weight_balance", c.pos_weight_balance);
        c.frame_stride = j.value("frame_stride", c.frame_stride);
        return c;
    }
};

namespace densenet {

struct DenseLayerImpl : torch::nn::Module {
    torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};

    DenseLayerImpl(int in_ch, int growth) {
        bn1 = register_module("bn1", torch::nn::BatchNorm2d(in_ch));
        conv1 = register_module("conv1",
                                torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, 4 * growth, 1).bias(false)));
        bn2 = register_module("bn2", torch::nn::BatchNorm2d(4 * growth));
        conv2 = register_module(
            "conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(4 * growth, growth, 3).padding(1).bias(false)));
    }

    torch::Tensor forward(const torch::Tensor& x) {
        torch::Tensor h = conv1(torch::relu(bn1(x)));
        h = conv2(torch::relu(bn2(h)));
        return torch::cat({x, h}, 1);
    }
};
TORCH_MODULE(DenseLayer);

struct TransitionImpl : torch::nn::Module {
    torch::nn::BatchNorm2d bn{nullptr};
    torch::nn::Conv2d conv{nullptr};

    TransitionImpl(int in_ch, int out_ch) {
        bn = register_module("bn", torch::nn::BatchNorm2d(in_ch));
        conv = register_module("conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, out_ch, 1).bias(false)));
    }

    torch::Tensor forward(const torch::Tensor& x) { return torch::avg_pool2d(conv(torch::relu(bn(x))), 2); }
};
TORCH_MODULE(Transition);

}  // namespace densenet

// Densely connected frame encoder with a sigmoid spatial attention gate after
// the first convolution, feeding a bi-directional LSTM over the frame
// embeddings and an MLP classifier head.
struct CnnLstmImpl : torch::nn::Module {
    torch::nn::Conv2d stem{nullptr}, gate{nullptr};
    torch::nn::BatchNorm2d stem_bn{nullptr}, final_bn{nullptr};
    std::vector<densenet::DenseLayer> layers;
    std::vector<densenet::Transition> transitions;
    torch::nn::LSTM lstm{nullptr};
    torch::nn::Linear fc1{nullptr}, fc2{nullptr};
    torch::nn::Dropout drop{nullptr};
    bool attention_enabled = true;
    int feature_dim = 0;

    explicit CnnLstmImpl(const CnnLstmConfig& cfg) {
        cfg.validate();
        attention_enabled = cfg.use_attention;
        int growth = 32, init_ch = 64;
        std::vector<int> blocks{6, 12, 24, 16};
        if (cfg.preset == "mini") {
            growth = 8;
            init_ch = 16;
            blocks = {2, 4, 4, 2};
        }
        stem = register_module("stem",
                               torch::nn::Conv2d(torch::nn::Conv2dOptions(1, init_ch, 7).stride(2).padding(3).bias(false)));
        stem_bn = register_module("stem_bn", torch::nn::BatchNorm2d(init_ch));
        gate = register_module("gate", torch::nn::Conv2d(torch::nn::Conv2dOptions(init_ch, 1, 1)));
        int ch = init_ch;
        int li = 0, ti = 0;
        for (size_t b = 0; b < blocks.size(); ++b) {
            for (int l = 0; l < blocks[b]; ++l) {
                layers.push_back(register_module("dense" + std::to_string(li++), densenet::DenseLayer(ch, growth)));
                ch += growth;
            }
            if (b + 1 < blocks.size()) {
                const int out_ch = ch / 2;
                transitions.push_back(register_module("trans" + std::to_string(ti++), densenet::Transition(ch, out_ch)));
                ch = out_ch;
            }
        }
        final_bn = register_module("final_bn", torch::nn::BatchNorm2d(ch));
        feature_dim = ch;
        lstm = register_module("lstm", torch::nn::LSTM(torch::nn::LSTMOptions(ch, cfg.lstm_hidden)
                                                           .bidirectional(true)
                                                           .batch_first(true)));
        fc1 = register_module("fc1", torch::nn::Linear(2 * cfg.lstm_hidden, 64));
        fc2 = register_module("fc2", torch::nn::Linear(64, 1));
        drop = register_module("drop", torch::nn::Dropout(cfg.dropout));
        blocks_per_stage = blocks;
    }

    std::vector<int> blocks_per_stage;

    // (N, 1, P, P) -> (N, feature_dim)
    torch::Tensor encode_frames(const torch::Tensor& x) {
        torch::Tensor h = torch::relu(stem_bn(stem(x)));
        if (attention_enabled) {
            const torch::Tensor a = torch::sigmoid(gate(h));  // single-channel spatial mask
            h = h * a.expand_as(h);
        }
        h = torch::max_pool2d(h, 3, 2, 1);
        size_t li = 0, ti = 0;
        for (size_t b = 0; b < blocks_per_stage.size(); ++b) {
            for (int l = 0; l < blocks_per_stage[b]; ++l) h = layers[li++]->forward(h);
            if (b + 1 < blocks_per_stage.size()) h = transitions[ti++]->forward(h);
        }
        h = torch::relu(final_bn(h));
        return torch::adaptive_avg_pool2d(h, {1, 1}).flatten(1);
    }

    // batch of sequences, each (T, 1, P, P) -> logits (B)
    torch::Tensor forward_sequences(const std::vector<torch::Tensor>& seqs) {
        std::vector<int64_t> counts;
        for (const auto& s : seqs) counts.push_back(s.size(0));
        const torch::Tensor frames = torch::cat(seqs, 0);
        const torch::Tensor feats = encode_frames(frames);
        const auto chunks = feats.split_with_sizes(counts, 0);
        std::vector<torch::Tensor> logits;
        for (const auto& c : chunks) {
            const auto out = lstm->forward(c.unsqueeze(0));  // (1, T, 2H)
            const torch::Tensor pooled = std::get<0>(out).mean(1);
            logits.push_back(fc2(drop(torch::relu(fc1(pooled)))).squeeze(-1).squeeze(0));
        }
        return torch::stack(logits);
    }
};
TORCH_MODULE(CnnLstm);

namespace detail {

inline torch::Tensor cine_to_frames(const CineSequence& seq, const CnnLstmConfig& cfg) {
    const CineSequence crop = cfg.center_crop_px < std::min(seq.h, seq.w)
                                  ? center_crop_by_mass(seq, cfg.center_crop_px)
                                  : seq;
    torch::Tensor t = torch::empty({crop.t, 1, crop.h, crop.w}, torch::kUInt8);
    std::memcpy(t.data_ptr(), crop.voxels.data(), crop.voxels.size());
    torch::Tensor f = t.to(torch::kFloat32) / 255.0;
    namespace F = torch::nn::functional;
    if (crop.h != cfg.input_px || crop.w != cfg.input_px)
        f = F::interpolate(f, F::InterpolateFuncOptions()
                                  .size(std::vector<int64_t>{cfg.input_px, cfg.input_px})
                                  .mode(torch::kBilinear)
                                  .align_corners(false));
    if (cfg.frame_stride > 1) f = f.slice(0, 0, f.size(0), cfg.frame_stride);
    return f;
}

}  // namespace detail

inline io::Checkpoint train_cnn_lstm(const std::vector<CineSequence>& seqs, const std::vector<int>& labels,
                                     const CnnLstmConfig& cfg) {
    cfg.validate();
    if (seqs.empty() || seqs.size() != labels.size()) throw ValidationError("train_cnn_lstm: bad labeled set");
    size_t n_pos = 0;
    for (int l : labels) n_pos += static_cast<size_t>(l);
    if (n_pos == 0 || n_pos == labels.size()) throw ValidationError("train_cnn_lstm: need both classes");

    torch::manual_seed(substream_seed(cfg.seed, "cnnlstm-init"));
    CnnLstm net(cfg);
    torch::optim::Adam optim(net->parameters(), torch::optim::AdamOptions(cfg.lr));
    const double pos_weight =
        cfg.pos_weight_balance ? static_cast<double>(labels.size() - n_pos) / static_cast<double>(n_pos) : 1.0;
    const torch::Tensor pw = torch::tensor({pos_weight}, torch::kFloat32);
    namespace F = torch::nn::functional;

    std::vector<torch::Tensor> cached;
    cached.reserve(seqs.size());
    for (const auto& s : seqs) cached.push_back(detail::cine_to_frames(s, cfg));

    std::vector<size_t> order(seqs.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::mt19937_64 order_rng(substream_seed(cfg.seed, "cnnlstm-order", static_cast<uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), order_rng);
        net->train();
        for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch)) {
            const size_t take = std::min<size_t>(static_cast<size_t>(cfg.batch), order.size() - at);
            std::vector<torch::Tensor> batch;
            std::vector<float> ys;
            for (size_t k = 0; k < take; ++k) {
                batch.push_back(cached[order[at + k]]);
                ys.push_back(static_cast<float>(labels[order[at + k]]));
            }
            optim.zero_grad();
            const torch::Tensor logits = net->forward_sequences(batch);
            const torch::Tensor loss = F::binary_cross_entropy_with_logits(
                logits, torch::tensor(ys, torch::kFloat32),
                F::BinaryCrossEntropyWithLogitsFuncOptions().pos_weight(pw));
            loss.backward();
            optim.step();
        }
    }

    io::Checkpoint ckpt;
    ckpt.component = io::Component::CnnLstm;
    ckpt.epoch = cfg.epochs;
    ckpt.rng_seed = cfg.seed;
    ckpt.config_json = cfg.to_json().dump();
    nn::store_module(ckpt, *net);
    return ckpt;
}

inline double cnn_lstm_predict(const io::Checkpoint& ckpt, const CineSequence& seq) {
    if (ckpt.component != io::Component::CnnLstm) throw ValidationError("cnn_lstm_predict: wrong checkpoint");
    const CnnLstmConfig cfg = CnnLstmConfig::from_json(nlohmann::json::parse(ckpt.config_json));
    CnnLstm net(cfg);
    nn::load_module(*net, ckpt);
    net->eval();
    torch::NoGradGuard guard;
    const torch::Tensor logits = net->forward_sequences({detail::cine_to_frames(seq, cfg)});
    return torch::sigmoid(logits).item<double>();
}

}  // namespace cussp::cls
