#pragma once

#include <torch/torch.h>

#include <random>
#include <string>
#include <vector>

#include "cussp/common.hpp"
#include "cussp/repr/augment.hpp"
#include "cussp/repr/encoder.hpp"
#include "cussp/repr/losses.hpp"

namespace cussp::repr {

// Frame selection shared by every consumer of stored patch sequences: optional
// 25-frame systolic truncation (cyclic, anchored at the stored window start)
// followed by an optional temporal stride.
inline torch::Tensor select_frames(const prep::ValvePatchSequence& v, bool truncate25, int stride = 1) {
    torch::Tensor frames = patches_to_tensor(v);
    if (truncate25) {
        if (v.systolic_start < 0)
            throw ValidationError("select_frames: sequence has no systolic window (need >= 25 frames)");
        std::vector<int64_t> idx(25);
        for (int k = 0; k < 25; ++k) idx[static_cast<size_t>(k)] = (v.systolic_start + k) % v.t;
        frames = frames.index_select(0, torch::tensor(idx, torch::kInt64));
    }
    if (stride > 1) frames = frames.slice(0, 0, frames.size(0), stride);
    return frames;
}

// One encoder pass over the concatenated frames of a batch of sequences,
// split back per sequence and mean-pooled: (B, 512), gradients intact.
inline torch::Tensor encode_batch(ResNetEncoder& enc, const std::vector<torch::Tensor>& seq_frames) {
    std::vector<int64_t> counts;
    counts.reserve(seq_frames.size());
    for (const auto& f : seq_frames) counts.push_back(f.size(0));
    const torch::Tensor all = torch::cat(seq_frames, 0);
    const torch::Tensor per_frame = enc->forward(all);
    const auto chunks = per_frame.split_with_sizes(counts, 0);
    std::vector<torch::Tensor> means;
    means.reserve(chunks.size());
    for (const auto& c : chunks) means.push_back(c.mean(0));
    return torch::stack(means, 0);
}

struct PretrainOptions {
    int epochs = 20;
    int batch = 16;
    double lr = 1e-3;
    double lambda = 5e-3;  // Barlow Twins off-diagonal weight
    uint64_t seed = 0;
    int frame_stride = 1;
    bool truncate25 = false;
};

struct PretrainResult {
    io::Checkpoint checkpoint;
    double probe_loss_initial = 0;
    double probe_loss_final = 0;
    std::vector<double> epoch_losses;
};

namespace detail {

// Probe under train-mode batch statistics (the quantity the optimizer sees);
// BN buffers are snapshotted and restored so probing never perturbs training.
inline double probe_loss(ResNetEncoder& enc, Projector& proj, const std::vector<torch::Tensor>& views_a,
                         const std::vector<torch::Tensor>& views_b, double lambda) {
    torch::NoGradGuard guard;
    std::vector<torch::Tensor> saved;
    for (auto& m : {std::ref(*enc), std::ref(*proj)})
        for (const auto& b : m.get().named_buffers()) saved.push_back(b.value().clone());
    enc->train();
    proj->train();
    const torch::Tensor ha = encode_batch(enc, views_a);
    const torch::Tensor hb = encode_batch(enc, views_b);
    const double loss = barlow_twins_loss(proj->forward(ha), proj->forward(hb), lambda).item<double>();
    size_t i = 0;
    for (auto& m : {std::ref(*enc), std::ref(*proj)})
        for (const auto& b : m.get().named_buffers()) b.value().copy_(saved[i++]);
    return loss;
}

}  // namespace detail

// Step (i): Barlow Twins pretraining of the encoder on unlabeled patch
// sequences. Two independently augmented copies of each sequence form the
// views; the projector is kept in the checkpoint alongside the encoder.
inline PretrainResult pretrain(const std::vector<prep::ValvePatchSequence>& seqs,
                               const std::vector<std::string>& ids, const EncoderConfig& cfg,
                               const AugmentationPolicy& policy, const PretrainOptions& opt) {
    if (seqs.empty()) throw ValidationError("pretrain: empty sequence set");
    if (seqs.size() != ids.size()) throw ValidationError("pretrain: ids/sequences mismatch");
    if (opt.batch < 2) throw ValidationError("pretrain: batch size 1 leaves the loss undefined");
    cfg.validate();

    torch::manual_seed(substream_seed(opt.seed, "pretrain-init"));
    ResNetEncoder enc(cfg);
    Projector proj(cfg);

    // fixed probe batch for the before/after loss contract
    const size_t probe_n = std::min<size_t>(seqs.size(), static_cast<size_t>(opt.batch));
    std::vector<torch::Tensor> probe_a, probe_b;
    for (size_t i = 0; i < probe_n; ++i) {
        const torch::Tensor base = select_frames(seqs[i], opt.truncate25, opt.frame_stride);
        auto rng_a = view_rng(opt.seed, ids[i], 0, /*epoch=*/-1);
        auto rng_b = view_rng(opt.seed, ids[i], 1, /*epoch=*/-1);
        probe_a.push_back(augment_view(base, policy, rng_a));
        probe_b.push_back(augment_view(base, policy, rng_b));
    }

    PretrainResult result;
    result.probe_loss_initial = detail::probe_loss(enc, proj, probe_a, probe_b, opt.lambda);

    std::vector<torch::Tensor> params = enc->parameters();
    for (auto& p : proj->parameters()) params.push_back(p);
    torch::optim::Adam optim(params, torch::optim::AdamOptions(opt.lr));

    std::vector<size_t> order(seqs.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        std::mt19937_64 order_rng(substream_seed(opt.seed, "pretrain-order", static_cast<uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), order_rng);
        enc->train();
        proj->train();
        double loss_sum = 0;
        int n_batches = 0;
        for (size_t at = 0; at + 2 <= order.size(); at += static_cast<size_t>(opt.batch)) {
            const size_t take = std::min<size_t>(static_cast<size_t>(opt.batch), order.size() - at);
            if (take < 2) break;
            std::vector<torch::Tensor> va, vb;
            for (size_t k = 0; k < take; ++k) {
                const size_t i = order[at + k];
                const torch::Tensor base = select_frames(seqs[i], opt.truncate25, opt.frame_stride);
                auto rng_a = view_rng(opt.seed, ids[i], 0, epoch);
                auto rng_b = view_rng(opt.seed, ids[i], 1, epoch);
                va.push_back(augment_view(base, policy, rng_a));
                vb.push_back(augment_view(base, policy, rng_b));
            }
            optim.zero_grad();
            const torch::Tensor ha = encode_batch(enc, va);
            const torch::Tensor hb = encode_batch(enc, vb);
            const torch::Tensor loss = barlow_twins_loss(proj->forward(ha), proj->forward(hb), opt.lambda);
            loss.backward();
            optim.step();
            loss_sum += loss.item<double>();
            ++n_batches;
        }
        result.epoch_losses.push_back(n_batches ? loss_sum / n_batches : 0.0);
    }
    result.probe_loss_final = detail::probe_loss(enc, proj, probe_a, probe_b, opt.lambda);
    result.checkpoint = encoder_checkpoint(enc, proj, cfg, opt.seed, opt.epochs);
    return result;
}

struct PairDraw {
    size_t anchor = 0;  // always non-MR
    size_t other = 0;
    bool same_class = true;
};

// Siamese pair sampling: anchor uniformly from non-MR; the other side comes
// from MR with probability one half, else from non-MR.
inline PairDraw sample_pair(const std::vector<int>& labels, std::mt19937_64& rng) {
    std::vector<size_t> non_mr, mr;
    for (size_t i = 0; i < labels.size(); ++i) (labels[i] == 1 ? mr : non_mr).push_back(i);
    if (mr.empty() || non_mr.empty()) throw ValidationError("sample_pair: need both classes");
    PairDraw d;
    d.anchor = non_mr[std::uniform_int_distribution<size_t>(0, non_mr.size() - 1)(rng)];
    d.same_class = std::uniform_int_distribution<int>(0, 1)(rng) == 0;
    const auto& pool = d.same_class ? non_mr : mr;
    d.other = pool[std::uniform_int_distribution<size_t>(0, pool.size() - 1)(rng)];
    return d;
}

struct FinetuneOptions {
    int epochs = 5;
    int pairs_per_epoch = 0;  // 0: one pair per labeled sample
    int batch_pairs = 16;
    double lr = 1e-4;
    double margin = 1.0;
    uint64_t seed = 0;
    bool truncate25 = false;
    int frame_stride = 1;
};

// Step (ii): contrastive fine-tuning in the siamese arrangement. Only the
// last residual block trains; every other parameter (and frozen BN buffer)
// leaves this function bit-identical to the input checkpoint.
inline io::Checkpoint finetune_siamese(const io::Checkpoint& encoder_ckpt,
                                       const std::vector<prep::ValvePatchSequence>& seqs,
                                       const std::vector<int>& labels, const FinetuneOptions& opt) {
    if (encoder_ckpt.component != io::Component::Encoder)
        throw ValidationError("finetune_siamese: need an encoder checkpoint");
    if (seqs.size() != labels.size()) throw ValidationError("finetune_siamese: labels/sequences mismatch");
    if (opt.epochs == 0) return encoder_ckpt;

    EncoderConfig cfg = encoder_config_from(encoder_ckpt);
    torch::manual_seed(substream_seed(opt.seed, "finetune-init"));
    ResNetEncoder enc(cfg);
    Projector proj(cfg);
    load_encoder(enc, encoder_ckpt);
    load_projector(proj, encoder_ckpt);
    freeze_all_but_last_block(enc);

    torch::optim::Adam optim(trainable_parameters(*enc), torch::optim::AdamOptions(opt.lr));
    const int pairs = opt.pairs_per_epoch > 0 ? opt.pairs_per_epoch : static_cast<int>(seqs.size());

    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        std::mt19937_64 pair_rng(substream_seed(opt.seed, "finetune-pairs", static_cast<uint64_t>(epoch)));
        enc->train();
        set_frozen_bn_eval(enc);
        for (int at = 0; at < pairs; at += opt.batch_pairs) {
            const int take = std::min(opt.batch_pairs, pairs - at);
            std::vector<torch::Tensor> lhs, rhs;
            std::vector<float> same;
            for (int k = 0; k < take; ++k) {
                const PairDraw d = sample_pair(labels, pair_rng);
                lhs.push_back(select_frames(seqs[d.anchor], opt.truncate25, opt.frame_stride));
                rhs.push_back(select_frames(seqs[d.other], opt.truncate25, opt.frame_stride));
                same.push_back(d.same_class ? 1.0f : 0.0f);
            }
            optim.zero_grad();
            const torch::Tensor e1 = encode_batch(enc, lhs);
            const torch::Tensor e2 = encode_batch(enc, rhs);
            const torch::Tensor same_t = torch::tensor(same, torch::kFloat32);
            const torch::Tensor loss = contrastive_loss_batch(e1, e2, same_t, opt.margin);
            loss.backward();
            optim.step();
        }
    }
    io::Checkpoint out = encoder_checkpoint(enc, proj, cfg, opt.seed, encoder_ckpt.epoch + opt.epochs, "finetuned");
    return out;
}

}  // namespace cussp::repr
