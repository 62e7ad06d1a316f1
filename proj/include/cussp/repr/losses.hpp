#pragma once

#include <torch/torch.h>

#include "cussp/common.hpp"

namespace cussp::repr {

constexpr double kStandardizeEps = 1e-5;

// Barlow Twins objective: standardize each projector feature over the batch
// (population variance, epsilon-guarded), form the cross-correlation matrix
// C = zA~^T zB~ / B, then penalize (1 - C_ii)^2 plus lambda * C_ij^2 off the
// diagonal. The symmetrized flag averages the loss over both view orders.
inline torch::Tensor barlow_twins_loss(const torch::Tensor& za, const torch::Tensor& zb, double lambda,
                                       bool symmetrized = false) {
    if (za.dim() != 2 || zb.dim() != 2 || za.sizes() != zb.sizes())
        throw ValidationError("barlow_twins_loss: need matching batch x dim inputs");
    const int64_t batch = za.size(0);
    if (batch < 2) throw ValidationError("barlow_twins_loss: batch must be >= 2");
    auto standardize = [&](const torch::Tensor& z) {
        const torch::Tensor mean = z.mean(0, /*keepdim=*/true);
        const torch::Tensor var = (z - mean).pow(2).mean(0, /*keepdim=*/true);
        return (z - mean) / (var + kStandardizeEps).sqrt();
    };
    auto one_sided = [&](const torch::Tensor& a, const torch::Tensor& b) {
        const torch::Tensor c = standardize(a).t().mm(standardize(b)) / static_cast<double>(batch);
        const torch::Tensor on_diag = (1.0 - c.diagonal()).pow(2).sum();
        const torch::Tensor off_diag = c.pow(2).sum() - c.diagonal().pow(2).sum();
        return on_diag + lambda * off_diag;
    };
    if (!symmetrized) return one_sided(za, zb);
    return 0.5 * (one_sided(za, zb) + one_sided(zb, za));
}

// Margin contrastive objective on L2-normalized embeddings:
// same class -> d^2, different class -> max(0, m - d)^2.
inline torch::Tensor contrastive_loss(const torch::Tensor& e1, const torch::Tensor& e2, bool same_class,
                                      double margin) {
    const torch::Tensor n1 = e1 / (e1.norm() + 1e-12);
    const torch::Tensor n2 = e2 / (e2.norm() + 1e-12);
    const torch::Tensor d = (n1 - n2).norm();
    if (same_class) return d.pow(2);
    return torch::clamp_min(margin - d, 0.0).pow(2);
}

// Batched form: rows are pairs, `same` is a 0/1 tensor. Returns the mean.
inline torch::Tensor contrastive_loss_batch(const torch::Tensor& e1, const torch::Tensor& e2,
                                            const torch::Tensor& same, double margin) {
    const torch::Tensor n1 = e1 / (e1.norm(2, 1, /*keepdim=*/true) + 1e-12);
    const torch::Tensor n2 = e2 / (e2.norm(2, 1, /*keepdim=*/true) + 1e-12);
    const torch::Tensor d = (n1 - n2).norm(2, 1);
    const torch::Tensor pos = d.pow(2);
    const torch::Tensor neg = torch::clamp_min(margin - d, 0.0).pow(2);
    return (same * pos + (1.0 - same) * neg).mean();
}

}  // namespace cussp::repr
