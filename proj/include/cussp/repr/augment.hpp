#pragma once

#include <torch/torch.h>

#include <cmath>
#include <random>

#include "cussp/common.hpp"

namespace cussp::repr {

// Stochastic view transforms for self-supervised training. One parameter draw
// covers every frame of a sequence view (temporally consistent), and the draw
// stream is seeded per (global seed, sample id, view index, epoch) so worker
// parallelism cannot reorder results.
struct AugmentationPolicy {
    double crop_scale_lo = 0.6, crop_scale_hi = 1.0;
    double hflip_prob = 0.5;
    double intensity_jitter = 0.15;
    double blur_prob = 0.3;
    double blur_sigma_lo = 0.5, blur_sigma_hi = 1.5;
};

namespace detail {

inline torch::Tensor gaussian_blur(const torch::Tensor& frames, double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(2.0 * sigma)));
    const int k = 2 * radius + 1;
    torch::Tensor kernel = torch::empty({k}, torch::kFloat32);
    float* kd = kernel.data_ptr<float>();
    double sum = 0;
    for (int i = 0; i < k; ++i) {
        const double x = i - radius;
        kd[i] = static_cast<float>(std::exp(-0.5 * x * x / (sigma * sigma)));
        sum += kd[i];
    }
    kernel /= sum;
    const torch::Tensor kr = kernel.view({1, 1, k, 1});
    const torch::Tensor kc = kernel.view({1, 1, 1, k});
    namespace F = torch::nn::functional;
    torch::Tensor out = F::conv2d(frames, kr, F::Conv2dFuncOptions().padding({radius, 0}));
    return F::conv2d(out, kc, F::Conv2dFuncOptions().padding({0, radius}));
}

}  // namespace detail

// frames: (T, 1, P, P) float in [0,1]
inline torch::Tensor augment_view(const torch::Tensor& frames, const AugmentationPolicy& policy,
                                  std::mt19937_64& rng) {
    auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    const int64_t p = frames.size(2);
    torch::Tensor out = frames;

    // random resized crop: area scale in [lo, hi], square, resized back to P
    const double scale = uni(policy.crop_scale_lo, policy.crop_scale_hi);
    const int64_t side = std::max<int64_t>(8, static_cast<int64_t>(std::lround(p * std::sqrt(scale))));
    if (side < p) {
        const int64_t max_off = p - side;
        const auto r0 = static_cast<int64_t>(uni(0, static_cast<double>(max_off) + 0.999));
        const auto c0 = static_cast<int64_t>(uni(0, static_cast<double>(max_off) + 0.999));
        out = out.slice(2, r0, r0 + side).slice(3, c0, c0 + side);
        namespace F = torch::nn::functional;
        out = F::interpolate(out, F::InterpolateFuncOptions()
                                      .size(std::vector<int64_t>{p, p})
                                      .mode(torch::kBilinear)
                                      .align_corners(false));
    }
    if (uni(0, 1) < policy.hflip_prob) out = out.flip(3);
    const double gain = 1.0 + uni(-policy.intensity_jitter, policy.intensity_jitter);
    out = (out * gain).clamp(0.0, 1.0);
    if (uni(0, 1) < policy.blur_prob) out = detail::gaussian_blur(out, uni(policy.blur_sigma_lo, policy.blur_sigma_hi));
    return out;
}

inline std::mt19937_64 view_rng(uint64_t global_seed, const std::string& sample_id, int view_index, int epoch) {
    const uint64_t s = splitmix64(fnv1a64(sample_id) ^ substream_seed(global_seed, "augment") ^
                                  splitmix64(static_cast<uint64_t>(view_index) * 0x9e37u + static_cast<uint64_t>(epoch)));
    return std::mt19937_64(s);
}

}  // namespace cussp::repr
