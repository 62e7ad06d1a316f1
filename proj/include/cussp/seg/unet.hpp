#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

#include "cussp/common.hpp"

namespace cussp::seg {

namespace unet_detail {

inline torch::nn::Sequential conv_bn_relu(int in_ch, int out_ch) {
    return torch::nn::Sequential(
        torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, out_ch, 3).padding(1).bias(false)),
        torch::nn::BatchNorm2d(out_ch), torch::nn::ReLU(torch::nn::ReLUOptions().inplace(true)));
}

inline torch::nn::Sequential double_conv(int in_ch, int out_ch) {
    auto seq = conv_bn_relu(in_ch, out_ch);
    for (auto& m : *conv_bn_relu(out_ch, out_ch)) seq->push_back(m);
    return seq;
}

// VGG11-style plain conv stage (no BN), TernausNet flavor
inline torch::nn::Sequential vgg_stage(int in_ch, int out_ch, int convs) {
    torch::nn::Sequential seq;
    for (int i = 0; i < convs; ++i) {
        seq->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(i == 0 ? in_ch : out_ch, out_ch, 3).padding(1)));
        seq->push_back(torch::nn::ReLU(torch::nn::ReLUOptions().inplace(true)));
    }
    return seq;
}

}  // namespace unet_detail

// U-shaped encoder-decoder with skip connections. The default preset stacks
// double-conv blocks at `base_width * 2^level`; the "ternaus" preset swaps in
// a VGG11-style encoder (widths 64/128/256/512/512, plain convs).
struct UNetImpl : torch::nn::Module {
    std::vector<torch::nn::Sequential> enc_blocks, dec_blocks;
    std::vector<torch::nn::Conv2d> up_convs;
    torch::nn::Conv2d head{nullptr};
    int depth = 4;

    UNetImpl(int n_classes, int depth_in = 4, int base_width = 32, const std::string& preset = "unet") {
        std::vector<int> widths;
        std::vector<int> convs_per_stage;
        if (preset == "ternaus") {
            widths = {64, 128, 256, 512, 512};
            convs_per_stage = {1, 1, 2, 2, 2};
            depth = 4;  // four pools between five stages
        } else if (preset == "unet") {
            depth = depth_in;
            for (int i = 0; i <= depth; ++i) widths.push_back(base_width << i);
            convs_per_stage.assign(widths.size(), 2);
        } else {
            throw ConfigError("unet: unknown preset '" + preset + "'");
        }

        int in_ch = 1;
        for (size_t i = 0; i < widths.size(); ++i) {
            torch::nn::Sequential block =
                preset == "ternaus" ? unet_detail::vgg_stage(in_ch, widths[i], convs_per_stage[i])
                                    : unet_detail::double_conv(in_ch, widths[i]);
            enc_blocks.push_back(register_module("enc" + std::to_string(i), block));
            in_ch = widths[i];
        }
        for (size_t i = widths.size() - 1; i >= 1; --i) {
            auto up = torch::nn::Conv2d(torch::nn::Conv2dOptions(widths[i], widths[i - 1], 3).padding(1));
            up_convs.push_back(register_module("up" + std::to_string(i), up));
            dec_blocks.push_back(register_module("dec" + std::to_string(i),
                                                 unet_detail::double_conv(2 * widths[i - 1], widths[i - 1])));
        }
        head = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(widths[0], n_classes, 1)));
    }

    torch::Tensor forward(const torch::Tensor& x) {
        namespace F = torch::nn::functional;
        std::vector<torch::Tensor> skips;
        torch::Tensor h = x;
        for (size_t i = 0; i < enc_blocks.size(); ++i) {
            h = enc_blocks[i]->forward(h);
            if (i + 1 < enc_blocks.size()) {
                skips.push_back(h);
                h = torch::max_pool2d(h, 2);
            }
        }
        for (size_t k = 0; k < dec_blocks.size(); ++k) {
            h = F::interpolate(h, F::InterpolateFuncOptions()
                                      .scale_factor(std::vector<double>{2.0, 2.0})
                                      .mode(torch::kNearest));
            h = up_convs[k]->forward(h);
            const torch::Tensor skip = skips[skips.size() - 1 - k];
            h = dec_blocks[k]->forward(torch::cat({skip, h}, 1));
        }
        return head(h);
    }
};
TORCH_MODULE(UNet);

}  // namespace cussp::seg
