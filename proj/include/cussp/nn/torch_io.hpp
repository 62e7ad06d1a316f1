#pragma once

#include <torch/torch.h>

#include <cstring>
#include <string>

#include "cussp/common.hpp"
#include "cussp/io/checkpoint.hpp"

namespace cussp::nn {

inline io::TensorBlob to_blob(const torch::Tensor& t) {
    torch::Tensor c = t.detach().cpu().contiguous();
    io::TensorBlob b;
    if (c.dtype() == torch::kFloat32) b.dtype = io::BlobDtype::f32;
    else if (c.dtype() == torch::kInt64) b.dtype = io::BlobDtype::i64;
    else if (c.dtype() == torch::kFloat64) b.dtype = io::BlobDtype::f64;
    else if (c.dtype() == torch::kUInt8) b.dtype = io::BlobDtype::u8;
    else throw ValidationError("to_blob: unsupported tensor dtype");
    for (int64_t d : c.sizes()) b.shape.push_back(d);
    b.bytes.resize(static_cast<size_t>(c.numel()) * io::blob_dtype_size(b.dtype));
    std::memcpy(b.bytes.data(), c.data_ptr(), b.bytes.size());
    return b;
}

inline torch::Tensor from_blob(const io::TensorBlob& b) {
    torch::Dtype dt = torch::kFloat32;
    if (b.dtype == io::BlobDtype::i64) dt = torch::kInt64;
    else if (b.dtype == io::BlobDtype::f64) dt = torch::kFloat64;
    else if (b.dtype == io::BlobDtype::u8) dt = torch::kUInt8;
    torch::Tensor t = torch::empty(b.shape, torch::TensorOptions().dtype(dt));
    std::memcpy(t.data_ptr(), b.bytes.data(), b.bytes.size());
    return t;
}

// Snapshot every parameter and buffer (BN running stats included) under an
// optional name prefix.
inline void store_module(io::Checkpoint& ckpt, const torch::nn::Module& m, const std::string& prefix = "") {
    for (const auto& p : m.named_parameters(/*recurse=*/true)) ckpt.blobs[prefix + p.key()] = to_blob(p.value());
    for (const auto& p : m.named_buffers(/*recurse=*/true)) ckpt.blobs[prefix + p.key()] = to_blob(p.value());
}

inline void load_module(torch::nn::Module& m, const io::Checkpoint& ckpt, const std::string& prefix = "") {
    torch::NoGradGuard guard;
    for (const auto& p : m.named_parameters(/*recurse=*/true)) {
        const torch::Tensor src = from_blob(ckpt.blob(prefix + p.key()));
        if (!src.sizes().equals(p.value().sizes()))
            throw ValidationError("checkpoint blob '" + prefix + p.key() + "' shape mismatch");
        p.value().copy_(src);
    }
    for (const auto& p : m.named_buffers(/*recurse=*/true)) {
        const torch::Tensor src = from_blob(ckpt.blob(prefix + p.key()));
        p.value().copy_(src.to(p.value().dtype()));
    }
}

}  // namespace cussp::nn
