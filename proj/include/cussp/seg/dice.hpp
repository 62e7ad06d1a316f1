#pragma once

#include "cussp/common.hpp"
#include "cussp/sequence.hpp"

namespace cussp::seg {

// 2|A n B| / (|A| + |B|) over all voxels; 1.0 when both masks are empty.
inline double dice(const MaskSequence& pred, const MaskSequence& truth, uint8_t class_id) {
    if (pred.t != truth.t || pred.h != truth.h || pred.w != truth.w)
        throw ValidationError("dice: shape mismatch");
    size_t inter = 0, a = 0, b = 0;
    const size_t n = pred.labels.size();
    for (size_t i = 0; i < n; ++i) {
        const bool pa = pred.labels[i] == class_id;
        const bool pb = truth.labels[i] == class_id;
        inter += pa && pb;
        a += pa;
        b += pb;
    }
    if (a + b == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

}  // namespace cussp::seg
