#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cussp/common.hpp"

namespace cussp::seg {

// Chamber label taxonomy. Class ids are stable across training and inference.
enum SegClass : uint8_t {
    kBackground = 0,
    kLvBloodpool = 1,
    kLvMyocardium = 2,
    kRv = 3,
    kLa = 4,
    kRa = 5,
};

// 4CH uses all six classes, 2CH drops the right heart, SA has no atria.
inline std::vector<uint8_t> classes_for_view(const std::string& view) {
    if (view == "4CH") return {kBackground, kLvBloodpool, kLvMyocardium, kRv, kLa, kRa};
    if (view == "2CH") return {kBackground, kLvBloodpool, kLvMyocardium, kLa};
    if (view == "SA") return {kBackground, kLvBloodpool, kLvMyocardium, kRv};
    throw ValidationError("unknown view '" + view + "' (expected 4CH|2CH|SA)");
}

// Number of network output channels for a view: labels are remapped to a
// dense [0, n) range in training order, so 2CH LA (class 4) sits at index 3.
inline int class_index(const std::vector<uint8_t>& classes, uint8_t cls) {
    for (size_t i = 0; i < classes.size(); ++i)
        if (classes[i] == cls) return static_cast<int>(i);
    throw ValidationError("class id " + std::to_string(cls) + " not in view class set");
}

}  // namespace cussp::seg
