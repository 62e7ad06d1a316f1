#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "cussp/common.hpp"
#include "cussp/seg/classes.hpp"
#include "cussp/sequence.hpp"

namespace cussp::prep {

struct ValveGeometry {
    double valve_row = 0, valve_col = 0;  // subpixel centroid of the LA/LV interface
    double lv_axis_angle_deg = 90.0;      // math convention (y up), in [-180, 180)
    double valve_extent_px = 1.0;         // longest chord of the interface set
};

// Mitral valve localization from one mask frame: the valve is the set of
// LA pixels 8-adjacent to LV bloodpool plus LV pixels 8-adjacent to LA.
// The LV orientation is the principal axis of the bloodpool, with its sign
// resolved so the axis points from the valve toward the LV.
inline ValveGeometry locate_valve(const MaskSequence& masks, int frame) {
    const int h = masks.h, w = masks.w;
    const uint8_t* m = masks.frame(frame);
    auto label = [&](int r, int c) -> uint8_t { return m[static_cast<size_t>(r) * w + c]; };
    auto has_neighbor = [&](int r, int c, uint8_t cls) {
        for (int dr = -1; dr <= 1; ++dr)
            for (int dc = -1; dc <= 1; ++dc) {
                if (dr == 0 && dc == 0) continue;
                const int rr = r + dr, cc = c + dc;
                if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
                if (label(rr, cc) == cls) return true;
            }
        return false;
    };

    std::vector<std::pair<int, int>> interface_px;
    double lv_sum_r = 0, lv_sum_c = 0;
    size_t lv_n = 0;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const uint8_t l = label(r, c);
            if (l == seg::kLvBloodpool) {
                lv_sum_r += r;
                lv_sum_c += c;
                ++lv_n;
                if (has_neighbor(r, c, seg::kLa)) interface_px.emplace_back(r, c);
            } else if (l == seg::kLa && has_neighbor(r, c, seg::kLvBloodpool)) {
                interface_px.emplace_back(r, c);
            }
        }
    if (lv_n == 0) throw ValidationError("locate_valve: LV bloodpool empty in frame");
    if (interface_px.empty()) throw ValidationError("valve not localizable: no LA/LV adjacency in frame");

    ValveGeometry g;
    double sr = 0, sc = 0;
    for (auto [r, c] : interface_px) {
        sr += r;
        sc += c;
    }
    g.valve_row = sr / static_cast<double>(interface_px.size());
    g.valve_col = sc / static_cast<double>(interface_px.size());

    double extent2 = 0;
    for (size_t i = 0; i < interface_px.size(); ++i)
        for (size_t j = i + 1; j < interface_px.size(); ++j) {
            const double dr = interface_px[i].first - interface_px[j].first;
            const double dc = interface_px[i].second - interface_px[j].second;
            extent2 = std::max(extent2, dr * dr + dc * dc);
        }
    g.valve_extent_px = std::max(1.0, std::sqrt(extent2));

    // principal axis of the LV bloodpool
    const double mr = lv_sum_r / static_cast<double>(lv_n);
    const double mc = lv_sum_c / static_cast<double>(lv_n);
    double vrr = 0, vcc = 0, vrc = 0;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (label(r, c) == seg::kLvBloodpool) {
                vrr += (r - mr) * (r - mr);
                vcc += (c - mc) * (c - mc);
                vrc += (r - mr) * (c - mc);
            }
    vrr /= static_cast<double>(lv_n);
    vcc /= static_cast<double>(lv_n);
    vrc /= static_cast<double>(lv_n);
    double er, ec;  // leading eigenvector, (row, col) components
    if (std::abs(vrc) < 1e-12) {
        er = vrr >= vcc ? 1.0 : 0.0;
        ec = vrr >= vcc ? 0.0 : 1.0;
    } else {
        const double lambda = 0.5 * (vrr + vcc) + std::sqrt(0.25 * (vrr - vcc) * (vrr - vcc) + vrc * vrc);
        er = lambda - vcc;
        ec = vrc;
        const double n = std::hypot(er, ec);
        er /= n;
        ec /= n;
    }
    // orient toward the LV centroid as seen from the valve
    const double to_lv_r = mr - g.valve_row, to_lv_c = mc - g.valve_col;
    if (er * to_lv_r + ec * to_lv_c < 0) {
        er = -er;
        ec = -ec;
    }
    double angle = std::atan2(-er, ec) * 180.0 / M_PI;  // image rows grow downward
    if (angle >= 180.0) angle -= 360.0;
    if (angle < -180.0) angle += 360.0;
    g.lv_axis_angle_deg = angle;
    return g;
}

}  // namespace cussp::prep
