#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "cussp/measure/measurements.hpp"
#include "cussp/phantom/phantom.hpp"
#include "oracles.hpp"

using namespace cussp;
using namespace cussp::measure;

namespace {

// rasterize a predicate into a single-frame mask
MaskSequence raster(int h, int w, double spacing, const std::function<bool(double, double)>& inside,
                    uint8_t cls = 1) {
    MaskSequence m;
    m.t = 1;
    m.h = h;
    m.w = w;
    m.spacing_row_mm = m.spacing_col_mm = static_cast<float>(spacing);
    m.labels.assign(static_cast<size_t>(h) * w, 0);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (inside(r, c)) m.at(0, r, c) = cls;
    return m;
}

MaskSequence raster_disc(double radius_mm, double spacing) {
    const int n = static_cast<int>(std::ceil(2.2 * radius_mm / spacing));
    const double ctr = (n - 1) / 2.0;
    return raster(n, n, spacing, [&](double r, double c) {
        return std::hypot((r - ctr) * spacing, (c - ctr) * spacing) <= radius_mm;
    });
}

}  // namespace

TEST(ChamberArea, DirectArithmetic) {
    MaskSequence m = raster(20, 20, 1.8, [](double r, double c) { return r < 10 && c < 10; });
    EXPECT_NEAR(chamber_area_mm2(m, 0, 1), 100 * 1.8 * 1.8, 1e-4);
    EXPECT_DOUBLE_EQ(chamber_area_mm2(m, 0, 2), 0.0);  // empty class
}

TEST(ChamberArea, RasterizedDiscMatchesClosedForm) {
    const MaskSequence m = raster_disc(30.0, 0.5);
    const double area = chamber_area_mm2(m, 0, 1);
    EXPECT_NEAR(area, M_PI * 900.0, 0.01 * M_PI * 900.0);
}

TEST(LongAxis, DiscDiameter) {
    const MaskSequence m = raster_disc(30.0, 0.5);
    EXPECT_NEAR(long_axis_length_mm(m, 0, 1), 60.0, 0.5);  // one pixel-equivalent
}

TEST(LongAxis, SinglePixelIsOneSpacing) {
    MaskSequence m = raster(9, 9, 1.8, [](double r, double c) { return r == 4 && c == 4; });
    EXPECT_NEAR(long_axis_length_mm(m, 0, 1), 1.8, 1e-6);
}

TEST(LongAxis, EllipseMajorAxis) {
    const double spacing = 0.5;
    const int n = 200;
    const double ctr = (n - 1) / 2.0;
    MaskSequence m = raster(n, n, spacing, [&](double r, double c) {
        const double x = (c - ctr) * spacing / 40.0;  // 80 mm major axis, horizontal
        const double y = (r - ctr) * spacing / 20.0;
        return x * x + y * y <= 1.0;
    });
    EXPECT_NEAR(long_axis_length_mm(m, 0, 1), 80.0, 2.0);
    EXPECT_THROW(long_axis_length_mm(m, 0, 3), ValidationError);  // empty mask
}

TEST(Volumes, SphereSymmetryRecoversExactVolume) {
    const double a = M_PI * 900.0;  // r = 30
    EXPECT_NEAR(biplane_volume_ml(a, a, 60.0), (4.0 / 3.0) * M_PI * 27000.0 / 1000.0, 0.01);
    EXPECT_NEAR(single_plane_volume_ml(a, 60.0), (4.0 / 3.0) * M_PI * 27000.0 / 1000.0, 0.01);
}

TEST(Volumes, HandArithmeticOracles) {
    EXPECT_NEAR(biplane_volume_ml(2000, 3000, 70), 72.76, 0.01);
    EXPECT_NEAR(single_plane_volume_ml(2827.4, 80), 84.8, 0.05);
    EXPECT_DOUBLE_EQ(biplane_volume_ml(0, 3000, 70), 0.0);
    EXPECT_DOUBLE_EQ(single_plane_volume_ml(0, 70), 0.0);
    EXPECT_THROW(biplane_volume_ml(2000, 3000, 0), ValidationError);
}

TEST(Volumes, AreaScalingLaw) {
    // scaling all areas by k scales both estimators by k^2 with L fixed
    const double k = 1.7;
    EXPECT_NEAR(biplane_volume_ml(k * 2000, k * 3000, 70), k * k * biplane_volume_ml(2000, 3000, 70), 1e-9);
    EXPECT_NEAR(single_plane_volume_ml(k * 2827.4, 80), k * k * single_plane_volume_ml(2827.4, 80), 1e-9);
}

TEST(Volumes, SimpsonConstantCylinder) {
    EXPECT_DOUBLE_EQ(simpson_volume_ml(std::vector<double>(8, 1000.0), 8.0), 64.0);
    EXPECT_DOUBLE_EQ(simpson_volume_ml(std::vector<double>(8, 0.0), 8.0), 0.0);
}

TEST(Volumes, RasterConeStackMatchesFrustumSum) {
    // discs with linearly varying radii, 0.5 mm/px
    const double spacing = 0.5, thickness = 8.0;
    std::vector<double> raster_areas, analytic_areas;
    for (int k = 0; k < 8; ++k) {
        const double radius = 20.0 - 1.5 * k;
        raster_areas.push_back(chamber_area_mm2(raster_disc(radius, spacing), 0, 1));
        analytic_areas.push_back(M_PI * radius * radius);
    }
    const double v_raster = simpson_volume_ml(raster_areas, thickness);
    const double v_analytic = simpson_volume_ml(analytic_areas, thickness);
    EXPECT_NEAR(v_raster, v_analytic, 0.02 * v_analytic);
}

TEST(DeriveMeasurements, DirectFormulaOnSyntheticMasks) {
    // one SA slice, 1 mm spacing, 8 mm thickness: frame areas chosen so
    // LV EDV = 100 mL and ESV = 40 mL
    const int T = 2;
    SaStack sa;
    sa.t = T;
    sa.s = 1;
    sa.h = 120;
    sa.w = 120;
    sa.spacing_row_mm = sa.spacing_col_mm = 1.0f;
    sa.slice_thickness_mm = 8.0f;
    sa.voxels.assign(static_cast<size_t>(T) * sa.h * sa.w, 0);
    sa.labels.assign(sa.voxels.size(), 0);
    auto fill = [&](int t, uint8_t cls, size_t count) {
        uint8_t* m = sa.mask(t, 0);
        for (size_t i = 0; i < count; ++i) m[i] = cls;
    };
    fill(0, seg::kLvBloodpool, 12500);  // 12500 mm^2 * 8 mm = 100 mL
    fill(1, seg::kLvBloodpool, 5000);   // 40 mL
    auto fill_at = [&](int t, uint8_t cls, size_t start, size_t count) {
        uint8_t* m = sa.mask(t, 0);
        for (size_t i = 0; i < count; ++i) m[start + i] = cls;
    };
    fill_at(0, seg::kRv, 13000, 800);  // constant RV so its EDV stays positive
    fill_at(1, seg::kRv, 13000, 800);

    MaskSequence m4, m2;
    m4.t = m2.t = T;
    m4.h = m2.h = 64;
    m4.w = m2.w = 64;
    m4.spacing_row_mm = m4.spacing_col_mm = m2.spacing_row_mm = m2.spacing_col_mm = 1.0f;
    m4.labels.assign(static_cast<size_t>(T) * 64 * 64, 0);
    m2.labels = m4.labels;
    for (int t = 0; t < T; ++t)
        for (int r = 10; r < 30; ++r)
            for (int c = 10; c < 30; ++c) {
                m4.at(t, r, c) = seg::kLa;
                m2.at(t, r, c) = seg::kLa;
                m4.at(t, r + 24, c + 24) = seg::kRa;
            }

    const CardiacMeasurements m = derive_measurements(m4, m2, sa, 20.0);
    EXPECT_NEAR(m.lv.edv_ml, 100.0, 1e-9);
    EXPECT_NEAR(m.lv.esv_ml, 40.0, 1e-9);
    EXPECT_NEAR(m.lv.stroke_vol_ml, 60.0, 1e-9);
    EXPECT_NEAR(m.lv.ef_pct, 60.0, 1e-9);
    // HR = 60000 / (2 * 20) = 1500 bpm on this tiny synthetic clip
    EXPECT_NEAR(m.lv_cardiac_output_l_min, 60.0 * 1500.0 / 1000.0, 1e-9);
    // identities hold exactly by construction
    EXPECT_DOUBLE_EQ(m.la.stroke_vol_ml, m.la.vol_max_ml - m.la.vol_min_ml);
    EXPECT_DOUBLE_EQ(m.rv.stroke_vol_ml, m.rv.edv_ml - m.rv.esv_ml);
}

TEST(DeriveMeasurements, StaticPhantomGivesZeroDynamics) {
    phantom::PhantomSpec spec;
    spec.lv.amplitude = spec.la.amplitude = spec.rv.amplitude = spec.ra.amplitude = 0;
    spec.frames = 6;
    const phantom::PhantomSample s = phantom::generate_sample(spec, phantom::JetParams{}, 3);
    const CardiacMeasurements m = derive_measurements(s.masks_4ch, s.masks_2ch, s.sa, spec.frame_interval_ms);
    EXPECT_DOUBLE_EQ(m.lv.stroke_vol_ml, 0.0);
    EXPECT_DOUBLE_EQ(m.la.stroke_vol_ml, 0.0);
    EXPECT_DOUBLE_EQ(m.lv.ef_pct, 0.0);
    EXPECT_DOUBLE_EQ(m.lv_cardiac_output_l_min, 0.0);
}

TEST(DeriveMeasurements, AnalyticPhantomPanelWithin5Percent) {
    // analytically-parameterized phantom on a refined grid (rasterization
    // error must sit well inside the 5% bar, SV differences included)
    const phantom::PhantomSpec spec = phantom::refine_grid(phantom::PhantomSpec{}, 2.0);
    const phantom::PhantomSample s = phantom::generate_sample(spec, phantom::JetParams{}, 17);
    const CardiacMeasurements m = derive_measurements(s.masks_4ch, s.masks_2ch, s.sa, spec.frame_interval_ms);
    const FeatureVector18 got = measurement_vector(m);
    const std::array<double, 18> want = oracle::analytic_panel(spec);
    for (size_t i = 0; i < 18; ++i) {
        EXPECT_NEAR(got[i], want[i], 0.05 * std::abs(want[i]) + 1e-9)
            << feature_names()[i] << ": got " << got[i] << " want " << want[i];
    }
    EXPECT_DOUBLE_EQ(m.lv.stroke_vol_ml, m.lv.edv_ml - m.lv.esv_ml);
    EXPECT_DOUBLE_EQ(m.la.stroke_vol_ml, m.la.vol_max_ml - m.la.vol_min_ml);
}

TEST(DeriveMeasurements, CyclicShiftInvariance) {
    phantom::PhantomSpec spec;
    spec.frames = 12;
    const phantom::PhantomSample s = phantom::generate_sample(spec, phantom::JetParams{}, 4);
    auto rotate_masks = [](const MaskSequence& m, int k) {
        MaskSequence out = m;
        const size_t hw = static_cast<size_t>(m.h) * m.w;
        for (int t = 0; t < m.t; ++t)
            std::memcpy(out.frame((t + k) % m.t), m.frame(t), hw);
        return out;
    };
    auto rotate_sa = [](const SaStack& s0, int k) {
        SaStack out = s0;
        const size_t plane = static_cast<size_t>(s0.s) * s0.h * s0.w;
        for (int t = 0; t < s0.t; ++t)
            std::memcpy(out.labels.data() + (static_cast<size_t>((t + k) % s0.t)) * plane,
                        s0.labels.data() + static_cast<size_t>(t) * plane, plane);
        return out;
    };
    const CardiacMeasurements a = derive_measurements(s.masks_4ch, s.masks_2ch, s.sa, spec.frame_interval_ms);
    const CardiacMeasurements b = derive_measurements(rotate_masks(s.masks_4ch, 5), rotate_masks(s.masks_2ch, 5),
                                                      rotate_sa(s.sa, 5), spec.frame_interval_ms);
    EXPECT_DOUBLE_EQ(a.la.vol_max_ml, b.la.vol_max_ml);
    EXPECT_DOUBLE_EQ(a.lv.edv_ml, b.lv.edv_ml);
    EXPECT_DOUBLE_EQ(a.lv.esv_ml, b.lv.esv_ml);
    EXPECT_DOUBLE_EQ(a.lv_mass_g, b.lv_mass_g);
}

TEST(DeriveMeasurements, FrameCountMismatchRejected) {
    phantom::PhantomSpec spec;
    spec.frames = 6;
    const phantom::PhantomSample s = phantom::generate_sample(spec, phantom::JetParams{}, 4);
    MaskSequence short_2ch = s.masks_2ch;
    short_2ch.t -= 1;
    short_2ch.labels.resize(static_cast<size_t>(short_2ch.t) * short_2ch.h * short_2ch.w);
    EXPECT_THROW(derive_measurements(s.masks_4ch, short_2ch, s.sa, spec.frame_interval_ms), ValidationError);
}

TEST(FeaturesBsa, IndexingAndErrors) {
    CardiacMeasurements m;
    m.la = {80, 30, 50, 62.5};
    m.ra = {60, 25, 35, 58.33};
    m.lv = {40, 100, 60, 60};
    m.rv = {45, 95, 50, 52.63};
    m.lv_cardiac_output_l_min = 3.6;
    m.lv_mass_g = 110;
    const FeatureVector18 unit = features_bsa(m, 1.0);
    EXPECT_DOUBLE_EQ(unit[0], 80);   // LA vol max first
    EXPECT_DOUBLE_EQ(unit[2], 40);   // LV ESV third
    EXPECT_DOUBLE_EQ(unit[17], 110); // mass last
    const FeatureVector18 halved = features_bsa(m, 2.0);
    for (size_t i = 0; i < 18; ++i) EXPECT_DOUBLE_EQ(halved[i], unit[i] / 2.0);
    EXPECT_NEAR(features_bsa(m, 1.9)[14], 31.58, 0.01);  // LV EF 60% / 1.9 m^2
    EXPECT_THROW(features_bsa(m, 0.0), ValidationError);
    EXPECT_THROW(features_bsa(m, -1.0), ValidationError);
}

int main(int argc, char** argv) {
    ::testing::InitGoogleTest(&argc, argv);
    return RUN_ALL_TESTS();
}
