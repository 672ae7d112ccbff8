#include <gtest/gtest.h>

#include <cmath>

#include "deocc/scenegen.hpp"

using namespace deocc;

TEST(Figure, Deterministic) {
    FigureConfig cfg;
    auto a = generate_figure(sample_figure_spec(11, cfg), cfg);
    auto b = generate_figure(sample_figure_spec(11, cfg), cfg);
    EXPECT_EQ(a.image, b.image);
    EXPECT_EQ(a.mask, b.mask);
    EXPECT_EQ(a.joints, b.joints);
    EXPECT_EQ(a.attributes, b.attributes);
}

TEST(Figure, JointsNearMask) {
    FigureConfig cfg;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        auto f = generate_figure(sample_figure_spec(seed, cfg), cfg);
        double rmax = 0;
        for (const auto& c : f.capsules) rmax = std::max(rmax, c.radius);
        for (const auto& j : f.joints.joints) {
            bool near = false;
            for (int y = 0; y < f.mask.height && !near; ++y)
                for (int x = 0; x < f.mask.width && !near; ++x)
                    if (f.mask.at(y, x) && std::hypot(x - j.x, y - j.y) <= rmax + 0.5) near = true;
            EXPECT_TRUE(near) << "seed " << seed;
        }
    }
}

TEST(Figure, MaskCountMatchesPixelScan) {
    FigureConfig cfg;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto f = generate_figure(sample_figure_spec(seed, cfg), cfg);
        std::size_t n = 0;
        for (int y = 0; y < f.image.height; ++y)
            for (int x = 0; x < f.image.width; ++x) {
                bool differs = false;
                for (int c = 0; c < 3; ++c) differs |= f.image.at(y, x, c) != f.background.at(y, x, c);
                n += differs;
            }
        EXPECT_EQ(f.mask.count(), n);
    }
}

TEST(Figure, SmallCanvasIsConfigError) {
    FigureConfig cfg;
    cfg.canvas_size = 16;
    auto spec = sample_figure_spec(1, FigureConfig{});
    spec.canvas_size = 16;
    EXPECT_THROW(generate_figure(spec, cfg), ConfigError);
}

TEST(OcclusionRatio, Degenerate) {
    Rng rng(0);
    EXPECT_EQ(sample_occlusion_ratio(0.3, 0.0, 0.05, 0.75, rng), 0.3);
    for (int i = 0; i < 1000; ++i) EXPECT_LE(sample_occlusion_ratio(0.9, 0.2, 0.05, 0.6, rng), 0.6);
}

TEST(OcclusionRatio, EmpiricalMean) {
    Rng rng(1);
    double s = 0;
    for (int i = 0; i < 10000; ++i) s += sample_occlusion_ratio(0.35, 0.1, 0.0, 0.95, rng);
    EXPECT_NEAR(s / 10000, 0.35, 0.01);
}

TEST(Placement, ZeroTargetMeansNoOcclusion) {
    FigureConfig cfg;
    auto f = generate_figure(sample_figure_spec(5, cfg), cfg);
    Rng rng(5);
    auto rec = place_occluder(f, 5, sample_occluder(rng, 100), 0.0, OcclusionConfig{}, rng);
    EXPECT_EQ(rec.mask_modal, rec.mask_amodal_gt);
    EXPECT_EQ(rec.image_occluded, rec.image_gt);
    EXPECT_EQ(rec.occlusion_ratio, 0.0);
}

TEST(Scene, InvariantsAndRatio) {
    SceneConfig cfg;
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        auto rec = generate_scene(seed, cfg);
        EXPECT_EQ(check_record_invariants(rec), "") << "seed " << seed;
        EXPECT_LE(std::abs(rec.occlusion_ratio - rec.target_ratio), 0.05 + 1e-12);
        for (int i = 0; i < rec.mask_modal.height * rec.mask_modal.width; ++i)
            EXPECT_EQ(rec.mask_modal.data[i], rec.mask_amodal_gt.data[i] && !rec.mask_occluder.data[i]);
    }
}

TEST(Scene, SameSeedSameRecord) {
    SceneConfig cfg;
    EXPECT_EQ(generate_scene(42, cfg), generate_scene(42, cfg));
}

TEST(Augment, HflipInvolution) {
    auto rec = generate_scene(3, SceneConfig{});
    EXPECT_EQ(hflip_record(hflip_record(rec)), rec);
}

TEST(Augment, HflipCoordinates) {
    auto rec = generate_scene(4, SceneConfig{});
    auto f = hflip_record(rec);
    for (int i = 0; i < body25::kJointCount; ++i) {
        const auto& src = rec.joints.joints[body25::mirror_joint(i)];
        EXPECT_DOUBLE_EQ(f.joints.joints[i].x, rec.image_gt.width - 1 - src.x);
        EXPECT_DOUBLE_EQ(f.joints.joints[i].y, src.y);
    }
    EXPECT_EQ(check_record_invariants(f), "");
}

TEST(Augment, ZeroJitterIsIdentity) {
    auto rec = generate_scene(6, SceneConfig{});
    EXPECT_EQ(jitter_record(rec, {1.f, 1.f, 1.f}, {0.f, 0.f, 0.f}), rec);
}

TEST(Augment, ShiftKeepsInvariants) {
    auto rec = generate_scene(7, SceneConfig{});
    Rng rng(7);
    AugmentOps ops{true, true, true, 0.1, 6};
    for (int i = 0; i < 10; ++i) EXPECT_EQ(check_record_invariants(augment_record(rec, ops, rng)), "");
    EXPECT_FALSE(shift_record(rec, 64, 0).has_value());
}

TEST(Corruption, ProbabilityZeroIsIdentity) {
    auto rec = generate_scene(8, SceneConfig{});
    Rng rng(8);
    auto c = corrupt_modal_mask(rec.mask_modal, 0.0, 0.05, 0.30, rng);
    EXPECT_FALSE(c.corrupted);
    EXPECT_EQ(c.mask, rec.mask_modal);
}

TEST(Corruption, ExpansionOnlyWithinBudget) {
    Rng rng(9);
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        auto rec = generate_scene(seed, SceneConfig{});
        auto c = corrupt_modal_mask(rec.mask_modal, 1.0, 0.05, 0.30, rng);
        ASSERT_TRUE(c.corrupted);
        std::size_t added = 0;
        for (std::size_t i = 0; i < c.mask.data.size(); ++i) {
            if (rec.mask_modal.data[i]) EXPECT_EQ(c.mask.data[i], 1);
            added += c.mask.data[i] && !rec.mask_modal.data[i];
        }
        const double frac = double(added) / double(rec.mask_modal.count());
        EXPECT_GE(frac, 0.05);
        EXPECT_LE(frac, 0.30);
        EXPECT_DOUBLE_EQ(frac, c.added_fraction);
    }
}

TEST(Detection, IdentityWithoutNoise) {
    auto rec = generate_scene(10, SceneConfig{});
    Rng rng(10);
    EXPECT_EQ(simulate_pose_detection(rec.joints, 0.0, 0.0, rng), rec.joints);
}

TEST(Detection, PoorRate) {
    auto rec = generate_scene(11, SceneConfig{});
    Rng rng(11);
    int poor = 0;
    for (int i = 0; i < 10000; ++i) {
        bool p = false;
        auto d = simulate_pose_detection(rec.joints, 0.0, 0.079, rng, &p);
        poor += p;
        if (p) EXPECT_LE(d.valid_count(), static_cast<std::size_t>(kPoorDetectionMaxValid));
    }
    EXPECT_NEAR(poor / 10000.0, 0.079, 0.01);
}

TEST(Detection, NoiseBound) {
    auto rec = generate_scene(12, SceneConfig{});
    Rng rng(12);
    int within = 0, total = 0;
    for (int i = 0; i < 400; ++i) {
        auto d = simulate_pose_detection(rec.joints, 2.0, 0.0, rng);
        for (std::size_t k = 0; k < d.size(); ++k) {
            within += std::abs(d.joints[k].x - rec.joints.joints[k].x) <= 6.0 &&
                      std::abs(d.joints[k].y - rec.joints.joints[k].y) <= 6.0;
            ++total;
        }
    }
    EXPECT_GE(within / double(total), 0.99);
}
