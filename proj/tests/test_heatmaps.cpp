#include <gtest/gtest.h>

#include <random>
#include <set>

#include "deocc/heatmaps.hpp"
#include "oracles.hpp"

using namespace deocc;

static JointSet all_valid(int n, std::mt19937& rng, int w = 64) {
    JointSet j;
    std::uniform_real_distribution<double> u(0, w - 1);
    for (int i = 0; i < n; ++i) j.joints.push_back({u(rng), u(rng), true});
    return j;
}

TEST(FootExclusion, KeepsNineteen) {
    std::mt19937 rng(0);
    auto j = all_valid(25, rng);
    auto b = exclude_foot_joints(j);
    ASSERT_EQ(b.size(), 19u);
    EXPECT_EQ(b.valid_count(), 19u);
    // removed ids are exactly the foot ids: the kept ones are 0..18 in order
    std::set<int> removed;
    for (int i = 0; i < 25; ++i) {
        bool kept = false;
        for (const auto& k : b.joints) kept |= k == j.joints[i];
        if (!kept) removed.insert(i);
    }
    const auto& topo = SkeletonTopology::standard();
    EXPECT_EQ(removed, std::set<int>(topo.foot_indices.begin(), topo.foot_indices.end()));
}

TEST(FootExclusion, WrongArityThrows) {
    JointSet j;
    j.joints.resize(18);
    EXPECT_THROW(exclude_foot_joints(j), ContractError);
}

TEST(Subdivide, CountsAtDefaultSubdivision) {
    std::mt19937 rng(1);
    auto body = exclude_foot_joints(all_valid(25, rng));
    EXPECT_EQ(subdivide_joints(body, 9).size(), 126u);
    EXPECT_EQ(densify_joints(all_valid(25, rng), 9).size(), 145u);
    EXPECT_EQ(subdivide_joints(body, 0).size(), 0u);
}

TEST(Subdivide, ThreePointsOnAxis) {
    JointSet body;
    body.joints.assign(19, Joint{0, 0, false});
    body.joints[0] = {0, 0, true};
    body.joints[1] = {4, 0, true};
    auto sub = subdivide_joints(body, 3);
    ASSERT_EQ(sub.size(), 3u);
    for (int i = 0; i < 3; ++i) {
        EXPECT_DOUBLE_EQ(sub.joints[i].x, i + 1.0);
        EXPECT_DOUBLE_EQ(sub.joints[i].y, 0.0);
    }
}

TEST(Subdivide, MidpointForOne) {
    std::mt19937 rng(2);
    auto body = exclude_foot_joints(all_valid(25, rng));
    auto sub = subdivide_joints(body, 1);
    const auto& pairs = SkeletonTopology::standard().pairs;
    ASSERT_EQ(sub.size(), pairs.size());
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const auto& a = body.joints[pairs[k].first];
        const auto& b = body.joints[pairs[k].second];
        EXPECT_NEAR(sub.joints[k].x, 0.5 * (a.x + b.x), 1e-12);
        EXPECT_NEAR(sub.joints[k].y, 0.5 * (a.y + b.y), 1e-12);
    }
}

TEST(Subdivide, InvalidEndpointSkipsPair) {
    std::mt19937 rng(3);
    auto body = exclude_foot_joints(all_valid(25, rng));
    body.joints[4].valid = false;  // wrist: one pair
    EXPECT_EQ(subdivide_joints(body, 9).size(), 13u * 9u);
}

TEST(Selection, ModalExtremes) {
    std::mt19937 rng(4);
    auto j = all_valid(30, rng);
    j.joints[3].valid = false;
    EXPECT_EQ(select_occluded_joints(j, Mask(64, 64, 1)).size(), 0u);
    EXPECT_EQ(select_occluded_joints(j, Mask(64, 64, 0)).size(), 29u);
}

TEST(Selection, MatchesPixelLookup) {
    std::mt19937 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        Mask m(8, 8);
        for (auto& v : m.data) v = rng() % 2;
        auto j = all_valid(10, rng, 8);
        std::vector<Joint> expect;
        for (const auto& q : j.joints) {
            const int x = std::clamp<int>(static_cast<int>(std::floor(q.x + 0.5)), 0, 7);
            const int y = std::clamp<int>(static_cast<int>(std::floor(q.y + 0.5)), 0, 7);
            if (m.data[y * 8 + x] == 0) expect.push_back(q);
        }
        EXPECT_EQ(select_occluded_joints(j, m).joints, expect);
    }
}

TEST(Render, PeakIsOne) {
    JointSet j;
    j.joints.push_back({10, 10, true});
    auto h = render_heatmap(j, 2.5, 64, 64);
    EXPECT_EQ(h.at(10, 10), 1.0);
    EXPECT_EQ(h.sigma, 2.5);
}

TEST(Render, TwoJointsEquidistant) {
    JointSet j;
    j.joints.push_back({20, 30, true});
    j.joints.push_back({40, 30, true});
    auto h = render_heatmap(j, 8.0, 64, 64);
    // (30, 36): distance^2 = 100 + 36 from both
    EXPECT_NEAR(h.at(36, 30), std::exp(-136.0 / 128.0), 1e-12);
}

TEST(Render, ClosedFormEverywhere) {
    std::mt19937 rng(6);
    auto j = all_valid(7, rng, 32);
    auto h = render_heatmap(j, 3.0, 32, 32);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
            double best = 0;
            for (const auto& q : j.joints) {
                auto p = joint_pixel(q, 32, 32);
                best = std::max(best, oracle::gaussian(x, y, p.x, p.y, 3.0));
            }
            EXPECT_NEAR(h.at(y, x), best, 1e-12);
        }
}

TEST(Render, NoJointsIsZero) {
    auto h = render_heatmap(JointSet{}, 8.0, 16, 16);
    for (double v : h.map.values) EXPECT_EQ(v, 0.0);
    EXPECT_THROW(render_heatmap(JointSet{}, 0.0, 16, 16), ContractError);
}

TEST(Render, StackRescales) {
    JointSet j;
    j.joints.push_back({20, 40, true});
    j.joints.push_back({0, 0, false});
    auto s = render_heatmap_stack(j, 2.5, 32, 32, 64, 64);
    ASSERT_EQ(s.size(), 2u * 32 * 32);
    EXPECT_FLOAT_EQ(s[20 * 32 + 10], 1.0f);
    for (int i = 0; i < 32 * 32; ++i) EXPECT_EQ(s[32 * 32 + i], 0.0f);
}

TEST(Variants, NamesAndMaskVariant) {
    for (auto k : {OcclusionInputKind::occluded_joint_mask, OcclusionInputKind::whole_joint_heatmap,
                   OcclusionInputKind::occluded_joint_heatmap})
        EXPECT_EQ(parse_occlusion_input_kind(to_string(k)), k);
    EXPECT_THROW(parse_occlusion_input_kind("depth"), ContractError);

    std::mt19937 rng(7);
    Mask modal(64, 64);
    for (int y = 10; y < 50; ++y)
        for (int x = 20; x < 40; ++x) modal.at(y, x) = 1;
    auto dense = densify_joints(all_valid(25, rng), 9);
    auto hm = build_occlusion_input_variant(OcclusionInputKind::occluded_joint_mask, dense, modal, 8.0);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            const double v = hm.at(y, x);
            EXPECT_TRUE(v == 0.0 || v == 1.0);
            if (modal.at(y, x)) EXPECT_EQ(v, 0.0);
        }
    auto none = build_occlusion_input_variant(OcclusionInputKind::occluded_joint_mask, dense, Mask(64, 64, 1), 8.0);
    for (double v : none.map.values) EXPECT_EQ(v, 0.0);
}

TEST(OccludedHeatmap, SigmaZeroOmits) {
    std::mt19937 rng(8);
    auto h = occluded_joint_heatmap(all_valid(25, rng), Mask(64, 64), 9, 0.0);
    for (double v : h.map.values) EXPECT_EQ(v, 0.0);
}
