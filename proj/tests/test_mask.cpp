#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "deocc/checkpoint.hpp"
#include "deocc/errors.hpp"
#include "deocc/mask_completion.hpp"
#include "deocc/scenegen.hpp"
#include "deocc/tensor_io.hpp"

using namespace deocc;

namespace {

struct Fixture {
    CodecParams codec;
    std::vector<MaskSample> samples;
};

const Fixture& fixture() {
    static const Fixture f = [] {
        Fixture f;
        CodecOptions o;
        o.width = 16;
        f.codec = make_codec(o, 2);
        SceneConfig sc;
        MaskFeatureConfig fc;
        for (std::uint64_t s = 0; f.samples.size() < 24; ++s) {
            try {
                const auto r = generate_scene(s, sc);
                auto m = build_mask_sample(r.image_occluded, r.mask_modal, r.joints, fc, f.codec);
                m.target = to_tensor(r.mask_amodal_gt);
                m.image_target = to_tensor(r.image_gt);
                f.samples.push_back(std::move(m));
            } catch (const GenerationError&) {
            }
        }
        return f;
    }();
    return f;
}

MaskInputs batch(int n, int offset = 0) {
    std::vector<const MaskSample*> items;
    for (int i = 0; i < n; ++i) items.push_back(&fixture().samples[offset + i]);
    return collate(items);
}

void randomize(torch::nn::Module& m, std::uint64_t seed) {
    torch::NoGradGuard g;
    torch::manual_seed(seed);
    for (auto& p : m.parameters()) p.copy_(torch::randn_like(p) * 0.2);
}

}  // namespace

TEST(JointFeature, InvalidJointsGiveZeroRows) {
    auto net = make_mask_net({}, 1);
    auto in = batch(2);
    auto f = net->joint_feature(in.joints, torch::zeros_like(in.valid));
    EXPECT_EQ(f.abs().sum().item<float>(), 0.f);
}

TEST(JointFeature, RowsDependOnlyOnTheirJoint) {
    auto net = make_mask_net({}, 1);
    auto in = batch(1);
    torch::NoGradGuard g;
    auto base = net->joint_feature(in.joints, in.valid);
    for (int k : {0, 4, 11, 24}) {
        auto moved = in.joints.clone();
        moved[0][k][0] += 0.1;
        auto f = net->joint_feature(moved, in.valid);
        for (int j = 0; j < 25; ++j) {
            const bool same = torch::equal(f[0][j], base[0][j]);
            if (j == k)
                EXPECT_FALSE(same) << j;
            else
                EXPECT_TRUE(same) << j;
        }
    }
}

TEST(Prior, ShapesAndNormalisedAttention) {
    auto net = make_mask_net({}, 3);
    randomize(*net, 9);
    auto in = batch(3);
    torch::NoGradGuard g;
    const auto p = net->extract_prior(in.z0, in.h2d, net->joint_feature(in.joints, in.valid), in.valid);
    ASSERT_EQ(p.features.size(), 4u);
    ASSERT_EQ(p.attention.size(), 2u);
    const auto spec = mask_prior_spec(net->opts);
    for (int m = 0; m < 4; ++m) {
        EXPECT_EQ(p.features[m].size(1), spec.feature_channels[m]);
        EXPECT_EQ(p.features[m].size(2), spec.feature_resolutions[m]);
        EXPECT_EQ(p.features[m].size(3), spec.feature_resolutions[m]);
    }
    EXPECT_EQ((std::array<int64_t, 4>{2, 4, 8, 16}), spec.feature_resolutions);
    for (int a = 0; a < 2; ++a) {
        EXPECT_EQ(p.attention[a].size(1), 26);
        EXPECT_EQ(p.attention[a].size(2), spec.attention_resolutions[a]);
        const auto rows = p.attention[a].sum(1);
        EXPECT_LT((rows - 1.0).abs().max().item<float>(), 1e-5f);
        EXPECT_GE(p.attention[a].min().item<float>(), 0.f);
    }
}

TEST(Prior, IndependentOfGlobalRng) {
    auto net = make_mask_net({}, 3);
    randomize(*net, 10);
    auto in = batch(2);
    torch::NoGradGuard g;
    auto fj = net->joint_feature(in.joints, in.valid);
    torch::manual_seed(1);
    auto a = net->extract_prior(in.z0, in.h2d, fj, in.valid);
    torch::manual_seed(2);
    auto b = net->extract_prior(in.z0, in.h2d, fj, in.valid);
    for (int m = 0; m < 4; ++m) EXPECT_TRUE(torch::equal(a.features[m], b.features[m]));
}

TEST(CompleteMask, UntrainedHeadIsHalfEverywhere) {
    auto net = make_mask_net({}, 4);
    auto in = batch(2);
    torch::NoGradGuard g;
    auto p = net->forward(in);
    EXPECT_EQ(p.sizes(), in.m_m.sizes());
    EXPECT_EQ(p.min().item<float>(), 0.5f);
    EXPECT_EQ(p.max().item<float>(), 0.5f);
}

TEST(CompleteMask, ZeroedAdaptersReproducePlainUnet) {
    MaskNetOptions o;
    auto net = make_mask_net(o, 5);
    randomize(*net, 11);
    net->unet->zero_prior_adapters();
    auto plain_opts = net->unet->opts;
    plain_opts.use_prior = false;
    nn::ImageUNet plain(plain_opts);
    {
        torch::NoGradGuard g;
        auto src = net->unet->named_parameters();
        for (auto& p : plain->named_parameters()) p.value().copy_(src[p.key()]);
    }
    auto in = batch(2);
    torch::NoGradGuard g;
    auto prior = net->extract_prior(in.z0, in.h2d, net->joint_feature(in.joints, in.valid), in.valid);
    auto with = complete_mask(net, in.m_m, in.h_o, prior);
    auto without = logits_to_prob(plain->forward(torch::cat({in.m_m, in.h_o}, 1), {}, {}).mask_logits);
    EXPECT_TRUE(torch::equal(with, without));
}

TEST(CompleteMask, ZeroHeatmapStillValid) {
    auto net = make_mask_net({}, 6);
    randomize(*net, 12);
    auto in = batch(2);
    in.h_o = torch::zeros_like(in.h_o);
    torch::NoGradGuard g;
    auto p = net->forward(in);
    EXPECT_TRUE(torch::isfinite(p).all().item<bool>());
    EXPECT_GT(p.min().item<float>(), 0.f);
    EXPECT_LT(p.max().item<float>(), 1.f);
}

TEST(CompleteMask, ResolutionMismatchIsContractError) {
    auto net = make_mask_net({}, 6);
    auto in = batch(1);
    PriorFeatures none;
    EXPECT_THROW(complete_mask(net, in.m_m, torch::zeros({1, 1, 32, 32}), none), ContractError);
}

TEST(CompleteMask, HeatmapInvariantToJointOrder) {
    JointSet pts;
    for (int i = 0; i < 12; ++i) pts.joints.push_back({3.0 + 4.5 * i, 60.0 - 3.7 * i, true});
    auto rev = pts;
    std::reverse(rev.joints.begin(), rev.joints.end());
    EXPECT_EQ(render_heatmap(pts, 8.0, 64, 64).map.values, render_heatmap(rev, 8.0, 64, 64).map.values);
}

TEST(Bce, HalfIsLn2) {
    auto gt = (torch::rand({1, 1, 16, 16}) > 0.3).to(torch::kDouble);
    EXPECT_NEAR(bce_loss(torch::full_like(gt, 0.5), gt), std::log(2.0), 1e-12);
}

TEST(Bce, ExactPredictionIsNearZero) {
    auto gt = (torch::rand({1, 1, 16, 16}) > 0.3).to(torch::kDouble);
    EXPECT_LE(bce_loss(gt, gt), 1e-6);
}

TEST(Bce, FlipSymmetry) {
    auto gt = (torch::rand({2, 1, 8, 8}) > 0.5).to(torch::kDouble);
    auto p = torch::rand({2, 1, 8, 8}, torch::kDouble) * 0.98 + 0.01;
    EXPECT_NEAR(bce_loss(p, gt), bce_loss(1.0 - p, 1.0 - gt), 1e-12);
}

TEST(MaskTraining, Defaults) {
    MaskTrainConfig c;
    EXPECT_EQ(c.optimizer, "sgd");
    EXPECT_EQ(c.loss, "bce");
    EXPECT_EQ(c.lr, 1e-3);
    EXPECT_EQ(c.iterations, 2000);
    EXPECT_EQ(c.batch_size, 16);
    EXPECT_EQ(c.lambda_bce, 10.0);
    EXPECT_EQ(MaskNetOptions{}.unet_channels.size(), 6u);
}

namespace {

MaskTrainConfig quick() {
    MaskTrainConfig c;
    c.batch_size = 4;
    c.lr = 1e-2;
    c.seed = 21;
    return c;
}

}  // namespace

TEST(MaskTraining, LossFallsAndRunsAreReproducible) {
    const auto c = quick();
    auto run = [&](int iters) {
        auto net = make_mask_net({}, 7);
        auto opt = make_mask_optimizer(net, c);
        MaskTrainState st;
        train_mask_net(net, *opt, fixture().samples, c, st, iters);
        return st;
    };
    const auto a = run(40), b = run(40);
    ASSERT_EQ(a.curve.size(), 40u);
    EXPECT_EQ(a.curve.back().loss, b.curve.back().loss);
    double first = 0, last = 0;
    for (int i = 0; i < 5; ++i) {
        first += a.curve[i].loss;
        last += a.curve[35 + i].loss;
    }
    EXPECT_LT(last, first);
}

TEST(MaskTraining, ResumeReproducesNextStepLoss) {
    const auto c = quick();
    auto net = make_mask_net({}, 8);
    auto opt = make_mask_optimizer(net, c);
    MaskTrainState st;
    train_mask_net(net, *opt, fixture().samples, c, st, 6);

    const auto path = (std::filesystem::temp_directory_path() / "deocc_mask_resume.pt").string();
    save_mask_net(path, net, opt.get(), st, {}, c, "test");
    train_mask_net(net, *opt, fixture().samples, c, st, 8);

    auto back = load_mask_net(path);
    EXPECT_EQ(back.state.iteration, 6);
    auto opt2 = make_mask_optimizer(back.net, c);
    ASSERT_TRUE(load_optimizer_state(path, *opt2));
    train_mask_net(back.net, *opt2, fixture().samples, c, back.state, 8);
    EXPECT_EQ(back.state.curve[0].loss, st.curve[6].loss);
    EXPECT_EQ(back.state.curve[1].loss, st.curve[7].loss);
    std::filesystem::remove(path);
}

TEST(MaskTraining, CrossEntropyHeadHasTwoClasses) {
    MaskTrainConfig c = quick();
    c.loss = "ce";
    auto net = make_mask_net(mask_options_for(MaskNetOptions{}, c), 9);
    EXPECT_EQ(net->logits(batch(2)).size(1), 2);
    auto opt = make_mask_optimizer(net, c);
    MaskTrainState st;
    train_mask_net(net, *opt, fixture().samples, c, st, 3);
    EXPECT_TRUE(std::isfinite(st.curve.back().loss));
}

TEST(MaskTraining, OneStageShapes) {
    MaskNetOptions o;
    o.one_stage = true;
    auto net = make_mask_net(o, 10);
    auto in = batch(2);
    torch::NoGradGuard g;
    auto out = net->outputs(in);
    EXPECT_EQ(out.mask_logits.sizes(), (std::vector<int64_t>{2, 1, 64, 64}));
    EXPECT_EQ(out.rgb.sizes(), (std::vector<int64_t>{2, 3, 64, 64}));
}

TEST(MaskTraining, UnknownOptimizerIsConfigError) {
    auto net = make_mask_net({}, 1);
    MaskTrainConfig c;
    c.optimizer = "rmsprop";
    EXPECT_THROW(make_mask_optimizer(net, c), ConfigError);
}
