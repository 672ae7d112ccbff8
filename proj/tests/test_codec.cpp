#include <gtest/gtest.h>

#include <filesystem>

#include "deocc/codec.hpp"
#include "deocc/errors.hpp"
#include "deocc/tensor_io.hpp"

using namespace deocc;

namespace {

std::vector<SceneRecord> scenes(int n, std::uint64_t base = 0) {
    std::vector<SceneRecord> out;
    SceneConfig sc;
    for (std::uint64_t s = base; static_cast<int>(out.size()) < n; ++s) {
        try {
            out.push_back(generate_scene(s, sc));
        } catch (const GenerationError&) {
        }
    }
    return out;
}

CodecOptions small() {
    CodecOptions o;
    o.width = 16;
    return o;
}

}  // namespace

TEST(Codec, UntrainedIsFiniteWithLatentShape) {
    auto p = make_codec(small(), 1);
    torch::NoGradGuard g;
    auto x = torch::rand({2, 3, 64, 64});
    auto z = encode(x, p);
    EXPECT_EQ(z.sizes(), (std::vector<int64_t>{2, 4, 8, 8}));
    auto y = decode(z, p);
    EXPECT_EQ(y.sizes(), x.sizes());
    EXPECT_TRUE(torch::isfinite(y).all().item<bool>());
    EXPECT_GE(y.min().item<float>(), 0.f);
    EXPECT_LE(y.max().item<float>(), 1.f);
}

TEST(Codec, MaskIsReplicatedToThreeChannels) {
    auto p = make_codec(small(), 1);
    torch::NoGradGuard g;
    auto m = (torch::rand({1, 1, 64, 64}) > 0.5).to(torch::kFloat);
    EXPECT_TRUE(torch::equal(encode(m, p), encode(m.expand({1, 3, 64, 64}).contiguous(), p)));
}

TEST(Codec, RejectsIndivisibleSize) {
    auto p = make_codec(small(), 1);
    EXPECT_THROW(encode(torch::rand({1, 3, 60, 64}), p), ContractError);
}

TEST(Codec, NeedsHundredRecords) {
    EXPECT_THROW(train_codec(scenes(99), small(), {}), ContractError);
}

TEST(Codec, TrainingLossDecreasesAndRoundTripsThroughDisk) {
    CodecTrainConfig c;
    c.epochs = 2;
    const auto res = train_codec(scenes(100), small(), c);
    ASSERT_EQ(res.epoch_losses.size(), 2u);
    EXPECT_LT(res.epoch_losses.back(), res.epoch_losses.front());
    EXPECT_EQ(res.params.version, kCodecVersion);

    const auto path = (std::filesystem::temp_directory_path() / "deocc_codec_test.pt").string();
    save_codec(path, res.params, "test");
    const auto back = load_codec(path);
    torch::NoGradGuard g;
    auto x = torch::rand({1, 3, 64, 64});
    EXPECT_TRUE(torch::equal(encode(x, res.params), encode(x, back)));
    EXPECT_TRUE(torch::equal(decode(encode(x, back), back), decode(encode(x, res.params), res.params)));
    std::filesystem::remove(path);
}

TEST(Codec, LoadMissingFileIsConfigError) { EXPECT_THROW(load_codec("/nonexistent/codec.pt"), ConfigError); }

class Finetune : public ::testing::Test {
protected:
    void SetUp() override {
        codec = make_codec(small(), 4);
        const auto s = scenes(1, 50).front();
        i_o = to_tensor(s.image_occluded).unsqueeze(0);
        m_m = to_tensor(s.mask_modal).unsqueeze(0);
        torch::NoGradGuard g;
        z = encode(to_tensor(s.image_gt).unsqueeze(0), codec);
    }
    CodecParams codec;
    torch::Tensor i_o, m_m, z;
};

TEST_F(Finetune, ZeroStepsReturnsInitialDecode) {
    FinetuneConfig c;
    c.steps = 0;
    const auto r = finetune_decoder(z, i_o, m_m, codec, c);
    EXPECT_TRUE(torch::equal(r.i_do, r.i_do_star));
    EXPECT_EQ(r.objective.size(), 1u);
}

TEST_F(Finetune, ObjectiveFallsAndVisibleRegionApproachesInput) {
    const auto r = finetune_decoder(z, i_o, m_m, codec, {});
    ASSERT_EQ(r.objective.size(), 51u);
    double best = r.objective.front();
    for (double v : r.objective) {
        EXPECT_LE(v, best * 1.05);
        best = std::min(best, v);
    }
    EXPECT_LT(r.objective.back(), r.objective.front());
    auto vis_l1 = [&](const torch::Tensor& img) { return ((img - i_o).abs() * m_m).sum().item<double>(); };
    EXPECT_LT(vis_l1(r.i_do_star), vis_l1(r.i_do));
}

TEST_F(Finetune, LeavesSharedDecoderUntouched) {
    torch::NoGradGuard g;
    const auto before = decode(z, codec);
    (void)finetune_decoder(z, i_o, m_m, codec, {});
    EXPECT_TRUE(torch::equal(before, decode(z, codec)));
}

TEST_F(Finetune, Deterministic) {
    const auto a = finetune_decoder(z, i_o, m_m, codec, {});
    const auto b = finetune_decoder(z, i_o, m_m, codec, {});
    EXPECT_TRUE(torch::equal(a.i_do_star, b.i_do_star));
    EXPECT_EQ(a.objective, b.objective);
}

TEST_F(Finetune, NonFiniteInputIsOptimizationError) {
    auto bad = i_o.clone();
    bad[0][0][0][0] = std::numeric_limits<float>::quiet_NaN();
    EXPECT_THROW(finetune_decoder(z, bad, m_m, codec, {}), OptimizationError);
}
