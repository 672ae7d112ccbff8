#include <gtest/gtest.h>

#include "deocc/inpaint_loss.hpp"

using namespace deocc;

namespace {

torch::Tensor piecewise_image() {
    auto x = torch::full({1, 3, 8, 8}, 0.2, torch::kDouble);
    x.narrow(3, 4, 4).fill_(0.7);
    return x;
}

double tv_loop(const torch::Tensor& img) {
    auto a = img.accessor<double, 4>();
    const int64_t C = img.size(1), H = img.size(2), W = img.size(3);
    double sx = 0, sy = 0;
    for (int64_t c = 0; c < C; ++c)
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x) {
                if (x + 1 < W) sx += std::abs(a[0][c][y][x + 1] - a[0][c][y][x]);
                if (y + 1 < H) sy += std::abs(a[0][c][y + 1][x] - a[0][c][y][x]);
            }
    return sx / double(C * H * (W - 1)) + sy / double(C * (H - 1) * W);
}

}  // namespace

TEST(InpaintLoss, MatchedInputsLeaveOnlyTv) {
    auto p = piecewise_image();
    auto m = torch::zeros({1, 1, 8, 8}, torch::kDouble);
    m.narrow(2, 0, 4).fill_(1.0);
    const auto L = inpainting_loss(p, p.clone(), m);
    EXPECT_EQ(L.invis.item<double>(), 0.0);
    EXPECT_EQ(L.vis.item<double>(), 0.0);
    EXPECT_EQ(L.perceptual.item<double>(), 0.0);
    EXPECT_EQ(L.style.item<double>(), 0.0);
    EXPECT_NEAR(L.tv.item<double>(), tv_loop(p), 1e-12);
}

TEST(InpaintLoss, ConstantPredictionHasZeroTv) {
    auto p = torch::full({2, 3, 8, 8}, 0.4, torch::kDouble);
    EXPECT_EQ(total_variation(p).item<double>(), 0.0);
}

TEST(InpaintLoss, TwoByTwoHandCase) {
    auto target = torch::full({1, 3, 2, 2}, 0.5, torch::kDouble);
    auto pred = target.clone();
    pred.select(3, 1).select(2, 1).add_(0.1);  // pixel (1, 1), all channels
    auto m = torch::ones({1, 1, 2, 2}, torch::kDouble);
    m[0][0][1][1] = 0.0;  // that pixel is invisible
    const auto L = inpainting_loss(pred, target, m);
    // 3 channels off by 0.1 out of 12 elements
    EXPECT_NEAR(L.invis.item<double>(), 0.3 / 12.0, 1e-12);
    EXPECT_EQ(L.vis.item<double>(), 0.0);

    RandomFeatures feats;
    const auto fp = feats(pred), ft = feats(target);
    double perc = 0, style = 0;
    for (std::size_t i = 0; i < fp.size(); ++i) {
        perc += (fp[i] - ft[i]).abs().mean().item<double>();
        style += (gram_matrix(fp[i]) - gram_matrix(ft[i])).abs().mean().item<double>();
    }
    const double expect = 6.0 * 0.3 / 12.0 + 0.1 * perc + 250.0 * style + 0.1 * tv_loop(pred);
    EXPECT_NEAR(L.total.item<double>(), expect, 1e-9);
}

TEST(InpaintLoss, TotalIsWeightedSumAndTermsNonNegative) {
    torch::manual_seed(3);
    for (int trial = 0; trial < 5; ++trial) {
        auto pred = torch::rand({2, 3, 16, 16}, torch::kDouble);
        auto target = torch::rand({2, 3, 16, 16}, torch::kDouble);
        auto m = (torch::rand({2, 1, 16, 16}, torch::kDouble) > 0.5).to(torch::kDouble);
        InpaintWeights w;
        const auto L = inpainting_loss(pred, target, m, w, m);
        for (const auto* t : {&L.invis, &L.vis, &L.perceptual, &L.style, &L.tv}) EXPECT_GE(t->item<double>(), 0.0);
        const double sum = w.invis * L.invis.item<double>() + w.vis * L.vis.item<double>() +
                           w.perceptual * L.perceptual.item<double>() + w.style * L.style.item<double>() +
                           w.tv * L.tv.item<double>();
        EXPECT_NEAR(L.total.item<double>(), sum, 1e-9);
    }
}

TEST(InpaintLoss, DefaultWeights) {
    InpaintWeights w;
    EXPECT_EQ(w.invis, 6.0);
    EXPECT_EQ(w.vis, 1.0);
    EXPECT_EQ(w.perceptual, 0.1);
    EXPECT_EQ(w.style, 250.0);
    EXPECT_EQ(w.tv, 0.1);
}

TEST(InpaintLoss, RandomFeaturesIgnoreGlobalSeed) {
    torch::manual_seed(1);
    RandomFeatures a;
    torch::manual_seed(2);
    RandomFeatures b;
    auto x = torch::rand({1, 3, 8, 8});
    EXPECT_TRUE(torch::equal(a(x).back(), b(x).back()));
}
