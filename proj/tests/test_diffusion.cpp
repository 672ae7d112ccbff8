#include <gtest/gtest.h>

#include <cmath>

#include "deocc/diffusion.hpp"
#include "deocc/errors.hpp"

using namespace deocc;

TEST(Schedule, AlphaBarZeroIsOne) {
    for (int T : {1, 5, 50, 1000}) EXPECT_EQ(make_schedule(T, 1e-4, 0.02).alpha_bar[0], 1.0);
}

TEST(Schedule, AlphaBarIsSerialProduct) {
    const auto s = make_schedule(10, 1e-3, 0.2);
    for (int t = 1; t <= 10; ++t) {
        double p = 1.0;
        for (int k = 1; k <= t; ++k) p *= 1.0 - s.beta[k];
        EXPECT_NEAR(s.alpha_bar[t], p, 1e-12);
    }
}

TEST(Schedule, StrictlyDecreasing) {
    const auto s = make_schedule(50, 1e-4, 0.02);
    for (int t = 1; t <= 50; ++t) EXPECT_LT(s.alpha_bar[t], s.alpha_bar[t - 1]);
}

TEST(Schedule, RejectsBadBetas) {
    EXPECT_THROW(make_schedule(0, 1e-4, 0.02), ContractError);
    EXPECT_THROW(make_schedule(10, 0.0, 0.02), ContractError);
    EXPECT_THROW(make_schedule(10, 0.1, 0.05), ContractError);
    EXPECT_THROW(make_schedule(10, 0.1, 1.0), ContractError);
}

// Schedule whose alpha_bar values are chosen by hand for the scalar oracles.
static NoiseSchedule hand_schedule() {
    NoiseSchedule s;
    s.T = 2;
    s.alpha_bar = {1.0, 0.81, 0.25};
    s.alpha = {1.0, 0.81, 0.25 / 0.81};
    s.beta = {0.0, 0.19, 1.0 - 0.25 / 0.81};
    return s;
}

TEST(ForwardDiffuse, TimestepZeroIsIdentity) {
    torch::manual_seed(0);
    auto z0 = torch::randn({4, 8, 8}, torch::kDouble);
    auto eps = torch::randn({4, 8, 8}, torch::kDouble);
    EXPECT_TRUE(torch::equal(forward_diffuse(z0, 0, eps, make_schedule(50, 1e-4, 0.02)), z0));
}

TEST(ForwardDiffuse, ZeroNoiseScales) {
    const auto s = make_schedule(50, 1e-4, 0.02);
    auto z0 = torch::randn({4, 8, 8}, torch::kDouble);
    auto out = forward_diffuse(z0, 30, torch::zeros_like(z0), s);
    EXPECT_TRUE(torch::allclose(out, z0 * std::sqrt(s.alpha_bar[30]), 0, 1e-15));
}

TEST(ForwardDiffuse, ScalarHandCase) {
    auto z = forward_diffuse(torch::full({1}, 2.0, torch::kDouble), 2, torch::ones({1}, torch::kDouble),
                             hand_schedule());
    EXPECT_NEAR(z.item<double>(), 1.0 + 0.8660254037844386, 1e-12);
}

TEST(ForwardDiffuse, BatchedMatchesScalar) {
    const auto s = make_schedule(20, 1e-3, 0.05);
    auto z0 = torch::randn({3, 4, 2, 2}, torch::kDouble);
    auto eps = torch::randn({3, 4, 2, 2}, torch::kDouble);
    auto t = torch::tensor({0, 7, 20}, torch::kLong);
    auto b = forward_diffuse(z0, t, eps, s);
    for (int i = 0; i < 3; ++i)
        EXPECT_TRUE(torch::allclose(b[i], forward_diffuse(z0[i], t[i].item<int>(), eps[i], s), 0, 1e-14));
}

TEST(Ddim, ScalarHandCase) {
    auto r = ddim_step(torch::full({1}, 1.8660254037844386, torch::kDouble), torch::ones({1}, torch::kDouble), 2,
                       hand_schedule());
    EXPECT_NEAR(r.z_hat.item<double>(), 2.0, 1e-12);
    EXPECT_NEAR(r.z_prev.item<double>(), 0.9 * 2.0 + std::sqrt(0.19), 1e-12);
}

TEST(Ddim, TrueNoiseRecoversCleanLatent) {
    const auto s = make_schedule(50, 1e-4, 0.02);
    auto z0 = torch::randn({4, 8, 8}, torch::kDouble);
    auto eps = torch::randn({4, 8, 8}, torch::kDouble);
    for (int t : {1, 10, 50}) {
        auto r = ddim_step(forward_diffuse(z0, t, eps, s), eps, t, s);
        EXPECT_LT((r.z_hat - z0).abs().max().item<double>(), 1e-12);
        if (t == 1) EXPECT_LT((r.z_prev - z0).abs().max().item<double>(), 1e-12);
    }
}

TEST(Ddim, RejectsTimestepZero) {
    auto z = torch::zeros({1});
    EXPECT_THROW(ddim_step(z, z, 0, make_schedule(5, 1e-3, 0.02)), ContractError);
}

TEST(SampleLoop, OracleDenoiserRecoversZ0) {
    const auto s = make_schedule(50, 1e-4, 0.02);
    auto z0 = torch::randn({4, 8, 8}, torch::kDouble);
    auto eps = torch::randn({4, 8, 8}, torch::kDouble);
    // Deterministic DDIM keeps the same epsilon along the whole trajectory.
    NoisePredictor oracle = [&](const torch::Tensor&, int) { return eps; };
    auto out = sample_loop(oracle, forward_diffuse(z0, s.T, eps, s), s);
    EXPECT_LT((out - z0).abs().max().item<double>(), 1e-5);
}

TEST(SampleLoop, SingleStepEqualsDdimStep) {
    const auto s = make_schedule(1, 0.1, 0.1);
    auto zT = torch::randn({4, 8, 8}, torch::kDouble);
    NoisePredictor f = [](const torch::Tensor& z, int) { return z * 0.3; };
    EXPECT_TRUE(torch::equal(sample_loop(f, zT, s), ddim_step(zT, zT * 0.3, 1, s).z_prev));
}

TEST(SampleLoop, Deterministic) {
    const auto s = make_schedule(10, 1e-3, 0.05);
    auto zT = torch::randn({4, 8, 8});
    NoisePredictor f = [](const torch::Tensor& z, int t) { return torch::tanh(z) * (0.1 * t); };
    EXPECT_TRUE(torch::equal(sample_loop(f, zT, s), sample_loop(f, zT, s)));
}

TEST(SampleLoop, NonFiniteReportsStep) {
    const auto s = make_schedule(10, 1e-3, 0.05);
    NoisePredictor f = [](const torch::Tensor& z, int t) {
        return t == 7 ? torch::full_like(z, std::nan("")) : torch::zeros_like(z);
    };
    try {
        sample_loop(f, torch::zeros({4, 2, 2}), s);
        FAIL() << "expected SamplingError";
    } catch (const SamplingError& e) {
        EXPECT_EQ(e.step(), 7);
    }
}

TEST(DenoiseLoss, HandCases) {
    auto a = torch::zeros({2}, torch::kDouble);
    EXPECT_EQ(denoise_loss(a, a), 0.0);
    EXPECT_DOUBLE_EQ(denoise_loss(a, torch::ones({2}, torch::kDouble)), 1.0);
    for (int i = 0; i < 20; ++i) EXPECT_GE(denoise_loss(torch::randn({5}), torch::randn({5})), 0.0);
}
