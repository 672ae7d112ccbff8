#pragma once

#include <torch/torch.h>

#include <functional>
#include <string>
#include <vector>

namespace deocc {

// Linear-beta schedule. Vectors are indexed by timestep t = 0..T; index 0 of
// beta/alpha is unused (set to 0/1) and alpha_bar[0] = 1 (empty product).
struct NoiseSchedule {
    int T = 0;
    double beta_start = 0.0;
    double beta_end = 0.0;
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;
};

enum class ScheduleKind { linear };

NoiseSchedule make_schedule(int T, double beta_start, double beta_end, ScheduleKind kind = ScheduleKind::linear);

// sqrt(abar_t) z0 + sqrt(1 - abar_t) eps
torch::Tensor forward_diffuse(const torch::Tensor& z0, int t, const torch::Tensor& eps, const NoiseSchedule& sched);
// Batched variant, one timestep per leading-dimension entry.
torch::Tensor forward_diffuse(const torch::Tensor& z0, const torch::Tensor& t, const torch::Tensor& eps,
                              const NoiseSchedule& sched);

struct DdimStep {
    torch::Tensor z_hat;   // predicted clean latent
    torch::Tensor z_prev;  // latent at t - 1
};

DdimStep ddim_step(const torch::Tensor& z_t, const torch::Tensor& eps_t, int t, const NoiseSchedule& sched);

// Predicts the noise in z_t at timestep t; conditioning is bound by the caller.
using NoisePredictor = std::function<torch::Tensor(const torch::Tensor& z_t, int t)>;

// Deterministic reverse process from t = T down to 1. Throws SamplingError on
// non-finite predictions.
torch::Tensor sample_loop(const NoisePredictor& denoiser, const torch::Tensor& z_T, const NoiseSchedule& sched);

double denoise_loss(const torch::Tensor& eps_true, const torch::Tensor& eps_pred);
torch::Tensor denoise_loss_tensor(const torch::Tensor& eps_true, const torch::Tensor& eps_pred);

}  // namespace deocc
