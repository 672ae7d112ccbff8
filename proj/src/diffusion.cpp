#include "deocc/diffusion.hpp"

#include <cmath>

#include "deocc/errors.hpp"

namespace deocc {

NoiseSchedule make_schedule(int T, double beta_start, double beta_end, ScheduleKind kind) {
    require(T >= 1, "schedule needs T >= 1");
    require(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0,
            "schedule needs 0 < beta_start <= beta_end < 1");
    require(kind == ScheduleKind::linear, "only the linear schedule is supported");
    NoiseSchedule s;
    s.T = T;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    s.beta.assign(T + 1, 0.0);
    s.alpha.assign(T + 1, 1.0);
    s.alpha_bar.assign(T + 1, 1.0);
    for (int t = 1; t <= T; ++t) {
        const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / (T - 1);
        s.beta[t] = beta_start + frac * (beta_end - beta_start);
        s.alpha[t] = 1.0 - s.beta[t];
        s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
    }
    return s;
}

torch::Tensor forward_diffuse(const torch::Tensor& z0, int t, const torch::Tensor& eps, const NoiseSchedule& sched) {
    require(t >= 0 && t <= sched.T, "forward_diffuse: t outside [0, T]");
    require(z0.sizes() == eps.sizes(), "forward_diffuse: eps shape differs from z0");
    if (t == 0) return z0.clone();
    const double ab = sched.alpha_bar[t];
    return z0 * std::sqrt(ab) + eps * std::sqrt(1.0 - ab);
}

torch::Tensor forward_diffuse(const torch::Tensor& z0, const torch::Tensor& t, const torch::Tensor& eps,
                              const NoiseSchedule& sched) {
    require(z0.sizes() == eps.sizes(), "forward_diffuse: eps shape differs from z0");
    require(t.dim() == 1 && t.size(0) == z0.size(0), "forward_diffuse: one timestep per batch entry");
    auto ab = torch::tensor(sched.alpha_bar, torch::kDouble).index_select(0, t.to(torch::kLong)).to(z0.dtype());
    std::vector<int64_t> shape(static_cast<std::size_t>(z0.dim()), 1);
    shape[0] = z0.size(0);
    ab = ab.view(shape);
    return z0 * ab.sqrt() + eps * (1.0 - ab).sqrt();
}

DdimStep ddim_step(const torch::Tensor& z_t, const torch::Tensor& eps_t, int t, const NoiseSchedule& sched) {
    require(t >= 1 && t <= sched.T, "ddim_step: t must lie in [1, T]");
    require(z_t.sizes() == eps_t.sizes(), "ddim_step: eps shape differs from z_t");
    const double ab = sched.alpha_bar[t];
    const double ab_prev = sched.alpha_bar[t - 1];
    DdimStep out;
    out.z_hat = (z_t - eps_t * std::sqrt(1.0 - ab)) / std::sqrt(ab);
    out.z_prev = out.z_hat * std::sqrt(ab_prev) + eps_t * std::sqrt(1.0 - ab_prev);
    return out;
}

torch::Tensor sample_loop(const NoisePredictor& denoiser, const torch::Tensor& z_T, const NoiseSchedule& sched) {
    require(torch::isfinite(z_T).all().item<bool>(), "sample_loop: z_T must be finite");
    torch::NoGradGuard no_grad;
    torch::Tensor z = z_T;
    for (int t = sched.T; t >= 1; --t) {
        const torch::Tensor eps = denoiser(z, t);
        if (eps.sizes() != z.sizes() || !torch::isfinite(eps).all().item<bool>())
            throw SamplingError("denoiser returned a non-finite or misshapen prediction", t);
        z = ddim_step(z, eps, t, sched).z_prev;
    }
    return z;
}

torch::Tensor denoise_loss_tensor(const torch::Tensor& eps_true, const torch::Tensor& eps_pred) {
    require(eps_true.sizes() == eps_pred.sizes(), "denoise_loss: shape mismatch");
    return (eps_true - eps_pred).pow(2).mean();
}

double denoise_loss(const torch::Tensor& eps_true, const torch::Tensor& eps_pred) {
    return denoise_loss_tensor(eps_true.to(torch::kDouble), eps_pred.to(torch::kDouble)).item<double>();
}

}  // namespace deocc
