#pragma once

#include <torch/torch.h>

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "deocc/codec.hpp"
#include "deocc/diffusion.hpp"
#include "deocc/inpaint_loss.hpp"
#include "deocc/nn_blocks.hpp"
#include "deocc/scenegen.hpp"

namespace deocc {

inline constexpr int kRgbNetVersion = 1;
inline constexpr int kMaxAttributes = kBodyPartCount;

// Closed vocabulary: every (part, palette colour) pair.
int attribute_vocab_size();
int attribute_token_id(const Attribute& a);  // ContractError on unknown tokens

struct RgbNetOptions {
    int64_t image_resolution = 64;
    int64_t latent_resolution = 8;
    int64_t latent_channels = 4;
    int64_t attr_dim = 64;
    std::array<int64_t, 3> channels{64, 96, 128};
    int64_t emb_dim = 128;
    int64_t attn_dim = 32;
    int64_t prior_channels = 16;
};

struct RgbNetImpl : torch::nn::Module {
    explicit RgbNetImpl(const RgbNetOptions& o);

    // ids [B, A] long, mask [B, A] float; summed embedding [B, attr_dim].
    torch::Tensor attribute_embedding(const torch::Tensor& ids, const torch::Tensor& mask);
    // f_c2: residuals at the denoiser decoder scales.
    std::vector<torch::Tensor> control_feature(const torch::Tensor& m_a, const torch::Tensor& z0_prime,
                                               const torch::Tensor& f_hs);
    torch::Tensor predict_noise(const torch::Tensor& z0_prime, const torch::Tensor& z_t, const torch::Tensor& t,
                                const torch::Tensor& f_hs, const std::vector<torch::Tensor>& f_c2);
    // Decoder features and attention at t = 0 (feedforward baseline).
    nn::LatentUNetOutput prior(const torch::Tensor& z0_prime, const torch::Tensor& z_t, const torch::Tensor& f,
                               const std::vector<torch::Tensor>& f_c2);

    RgbNetOptions opts;
    torch::nn::Embedding attr{nullptr};
    torch::nn::Linear hs_to_emb{nullptr};
    nn::ControlBranch control{nullptr};
    nn::LatentUNet denoiser{nullptr};
};
TORCH_MODULE(RgbNet);

RgbNet make_rgb_net(const RgbNetOptions& o, std::uint64_t seed);

struct AttributeBatch {
    torch::Tensor ids;   // [A] long
    torch::Tensor mask;  // [A] float
};
AttributeBatch encode_attributes(const Attributes& attrs);

// Per-record stage-two inputs (no batch dim).
struct RgbSample {
    torch::Tensor z0_prime;  // [2C, l, l] = E(I_o) ++ E(M_m)
    torch::Tensor hint;      // [1, H, W] amodal mask (GT while training, predicted at inference)
    torch::Tensor attr_ids, attr_mask;
    torch::Tensor z_gt;      // E(I_gt), training only
};

RgbSample build_rgb_sample(const Image& i_o, const Mask& m_m, const torch::Tensor& hint, const Attributes& attrs,
                           const CodecParams& codec, const Image* i_gt = nullptr);

struct RgbTrainConfig {
    int epochs = 30;
    int batch_size = 32;
    double lr = 1e-3;
    std::uint64_t seed = 0;
};

// Noise-prediction MSE objective, one mean loss per epoch.
std::vector<double> train_rgb_net(RgbNet& net, const std::vector<RgbSample>& data, const NoiseSchedule& sched,
                                  const RgbTrainConfig& cfg);

struct RgbResult {
    torch::Tensor i_do;       // [1, 3, H, W]
    torch::Tensor i_do_star;  // [1, 3, H, W]
    std::vector<double> finetune_objective;
};

// Full stage two for one record: z_T from the record seed, DDIM, decode, decoder fine-tuning.
RgbResult complete_rgb(RgbNet& net, const CodecParams& codec, const NoiseSchedule& sched, const RgbSample& sample,
                       const torch::Tensor& i_o, const torch::Tensor& m_m, const FinetuneConfig& ft,
                       std::uint64_t z_seed);
// Sampling only; returns z_do.
torch::Tensor sample_latent(RgbNet& net, const NoiseSchedule& sched, const RgbSample& sample, std::uint64_t z_seed);

// clamp(M_a - M_m, 0, 1)
torch::Tensor occluded_region(const torch::Tensor& m_a, const torch::Tensor& m_m);

// Feedforward two-stage baseline: U_rgb(I_o ++ M_m ++ M_i, F', T') with priors
// from the (frozen) RGB denoiser at t = 0 and an image-derived condition f_lw.
struct FeedforwardNetImpl : torch::nn::Module {
    FeedforwardNetImpl(const RgbNetOptions& rgb, std::vector<int64_t> unet_channels);
    torch::Tensor forward(RgbNet& prior_net, const torch::Tensor& i_o, const torch::Tensor& m_m,
                          const torch::Tensor& m_a, const torch::Tensor& z0_prime);
    torch::nn::Linear lw{nullptr};
    nn::ImageUNet unet{nullptr};
};
TORCH_MODULE(FeedforwardNet);

struct FeedforwardSample {
    torch::Tensor i_o, m_m, m_a, z0_prime, target;
};

std::vector<double> train_feedforward(FeedforwardNet& net, RgbNet& prior_net,
                                      const std::vector<FeedforwardSample>& data, int iterations, int batch_size,
                                      double lr, std::uint64_t seed);

void save_rgb_net(const std::string& path, RgbNet& net, const nlohmann::json& extra);
RgbNet load_rgb_net(const std::string& path, nlohmann::json* meta = nullptr);
nlohmann::json to_json(const RgbNetOptions& o);
RgbNetOptions rgb_options_from_json(const nlohmann::json& j);

}  // namespace deocc
