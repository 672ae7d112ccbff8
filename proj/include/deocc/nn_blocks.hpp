#pragma once

#include <torch/torch.h>

#include <array>
#include <vector>

namespace deocc::nn {

// Sinusoidal embedding of integer timesteps, [B] -> [B, dim].
torch::Tensor timestep_embedding(const torch::Tensor& t, int64_t dim);

// Zeroes weight and bias; used for injection adapters and output heads.
void zero_init(torch::nn::Conv2d conv);

struct ResBlockImpl : torch::nn::Module {
    ResBlockImpl(int64_t in_ch, int64_t out_ch, int64_t emb_dim);
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& emb);

    torch::nn::GroupNorm norm1{nullptr}, norm2{nullptr};
    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, skip{nullptr};
    torch::nn::Linear emb_proj{nullptr};
};
TORCH_MODULE(ResBlock);

struct AttentionResult {
    torch::Tensor out;   // [B, C, H, W]
    torch::Tensor maps;  // [B, H*W, N+1]; column 0 is the learned null token
};

// Cross-attention from image positions to context tokens. A learned null token
// is always present so every row is a proper distribution.
struct CrossAttentionImpl : torch::nn::Module {
    CrossAttentionImpl(int64_t channels, int64_t ctx_dim, int64_t attn_dim);
    AttentionResult forward(const torch::Tensor& x, const torch::Tensor& ctx, const torch::Tensor& ctx_valid);

    int64_t attn_dim;
    torch::nn::GroupNorm norm{nullptr};
    torch::nn::Linear to_q{nullptr}, to_k{nullptr}, to_v{nullptr};
    torch::nn::Conv2d to_out{nullptr};
    torch::Tensor null_k, null_v;
};
TORCH_MODULE(CrossAttention);

struct LatentUNetOptions {
    int64_t in_channels = 4;
    int64_t out_channels = 4;  // 0: feature extractor only
    std::array<int64_t, 3> channels{64, 96, 128};
    int64_t emb_dim = 128;
    int64_t ctx_dim = 64;
    int64_t attn_dim = 32;
    int64_t prior_channels = 32;  // channels of the finest (2x latent) feature map
};

struct LatentUNetOutput {
    torch::Tensor eps;                       // undefined when out_channels == 0
    std::vector<torch::Tensor> features;     // 4 maps at L/4, L/2, L, 2L (only when requested)
    std::vector<torch::Tensor> attention;    // 2 maps at L/2, L as [B, N+1, r, r]
};

// Denoising U-Net over latents (bottleneck at L/4). Control residuals, when given,
// are added to the decoder outputs at L/4, L/2, L in that order.
struct LatentUNetImpl : torch::nn::Module {
    explicit LatentUNetImpl(const LatentUNetOptions& o);
    LatentUNetOutput forward(const torch::Tensor& x, const torch::Tensor& t, const torch::Tensor& ctx,
                             const torch::Tensor& ctx_valid, const torch::Tensor& extra_emb,
                             const std::vector<torch::Tensor>& control, bool want_prior);

    LatentUNetOptions opts;
    torch::nn::Sequential time_mlp{nullptr};
    torch::nn::Conv2d in_conv{nullptr}, down0{nullptr}, down1{nullptr}, up1{nullptr}, up0{nullptr}, out_conv{nullptr},
        prior_conv{nullptr};
    torch::nn::GroupNorm out_norm{nullptr};
    ResBlock enc0{nullptr}, enc1{nullptr}, enc2{nullptr}, mid{nullptr}, dec2{nullptr}, dec1{nullptr}, dec0{nullptr};
    CrossAttention attn1{nullptr}, attn0{nullptr};
};
TORCH_MODULE(LatentUNet);

struct ControlBranchOptions {
    int64_t hint_channels = 1;
    int64_t hint_resolution = 64;
    int64_t latent_resolution = 8;
    int64_t latent_channels = 4;
    int64_t cond_dim = 64;
    std::array<int64_t, 3> channels{64, 96, 128};
    int64_t emb_dim = 128;
};

// Control branch: hint + latent + pooled condition -> zero-initialised residuals
// for the denoiser decoder at L/4, L/2, L.
struct ControlBranchImpl : torch::nn::Module {
    explicit ControlBranchImpl(const ControlBranchOptions& o);
    std::vector<torch::Tensor> forward(const torch::Tensor& hint, const torch::Tensor& z, const torch::Tensor& cond);
    std::vector<int64_t> output_scales() const;

    ControlBranchOptions opts;
    torch::nn::Sequential hint_net{nullptr};
    torch::nn::Conv2d z_in{nullptr}, down0{nullptr}, down1{nullptr}, zero0{nullptr}, zero1{nullptr}, zero2{nullptr};
    torch::nn::Linear cond_proj{nullptr};
    ResBlock enc0{nullptr}, enc1{nullptr}, enc2{nullptr};
};
TORCH_MODULE(ControlBranch);

struct PriorSpec {
    // Channels and resolutions of the 4 feature maps, tokens (incl. null) of the 2 attention maps.
    std::array<int64_t, 4> feature_channels{};
    std::array<int64_t, 4> feature_resolutions{};
    std::array<int64_t, 2> attention_tokens{};
    std::array<int64_t, 2> attention_resolutions{};
};

struct ImageUNetOptions {
    int64_t in_channels = 2;
    int64_t resolution = 64;
    bool mask_head = true;
    bool rgb_head = false;
    std::vector<int64_t> channels{8, 16, 32, 48, 64, 64};  // one per level, level i at resolution / 2^i
    bool use_prior = false;
    PriorSpec prior;
    // Input channel holding the modal mask; its signed copy is added to the mask
    // logits through a learned gain. -1 disables.
    int64_t modal_skip_channel = -1;
    // 1: single sigmoid logit; 2: two-class softmax logits (class 1 = person)
    int64_t mask_classes = 1;
};

struct ConvGNImpl : torch::nn::Module {
    ConvGNImpl(int64_t in_ch, int64_t out_ch, int64_t stride);
    torch::Tensor forward(const torch::Tensor& x);
    torch::nn::Conv2d conv{nullptr};
    torch::nn::GroupNorm norm{nullptr};
};
TORCH_MODULE(ConvGN);

struct ImageUNetOutput {
    torch::Tensor mask_logits;  // [B, mask_classes, H, W]
    torch::Tensor rgb;          // [B, 3, H, W] in (0, 1)
};

// Image-space U-Net (the mask completion network and its one-stage / feedforward
// relatives). Prior feature maps enter through 1x1 adapters added at matching
// decoder scales; attention maps gate decoder features multiplicatively as
// x * (1 + adapter(T)). All adapters start at zero.
struct ImageUNetImpl : torch::nn::Module {
    explicit ImageUNetImpl(const ImageUNetOptions& o);
    ImageUNetOutput forward(const torch::Tensor& x, const std::vector<torch::Tensor>& features,
                            const std::vector<torch::Tensor>& attention);
    void zero_prior_adapters();

    ImageUNetOptions opts;
    std::vector<ConvGN> enc_down, enc_conv, dec_conv1, dec_conv2;
    std::vector<torch::nn::Conv2d> feature_adapters, attention_gates;
    std::vector<int> feature_level, attention_level;
    ConvGN in_conv{nullptr};
    torch::nn::Conv2d mask_out{nullptr}, rgb_out{nullptr};
    torch::Tensor modal_gain;
};
TORCH_MODULE(ImageUNet);

}  // namespace deocc::nn
