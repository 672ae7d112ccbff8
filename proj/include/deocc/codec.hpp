#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

#include "deocc/image.hpp"
#include "deocc/scenegen.hpp"

namespace deocc {

inline constexpr int kCodecVersion = 1;

struct CodecOptions {
    int64_t width = 32;  // channels at the first encoder level
    int64_t latent_channels = 4;
    int64_t downsample = 8;
};

struct CodecEncoderImpl : torch::nn::Module {
    explicit CodecEncoderImpl(const CodecOptions& o);
    torch::Tensor forward(const torch::Tensor& x);
    torch::nn::Sequential net{nullptr};
};
TORCH_MODULE(CodecEncoder);

struct CodecDecoderImpl : torch::nn::Module {
    explicit CodecDecoderImpl(const CodecOptions& o);
    torch::Tensor forward(const torch::Tensor& z);  // unclamped
    torch::nn::Sequential net{nullptr};
};
TORCH_MODULE(CodecDecoder);

struct CodecParams {
    CodecOptions opts;
    CodecEncoder encoder{nullptr};
    CodecDecoder decoder{nullptr};
    double latent_scale = 1.0;  // applied after encoding, undone before decoding
    int version = kCodecVersion;
};

CodecParams make_codec(const CodecOptions& opts, std::uint64_t seed);

// [B, c, H, W] in [0, 1] with c in {1, 3}; a single channel is replicated to three.
torch::Tensor encode(const torch::Tensor& x, const CodecParams& params);
torch::Tensor encode(const Image& img, const CodecParams& params);
torch::Tensor encode(const Mask& m, const CodecParams& params);
// [B, C, h, w] -> [B, 3, 8h, 8w] clamped to [0, 1].
torch::Tensor decode(const torch::Tensor& z, const CodecParams& params);
torch::Tensor decode_with(const CodecDecoder& decoder, const torch::Tensor& z, const CodecParams& params);

struct CodecTrainConfig {
    int epochs = 12;
    int batch_size = 16;
    double lr = 2e-3;
    std::uint64_t seed = 0;
};

struct CodecTrainResult {
    CodecParams params;
    std::vector<double> epoch_losses;
};

// Reconstruction L2 on ground-truth images, occluded images and modal masks.
CodecTrainResult train_codec(const std::vector<SceneRecord>& records, const CodecOptions& opts,
                             const CodecTrainConfig& cfg);

void save_codec(const std::string& path, const CodecParams& params, const std::string& config_hash);
CodecParams load_codec(const std::string& path);

struct FinetuneConfig {
    double lambda_vis = 100.0;
    int steps = 50;
    double lr = 1e-4;
};

struct FinetuneResult {
    CodecDecoder theta_star{nullptr};
    torch::Tensor i_do;       // initial decode, [1, 3, H, W]
    torch::Tensor i_do_star;  // decode with the fine-tuned weights
    std::vector<double> objective;  // value before each update, plus the final value (steps + 1 entries)
};

// Per-image decoder optimisation anchoring the visible region to i_o and the rest
// to the frozen initial decode. Works on a private copy of the decoder.
FinetuneResult finetune_decoder(const torch::Tensor& z_do, const torch::Tensor& i_o, const torch::Tensor& m_m,
                                const CodecParams& init, const FinetuneConfig& cfg);

}  // namespace deocc
