#pragma once

#include <torch/torch.h>

#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "deocc/codec.hpp"
#include "deocc/heatmaps.hpp"
#include "deocc/nn_blocks.hpp"

namespace deocc {

inline constexpr int kMaskNetVersion = 1;

struct PriorFeatures {
    std::vector<torch::Tensor> features;   // 4 maps, coarse to fine
    std::vector<torch::Tensor> attention;  // 2 maps [B, N+1, r, r]; every (pixel, .) row sums to 1
};

// How inputs to stage one are derived from a record.
struct MaskFeatureConfig {
    double sigma_joint = 2.5;     // H_2D
    double sigma_occluded = 8.0;  // H_o; <= 0 omits the heatmap
    int subdivision = 9;
    OcclusionInputKind input_kind = OcclusionInputKind::occluded_joint_heatmap;
    int h2d_resolution = 32;
};

struct MaskNetOptions {
    bool use_prior = true;
    int64_t image_resolution = 64;
    int64_t latent_resolution = 8;
    int64_t latent_channels = 4;
    int64_t joint_count = 25;
    int64_t joint_dim = 32;
    int64_t h2d_resolution = 32;
    std::array<int64_t, 3> backbone_channels{32, 48, 64};
    int64_t emb_dim = 64;
    int64_t attn_dim = 32;
    int64_t prior_channels = 16;
    std::vector<int64_t> unet_channels{8, 16, 32, 48, 64, 64};
    int64_t mask_classes = 1;  // 2 for the cross-entropy ablation
    // Joint mask + RGB baseline: input M_m, H_o, I_o and an extra RGB head.
    bool one_stage = false;
};

// phi_sh: shared per-joint MLP over normalised coordinates plus a joint-id
// embedding. Invalid joints give zero rows.
struct JointEmbedderImpl : torch::nn::Module {
    JointEmbedderImpl(int64_t joint_count, int64_t dim);
    torch::Tensor forward(const torch::Tensor& coords, const torch::Tensor& valid);
    torch::nn::Linear in{nullptr}, out{nullptr};
    torch::nn::Embedding id{nullptr};
};
TORCH_MODULE(JointEmbedder);

// One batch of stage-one inputs. Coordinates are normalised to [0, 1].
struct MaskInputs {
    torch::Tensor m_m;     // [B, 1, H, W]
    torch::Tensor h_o;     // [B, 1, H, W]
    torch::Tensor h2d;     // [B, K, h, h]
    torch::Tensor z0;      // [B, C, l, l]
    torch::Tensor joints;  // [B, K, 2]
    torch::Tensor valid;   // [B, K] float {0, 1}
    torch::Tensor i_o;     // [B, 3, H, W], one-stage only
};

struct MaskNetImpl : torch::nn::Module {
    explicit MaskNetImpl(const MaskNetOptions& o);

    torch::Tensor joint_feature(const torch::Tensor& joints, const torch::Tensor& valid);
    PriorFeatures extract_prior(const torch::Tensor& z0, const torch::Tensor& h2d, const torch::Tensor& f_j,
                                const torch::Tensor& valid);
    torch::Tensor logits(const MaskInputs& in);
    nn::ImageUNetOutput outputs(const MaskInputs& in);
    // Person probability in (0, 1), [B, 1, H, W].
    torch::Tensor forward(const MaskInputs& in);

    MaskNetOptions opts;
    JointEmbedder phi{nullptr};
    nn::ControlBranch control{nullptr};
    nn::LatentUNet backbone{nullptr};
    nn::ImageUNet unet{nullptr};
};
TORCH_MODULE(MaskNet);

nn::PriorSpec mask_prior_spec(const MaskNetOptions& o);
torch::Tensor logits_to_prob(const torch::Tensor& logits);

// Mask U-Net forward with explicitly supplied priors.
torch::Tensor complete_mask(MaskNet& net, const torch::Tensor& m_m, const torch::Tensor& h_o,
                            const PriorFeatures& prior);

// -(1/N) sum [p* log p + (1 - p*) log(1 - p)], p clamped to [1e-7, 1 - 1e-7].
torch::Tensor bce_loss_tensor(const torch::Tensor& pred, const torch::Tensor& gt);
double bce_loss(const torch::Tensor& pred, const torch::Tensor& gt);

// Precomputed per-record stage-one inputs (single items, no batch dim).
struct MaskSample {
    torch::Tensor m_m, h_o, h2d, z0, joints, valid;
    torch::Tensor i_o;
    torch::Tensor target;        // amodal GT, undefined at inference
    torch::Tensor image_target;  // I_gt, one-stage training only
};

MaskSample build_mask_sample(const Image& i_o, const Mask& m_m, const JointSet& j2d, const MaskFeatureConfig& fc,
                             const CodecParams& codec);
MaskInputs collate(const std::vector<const MaskSample*>& items, torch::Tensor* target_out = nullptr,
                   torch::Tensor* image_target_out = nullptr);

struct MaskTrainConfig {
    int iterations = 2000;
    int batch_size = 16;
    double lr = 1e-3;
    double momentum = 0.9;
    std::string optimizer = "sgd";  // sgd | adam
    std::string loss = "bce";       // bce | ce
    double lambda_bce = 10.0;       // one-stage: weight of the mask term next to the inpainting loss
    std::uint64_t seed = 0;
    int log_every = 25;
};

struct TrainCurvePoint {
    int iteration;
    double loss;
};

struct MaskTrainState {
    int iteration = 0;
    std::vector<TrainCurvePoint> curve;
};

MaskNetOptions mask_options_for(const MaskNetOptions& base, const MaskTrainConfig& cfg);
MaskNet make_mask_net(const MaskNetOptions& o, std::uint64_t seed);

// Runs iterations [state.iteration, until) and updates state. Batches depend only
// on (seed, iteration), so a resumed run sees the same stream.
void train_mask_net(MaskNet& net, torch::optim::Optimizer& opt, const std::vector<MaskSample>& data,
                    const MaskTrainConfig& cfg, MaskTrainState& state, int until);
std::unique_ptr<torch::optim::Optimizer> make_mask_optimizer(MaskNet& net, const MaskTrainConfig& cfg);

// Probabilities [N, 1, H, W] in sample order, no gradients. For a one-stage
// network the RGB predictions are written to rgb_out when given.
torch::Tensor predict_masks(MaskNet& net, const std::vector<MaskSample>& data, int batch_size = 32,
                            torch::Tensor* rgb_out = nullptr);

void save_mask_net(const std::string& path, MaskNet& net, torch::optim::Optimizer* opt, const MaskTrainState& state,
                   const MaskFeatureConfig& fc, const MaskTrainConfig& tc, const std::string& config_hash);
struct LoadedMaskNet {
    MaskNet net{nullptr};
    MaskFeatureConfig features;
    MaskTrainState state;
    nlohmann::json meta;
};
LoadedMaskNet load_mask_net(const std::string& path);

nlohmann::json to_json(const MaskNetOptions& o);
MaskNetOptions mask_options_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MaskFeatureConfig& c);
MaskFeatureConfig mask_features_from_json(const nlohmann::json& j);

}  // namespace deocc
