#pragma once

#include <torch/torch.h>

#include <vector>

namespace deocc {

struct InpaintWeights {
    double invis = 6.0;
    double vis = 1.0;
    double perceptual = 0.1;
    double style = 250.0;
    double tv = 0.1;
};

struct InpaintLoss {
    torch::Tensor total, invis, vis, perceptual, style, tv;
};

// Fixed-seed random convolution stack standing in for a pretrained feature
// network; weights never train and do not depend on the global RNG.
class RandomFeatures {
public:
    explicit RandomFeatures(std::uint64_t seed = 20240613);
    std::vector<torch::Tensor> operator()(const torch::Tensor& x) const;

private:
    std::vector<torch::Tensor> weights_, biases_;
};

const RandomFeatures& default_random_features();

torch::Tensor gram_matrix(const torch::Tensor& f);
// Mean absolute difference of neighbouring pixels, counted only where both
// pixels of a pair lie inside `foreground` ([B,1,H,W]; undefined = everywhere).
torch::Tensor total_variation(const torch::Tensor& img, const torch::Tensor& foreground = {});

// Region L1 terms are averaged over all elements (masked-out elements count as zero).
InpaintLoss inpainting_loss(const torch::Tensor& pred, const torch::Tensor& target, const torch::Tensor& m_m,
                            const InpaintWeights& w = {}, const torch::Tensor& foreground = {});

}  // namespace deocc
