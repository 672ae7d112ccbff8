#pragma once

#include <torch/torch.h>

#include <vector>

#include "deocc/image.hpp"

namespace deocc {

// HWC image -> [C, H, W] float tensor, and back.
torch::Tensor to_tensor(const Image& img);
torch::Tensor to_tensor(const Mask& m);      // [1, H, W] in {0, 1}
torch::Tensor to_tensor(const FloatMap& m);  // [1, H, W]
Image to_image(const torch::Tensor& chw);
FloatMap to_float_map(const torch::Tensor& hw_or_1hw);

torch::Tensor stack_images(const std::vector<Image>& imgs);
torch::Tensor stack_masks(const std::vector<Mask>& masks);

}  // namespace deocc
