#include "deocc/tensor_io.hpp"

#include "deocc/errors.hpp"

namespace deocc {

torch::Tensor to_tensor(const Image& img) {
    auto t = torch::from_blob(const_cast<float*>(img.data.data()), {img.height, img.width, img.channels}, torch::kFloat);
    return t.permute({2, 0, 1}).contiguous();
}

torch::Tensor to_tensor(const Mask& m) {
    auto t = torch::from_blob(const_cast<std::uint8_t*>(m.data.data()), {1, m.height, m.width}, torch::kUInt8);
    return t.to(torch::kFloat);
}

torch::Tensor to_tensor(const FloatMap& m) {
    auto t = torch::from_blob(const_cast<double*>(m.values.data()), {1, m.height, m.width}, torch::kDouble);
    return t.to(torch::kFloat);
}

Image to_image(const torch::Tensor& chw) {
    require(chw.dim() == 3, "to_image: expected [C, H, W]");
    auto t = chw.detach().to(torch::kFloat).permute({1, 2, 0}).contiguous();
    Image img(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), static_cast<int>(t.size(2)));
    std::memcpy(img.data.data(), t.data_ptr<float>(), img.data.size() * sizeof(float));
    return img;
}

FloatMap to_float_map(const torch::Tensor& m) {
    auto t = m.detach().to(torch::kDouble).contiguous();
    if (t.dim() == 3) {
        require(t.size(0) == 1, "to_float_map: expected a single channel");
        t = t[0];
    }
    require(t.dim() == 2, "to_float_map: expected [H, W] or [1, H, W]");
    FloatMap out(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)));
    std::memcpy(out.values.data(), t.data_ptr<double>(), out.values.size() * sizeof(double));
    return out;
}

torch::Tensor stack_images(const std::vector<Image>& imgs) {
    std::vector<torch::Tensor> ts;
    ts.reserve(imgs.size());
    for (const auto& i : imgs) ts.push_back(to_tensor(i));
    return torch::stack(ts);
}

torch::Tensor stack_masks(const std::vector<Mask>& masks) {
    std::vector<torch::Tensor> ts;
    ts.reserve(masks.size());
    for (const auto& m : masks) ts.push_back(to_tensor(m));
    return torch::stack(ts);
}

}  // namespace deocc
