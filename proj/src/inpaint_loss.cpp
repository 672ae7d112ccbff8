#include "deocc/inpaint_loss.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include "deocc/errors.hpp"

namespace deocc {

RandomFeatures::RandomFeatures(std::uint64_t seed) {
    auto gen = at::detail::createCPUGenerator(seed);
    const std::vector<std::pair<int64_t, int64_t>> layers{{3, 16}, {16, 32}, {32, 32}};
    for (const auto& [in, out] : layers) {
        const double scale = std::sqrt(2.0 / (in * 9.0));
        weights_.push_back(torch::randn({out, in, 3, 3}, gen, torch::TensorOptions().dtype(torch::kFloat)) * scale);
        biases_.push_back(torch::zeros({out}));
    }
}

std::vector<torch::Tensor> RandomFeatures::operator()(const torch::Tensor& x) const {
    std::vector<torch::Tensor> out;
    auto h = x;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        h = torch::relu(torch::conv2d(h, weights_[i].to(h.dtype()), biases_[i].to(h.dtype()), 2, 1));
        out.push_back(h);
    }
    return out;
}

const RandomFeatures& default_random_features() {
    static const RandomFeatures f;
    return f;
}

torch::Tensor gram_matrix(const torch::Tensor& f) {
    const int64_t B = f.size(0), C = f.size(1), N = f.size(2) * f.size(3);
    auto v = f.reshape({B, C, N});
    return torch::bmm(v, v.transpose(1, 2)) / static_cast<double>(C * N);
}

torch::Tensor total_variation(const torch::Tensor& img, const torch::Tensor& foreground) {
    auto dx = (img.narrow(3, 1, img.size(3) - 1) - img.narrow(3, 0, img.size(3) - 1)).abs();
    auto dy = (img.narrow(2, 1, img.size(2) - 1) - img.narrow(2, 0, img.size(2) - 1)).abs();
    if (foreground.defined()) {
        dx = dx * (foreground.narrow(3, 1, img.size(3) - 1) * foreground.narrow(3, 0, img.size(3) - 1));
        dy = dy * (foreground.narrow(2, 1, img.size(2) - 1) * foreground.narrow(2, 0, img.size(2) - 1));
    }
    return dx.mean() + dy.mean();
}

InpaintLoss inpainting_loss(const torch::Tensor& pred, const torch::Tensor& target, const torch::Tensor& m_m,
                            const InpaintWeights& w, const torch::Tensor& foreground) {
    require(pred.sizes() == target.sizes() && pred.dim() == 4, "inpainting_loss: pred and target shapes differ");
    require(m_m.dim() == 4 && m_m.size(1) == 1 && m_m.size(2) == pred.size(2), "inpainting_loss: bad mask shape");
    InpaintLoss L;
    const auto diff = (pred - target).abs();
    L.invis = (diff * (1.0 - m_m)).mean();
    L.vis = (diff * m_m).mean();
    const auto& feat = default_random_features();
    const auto fp = feat(pred), ft = feat(target);
    L.perceptual = torch::zeros({}, pred.options());
    L.style = torch::zeros({}, pred.options());
    for (std::size_t i = 0; i < fp.size(); ++i) {
        L.perceptual = L.perceptual + (fp[i] - ft[i]).abs().mean();
        L.style = L.style + (gram_matrix(fp[i]) - gram_matrix(ft[i])).abs().mean();
    }
    L.tv = total_variation(pred, foreground);
    L.total = w.invis * L.invis + w.vis * L.vis + w.perceptual * L.perceptual + w.style * L.style + w.tv * L.tv;
    return L;
}

}  // namespace deocc
