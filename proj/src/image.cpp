#include "deocc/image.hpp"

#include <algorithm>
#include <cmath>

namespace deocc {

namespace {

template <typename Op>
Mask combine(const Mask& a, const Mask& b, Op op) {
    require(a.same_shape(b), "mask shape mismatch");
    Mask out(a.height, a.width);
    for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = op(a.data[i], b.data[i]) ? 1 : 0;
    return out;
}

}  // namespace

Mask mask_and(const Mask& a, const Mask& b) {
    return combine(a, b, [](auto x, auto y) { return x && y; });
}

Mask mask_and_not(const Mask& a, const Mask& b) {
    return combine(a, b, [](auto x, auto y) { return x && !y; });
}

Mask mask_or(const Mask& a, const Mask& b) {
    return combine(a, b, [](auto x, auto y) { return x || y; });
}

Mask mask_not(const Mask& a) {
    Mask out(a.height, a.width);
    for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] ? 0 : 1;
    return out;
}

Mask binarize(const FloatMap& probs, double threshold) {
    Mask out(probs.height, probs.width);
    for (std::size_t i = 0; i < probs.values.size(); ++i) out.data[i] = probs.values[i] >= threshold ? 1 : 0;
    return out;
}

FloatMap to_float_map(const Mask& m) {
    FloatMap out(m.height, m.width);
    for (std::size_t i = 0; i < m.data.size(); ++i) out.values[i] = m.data[i];
    return out;
}

float quantize_u8(float v) {
    return static_cast<float>(std::lround(std::clamp(v, 0.f, 1.f) * 255.f)) / 255.f;
}

void quantize_u8(Image& img) {
    for (auto& v : img.data) v = quantize_u8(v);
}

Image flip_horizontal(const Image& img) {
    Image out(img.height, img.width, img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) out.at(y, img.width - 1 - x, c) = img.at(y, x, c);
    return out;
}

Mask flip_horizontal(const Mask& m) {
    Mask out(m.height, m.width);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) out.at(y, m.width - 1 - x) = m.at(y, x);
    return out;
}

}  // namespace deocc
