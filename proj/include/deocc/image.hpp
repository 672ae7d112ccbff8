#pragma once

#include <cstdint>
#include <vector>

#include "deocc/errors.hpp"

namespace deocc {

// Row-major H x W x C float image, values nominally in [0, 1].
struct Image {
    int height = 0;
    int width = 0;
    int channels = 3;
    std::vector<float> data;

    Image() = default;
    Image(int h, int w, int c, float fill = 0.f)
        : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {}

    float& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    float at(int y, int x, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
    bool same_shape(const Image& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
    bool operator==(const Image&) const = default;
};

// Binary H x W mask, one byte per pixel holding 0 or 1.
struct Mask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data;

    Mask() = default;
    Mask(int h, int w, std::uint8_t fill = 0) : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

    std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
    bool same_shape(const Mask& o) const { return height == o.height && width == o.width; }
    std::size_t count() const {
        std::size_t n = 0;
        for (auto v : data) n += v;
        return n;
    }
    bool operator==(const Mask&) const = default;
};

// Single-channel real-valued map (probabilities, heatmaps) stored in double.
struct FloatMap {
    int height = 0;
    int width = 0;
    std::vector<double> values;

    FloatMap() = default;
    FloatMap(int h, int w, double fill = 0.0) : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

    double& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
    double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

Mask mask_and(const Mask& a, const Mask& b);
Mask mask_and_not(const Mask& a, const Mask& b);
Mask mask_or(const Mask& a, const Mask& b);
Mask mask_not(const Mask& a);
Mask binarize(const FloatMap& probs, double threshold = 0.5);
FloatMap to_float_map(const Mask& m);

// Snaps every value to the nearest multiple of 1/255 so PNG round-trips are lossless.
void quantize_u8(Image& img);
float quantize_u8(float v);

Image flip_horizontal(const Image& img);
Mask flip_horizontal(const Mask& m);

}  // namespace deocc
