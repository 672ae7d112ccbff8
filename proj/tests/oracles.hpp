#pragma once
// Independent brute-force reference implementations used by the tests and the
// acceptance runner. They deliberately avoid the library's helpers.

#include <cmath>
#include <optional>
#include <set>
#include <utility>

#include "deocc/image.hpp"
#include "deocc/skeleton.hpp"

namespace oracle {

using Pixel = std::pair<int, int>;

inline std::set<Pixel> pixels_of(const deocc::Mask& m) {
    std::set<Pixel> s;
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x)
            if (m.data[y * m.width + x] != 0) s.insert({y, x});
    return s;
}

inline double set_iou(const std::set<Pixel>& a, const std::set<Pixel>& b) {
    std::size_t inter = 0;
    for (const auto& p : a) inter += b.count(p);
    const std::size_t uni = a.size() + b.size() - inter;
    return uni == 0 ? 1.0 : double(inter) / double(uni);
}

inline double iou(const deocc::Mask& p, const deocc::Mask& g) { return set_iou(pixels_of(p), pixels_of(g)); }

inline std::optional<double> iou_inv(const deocc::Mask& p, const deocc::Mask& g, const deocc::Mask& modal) {
    const auto vis = pixels_of(modal);
    std::set<Pixel> ps, gs;
    for (const auto& q : pixels_of(p))
        if (!vis.count(q)) ps.insert(q);
    for (const auto& q : pixels_of(g))
        if (!vis.count(q)) gs.insert(q);
    if (gs.empty()) return std::nullopt;
    return set_iou(ps, gs);
}

struct Px {
    double l1, mse;
};

// region: 0 whole, 1 visible, 2 invisible
inline std::optional<Px> region_errors(const deocc::Image& a, const deocc::Image& b, int region,
                                       const deocc::Mask& modal, const deocc::Mask& amodal) {
    long double s1 = 0, s2 = 0;
    long n = 0;
    const auto vis = pixels_of(modal), am = pixels_of(amodal);
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x) {
            const Pixel p{y, x};
            const bool in = region == 0 ? true : region == 1 ? vis.count(p) > 0 : (am.count(p) && !vis.count(p));
            if (!in) continue;
            for (int c = 0; c < a.channels; ++c) {
                const long double d = (long double)a.at(y, x, c) - (long double)b.at(y, x, c);
                s1 += std::fabs(d);
                s2 += d * d;
                ++n;
            }
        }
    if (n == 0) return std::nullopt;
    return Px{double(s1 / n), double(s2 / n)};
}

inline double gaussian(double px, double py, double cx, double cy, double sigma) {
    return std::exp(-((px - cx) * (px - cx) + (py - cy) * (py - cy)) / (2 * sigma * sigma));
}

}  // namespace oracle
