#include "deocc/heatmaps.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "deocc/errors.hpp"

namespace deocc {

JointSet exclude_foot_joints(const JointSet& j2d, const SkeletonTopology& topo) {
    require(j2d.size() == static_cast<std::size_t>(topo.joint_count),
            "exclude_foot_joints expects " + std::to_string(topo.joint_count) + " joints, got " +
                std::to_string(j2d.size()));
    JointSet out;
    for (int i = 0; i < topo.joint_count; ++i)
        if (!topo.is_foot(i)) out.joints.push_back(j2d.joints[i]);
    return out;
}

JointSet subdivide_joints(const JointSet& j_body, int s_per_pair, const SkeletonTopology& topo) {
    require(s_per_pair >= 0, "s_per_pair must be non-negative");
    JointSet out;
    for (const auto& [ia, ib] : topo.pairs) {
        require(ia < static_cast<int>(j_body.size()) && ib < static_cast<int>(j_body.size()),
                "pair index outside the body joint set");
        const Joint& a = j_body.joints[ia];
        const Joint& b = j_body.joints[ib];
        if (!a.valid || !b.valid) continue;
        for (int i = 1; i <= s_per_pair; ++i) {
            const double t = static_cast<double>(i) / (s_per_pair + 1);
            out.joints.push_back({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), true});
        }
    }
    return out;
}

JointSet densify_joints(const JointSet& j2d, int s_per_pair, const SkeletonTopology& topo) {
    JointSet dense = exclude_foot_joints(j2d, topo);
    const JointSet sub = subdivide_joints(dense, s_per_pair, topo);
    dense.joints.insert(dense.joints.end(), sub.joints.begin(), sub.joints.end());
    return dense;
}

PixelIndex joint_pixel(const Joint& j, int height, int width) {
    const auto clamp_round = [](double v, int n) {
        if (!std::isfinite(v)) return 0;
        return static_cast<int>(std::clamp(std::lround(v), 0L, static_cast<long>(n - 1)));
    };
    return {clamp_round(j.x, width), clamp_round(j.y, height)};
}

JointSet select_occluded_joints(const JointSet& j_dense, const Mask& mask_modal) {
    JointSet out;
    for (const auto& j : j_dense.joints) {
        if (!j.valid) continue;
        const auto p = joint_pixel(j, mask_modal.height, mask_modal.width);
        if (mask_modal.at(p.y, p.x) == 0) out.joints.push_back(j);
    }
    return out;
}

Heatmap render_heatmap(const JointSet& points, double sigma, int height, int width) {
    require(sigma > 0.0, "heatmap sigma must be positive");
    Heatmap hm{FloatMap(height, width, 0.0), sigma};
    const double inv = 1.0 / (2.0 * sigma * sigma);
    std::vector<double> gx(width), gy(height);
    for (const auto& j : points.joints) {
        if (!j.valid) continue;
        const auto c = joint_pixel(j, height, width);
        // exp(-(dx^2 + dy^2) k) factorises into a row and a column term.
        for (int x = 0; x < width; ++x) gx[x] = std::exp(-static_cast<double>((x - c.x) * (x - c.x)) * inv);
        for (int y = 0; y < height; ++y) gy[y] = std::exp(-static_cast<double>((y - c.y) * (y - c.y)) * inv);
        for (int y = 0; y < height; ++y) {
            double* row = &hm.map.values[static_cast<std::size_t>(y) * width];
            for (int x = 0; x < width; ++x) row[x] = std::max(row[x], gy[y] * gx[x]);
        }
    }
    return hm;
}

std::vector<float> render_heatmap_stack(const JointSet& joints, double sigma, int height, int width,
                                        int source_height, int source_width) {
    require(sigma > 0.0, "heatmap sigma must be positive");
    std::vector<float> out(joints.size() * static_cast<std::size_t>(height) * width, 0.f);
    const double sx = static_cast<double>(width) / source_width;
    const double sy = static_cast<double>(height) / source_height;
    for (std::size_t k = 0; k < joints.size(); ++k) {
        Joint j = joints.joints[k];
        if (!j.valid) continue;
        // Pixel centres: continuous coordinate (x + 0.5) scales with the grid.
        j.x = (j.x + 0.5) * sx - 0.5;
        j.y = (j.y + 0.5) * sy - 0.5;
        const Heatmap one = render_heatmap(JointSet{{j}}, sigma, height, width);
        std::transform(one.map.values.begin(), one.map.values.end(),
                       out.begin() + static_cast<std::ptrdiff_t>(k * height * width),
                       [](double v) { return static_cast<float>(v); });
    }
    return out;
}

OcclusionInputKind parse_occlusion_input_kind(const std::string& name) {
    if (name == "occluded_joint_mask") return OcclusionInputKind::occluded_joint_mask;
    if (name == "whole_joint_heatmap") return OcclusionInputKind::whole_joint_heatmap;
    if (name == "occluded_joint_heatmap") return OcclusionInputKind::occluded_joint_heatmap;
    throw ContractError("unknown occlusion input kind '" + name + "'");
}

std::string to_string(OcclusionInputKind kind) {
    switch (kind) {
        case OcclusionInputKind::occluded_joint_mask:
            return "occluded_joint_mask";
        case OcclusionInputKind::whole_joint_heatmap:
            return "whole_joint_heatmap";
        case OcclusionInputKind::occluded_joint_heatmap:
            return "occluded_joint_heatmap";
    }
    throw ContractError("unknown occlusion input kind");
}

Heatmap build_occlusion_input_variant(OcclusionInputKind kind, const JointSet& j_dense, const Mask& mask_modal,
                                      double sigma) {
    const int h = mask_modal.height, w = mask_modal.width;
    switch (kind) {
        case OcclusionInputKind::occluded_joint_heatmap:
            return render_heatmap(select_occluded_joints(j_dense, mask_modal), sigma, h, w);
        case OcclusionInputKind::whole_joint_heatmap:
            return render_heatmap(j_dense, sigma, h, w);
        case OcclusionInputKind::occluded_joint_mask: {
            require(sigma > 0.0, "disk radius must be positive");
            Heatmap hm{FloatMap(h, w, 0.0), sigma};
            const double r2 = sigma * sigma;
            for (const auto& j : select_occluded_joints(j_dense, mask_modal).joints) {
                const auto c = joint_pixel(j, h, w);
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x) {
                        const double d2 = static_cast<double>((x - c.x) * (x - c.x) + (y - c.y) * (y - c.y));
                        if (d2 <= r2 && mask_modal.at(y, x) == 0) hm.map.at(y, x) = 1.0;
                    }
            }
            return hm;
        }
    }
    throw ContractError("unknown occlusion input kind");
}

Heatmap occluded_joint_heatmap(const JointSet& j2d, const Mask& mask_modal, int s_per_pair, double sigma,
                               OcclusionInputKind kind) {
    if (sigma <= 0.0) return Heatmap{FloatMap(mask_modal.height, mask_modal.width, 0.0), 0.0};
    return build_occlusion_input_variant(kind, densify_joints(j2d, s_per_pair), mask_modal, sigma);
}

}  // namespace deocc
