#pragma once

#include <string>
#include <vector>

#include "deocc/image.hpp"
#include "deocc/skeleton.hpp"

namespace deocc {

struct Heatmap {
    FloatMap map;
    double sigma = 0.0;

    int height() const { return map.height; }
    int width() const { return map.width; }
    double at(int y, int x) const { return map.at(y, x); }
};

// J_2D (25) -> J_body (19); order of the retained joints is preserved.
JointSet exclude_foot_joints(const JointSet& j2d, const SkeletonTopology& topo = SkeletonTopology::standard());

// s evenly spaced points strictly inside every pair whose endpoints are both valid.
JointSet subdivide_joints(const JointSet& j_body, int s_per_pair,
                          const SkeletonTopology& topo = SkeletonTopology::standard());

// J_body followed by its subdivision.
JointSet densify_joints(const JointSet& j2d, int s_per_pair, const SkeletonTopology& topo = SkeletonTopology::standard());

// Nearest pixel with border clamping.
struct PixelIndex {
    int x, y;
};
PixelIndex joint_pixel(const Joint& j, int height, int width);

// Valid joints whose nearest modal-mask pixel is 0.
JointSet select_occluded_joints(const JointSet& j_dense, const Mask& mask_modal);

// Max over joints of exp(-|p - c|^2 / (2 sigma^2)), c being the joint's nearest pixel.
// Invalid joints are ignored; no joints gives an all-zero map.
Heatmap render_heatmap(const JointSet& points, double sigma, int height, int width);

// One Gaussian map per joint (K x H x W, row-major), zeros for invalid joints.
// Joint coordinates are given in the `source_size` frame and rescaled to H x W.
std::vector<float> render_heatmap_stack(const JointSet& joints, double sigma, int height, int width,
                                        int source_height, int source_width);

enum class OcclusionInputKind { occluded_joint_mask, whole_joint_heatmap, occluded_joint_heatmap };

OcclusionInputKind parse_occlusion_input_kind(const std::string& name);
std::string to_string(OcclusionInputKind kind);

Heatmap build_occlusion_input_variant(OcclusionInputKind kind, const JointSet& j_dense, const Mask& mask_modal,
                                      double sigma);

// H_o with the full defaults chain: foot exclusion, subdivision, selection, rendering.
// sigma <= 0 yields an all-zero map (heatmap omitted).
Heatmap occluded_joint_heatmap(const JointSet& j2d, const Mask& mask_modal, int s_per_pair, double sigma,
                               OcclusionInputKind kind = OcclusionInputKind::occluded_joint_heatmap);

}  // namespace deocc
