#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "deocc/image.hpp"
#include "deocc/rng.hpp"
#include "deocc/skeleton.hpp"

namespace deocc {

inline constexpr int kGeneratorVersion = 1;

struct Rgb {
    float r = 0.f, g = 0.f, b = 0.f;
    bool operator==(const Rgb&) const = default;
};

enum class BodyPart : int { head = 0, torso, right_arm, left_arm, right_leg, left_leg };
inline constexpr int kBodyPartCount = 6;

std::string_view part_name(BodyPart p);
// Closed colour vocabulary for figure parts. Every entry is a multiple of 1/255.
const std::vector<std::pair<std::string, Rgb>>& figure_palette();

// One (part, value) label; the ordered tuple of these stands in for the
// appearance description of the person.
struct Attribute {
    std::string part;
    std::string value;
    std::string token() const { return part + ":" + value; }
    bool operator==(const Attribute&) const = default;
};
using Attributes = std::vector<Attribute>;

// Per-bone angles in radians, measured from straight down and positive away from the body midline.
struct PoseParams {
    double torso_lean = 0.0;
    double head_tilt = 0.0;
    double r_upper_arm = 0.3, r_forearm = 0.0;
    double l_upper_arm = 0.3, l_forearm = 0.0;
    double r_thigh = 0.1, r_shin = 0.0;
    double l_thigh = 0.1, l_shin = 0.0;
    bool operator==(const PoseParams&) const = default;
};

struct AngleRange {
    double lo, hi;
};

struct FigureConfig {
    int canvas_size = 64;
    double body_scale_lo = 0.74;
    double body_scale_hi = 0.88;
    AngleRange torso_lean{-0.18, 0.18};
    AngleRange head_tilt{-0.3, 0.3};
    AngleRange upper_arm{0.15, 2.4};
    AngleRange forearm{-1.2, 1.2};
    AngleRange thigh{-0.15, 0.55};
    AngleRange shin{-0.5, 0.3};
};

struct FigureSpec {
    std::uint64_t seed = 0;
    int canvas_size = 64;
    std::array<int, kBodyPartCount> color_ids{};  // indices into figure_palette()
    std::array<Rgb, kBodyPartCount> limb_colors{};
    PoseParams pose;
    double body_scale = 0.8;  // fraction of the canvas spanned by the figure's longer side
    double offset_x = 0.5;    // placement inside the free margin, in [0, 1]
    double offset_y = 0.5;
    float background_top = 0.2f;
    float background_bottom = 0.3f;
    bool operator==(const FigureSpec&) const = default;
};

FigureSpec sample_figure_spec(std::uint64_t seed, const FigureConfig& cfg);

struct Capsule {
    double ax, ay, bx, by;
    double radius;
    BodyPart part;
};

struct Figure {
    Image image;
    Image background;
    Mask mask;
    JointSet joints;
    Attributes attributes;
    std::vector<Capsule> capsules;
};

// Throws ConfigError when the canvas is below 32 px or the figure cannot fit.
Figure generate_figure(const FigureSpec& spec, const FigureConfig& cfg);

enum class OccluderKind : int { ellipse = 0, polygon, bar };

struct OccluderShape {
    OccluderKind kind = OccluderKind::ellipse;
    Rgb texture_color;
    Rgb stripe_color;
    double stripe_period = 0.0;  // 0 = flat fill
    double cx = 0.0, cy = 0.0;
    double angle = 0.0;
    double rx = 4.0, ry = 4.0;                       // ellipse radii / bar half-length, half-width
    std::vector<std::pair<double, double>> vertices;  // polygon, relative to the centre, convex CCW

    double area() const;
    Mask render(int height, int width) const;
    Rgb color_at(double x, double y) const;
};

// Occluder with roughly the requested area, centred at the origin.
OccluderShape sample_occluder(Rng& rng, double target_area);

struct OcclusionConfig {
    double ratio_mean = 0.35;
    double ratio_std = 0.15;
    double ratio_lo = 0.05;
    double ratio_hi = 0.75;
    double tolerance = 0.05;
    int max_iters = 40;
    int max_resamples = 10;
};

struct SceneRecord {
    std::uint64_t seed = 0;
    Image image_gt;
    Mask mask_amodal_gt;
    Image image_occluded;
    Mask mask_modal;
    Mask mask_occluder;
    JointSet joints;
    Attributes attributes;
    double occlusion_ratio = 0.0;
    double target_ratio = 0.0;
    bool operator==(const SceneRecord&) const = default;
};

double sample_occlusion_ratio(double mean, double std, double lo, double hi, Rng& rng);

// Drops `occluder` on the figure and repositions it until the achieved ratio is
// within tolerance of the target; resamples the occluder when that fails.
// Throws GenerationError after `cfg.max_resamples` unsuccessful occluders.
SceneRecord place_occluder(const Figure& figure, std::uint64_t seed, OccluderShape occluder, double target_ratio,
                           const OcclusionConfig& cfg, Rng& rng);

// Sets the derived fields (modal mask, occluded image, ratio) from figure + occluder mask.
void composite_record(SceneRecord& rec, const Mask& occluder_mask, const Image& occluder_pixels);

struct AugmentOps {
    bool jitter = false;
    bool shift = false;
    bool hflip = false;
    double jitter_magnitude = 0.1;
    int max_shift = 6;
};

SceneRecord augment_record(const SceneRecord& rec, const AugmentOps& ops, Rng& rng);
SceneRecord hflip_record(const SceneRecord& rec);
// Returns nullopt when the shift would push amodal pixels off the canvas.
std::optional<SceneRecord> shift_record(const SceneRecord& rec, int dx, int dy);
SceneRecord jitter_record(const SceneRecord& rec, const std::array<float, 3>& gain, const std::array<float, 3>& bias);

struct CorruptedMask {
    Mask mask;
    bool corrupted = false;
    double added_fraction = 0.0;
};

// With probability `probability`, grows the mask by random frontier expansion
// until the added area is a uniform draw in [expand_lo, expand_hi] of the original.
CorruptedMask corrupt_modal_mask(const Mask& modal, double probability, double expand_lo, double expand_hi, Rng& rng);

inline constexpr int kPoorDetectionMaxValid = 6;

JointSet simulate_pose_detection(const JointSet& joints, double noise_std, double poor_rate, Rng& rng,
                                 bool* poor_out = nullptr);

struct SceneConfig {
    FigureConfig figure;
    OcclusionConfig occlusion;
};

SceneRecord generate_scene(std::uint64_t seed, const SceneConfig& cfg);

// Checks every SceneRecord invariant; returns an empty string when all hold.
std::string check_record_invariants(const SceneRecord& rec);

double recompute_occlusion_ratio(const Mask& modal, const Mask& amodal);

}  // namespace deocc
