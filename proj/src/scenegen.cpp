#include "deocc/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "deocc/errors.hpp"

namespace deocc {

namespace {

constexpr float u8(int v) { return static_cast<float>(v) / 255.f; }

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
double uniform(Rng& rng, AngleRange r) { return uniform(rng, r.lo, r.hi); }

struct Vec2 {
    double x, y;
    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
};

Vec2 rotate(Vec2 v, double a) { return {v.x * std::cos(a) - v.y * std::sin(a), v.x * std::sin(a) + v.y * std::cos(a)}; }

// Limb direction: `angle` from straight down, positive outward; side = -1 for the
// person's right (image left for a camera-facing figure), +1 for the left.
Vec2 limb_dir(double angle, double side) { return {side * std::sin(angle), std::cos(angle)}; }

double segment_dist2(double px, double py, const Capsule& c) {
    const double vx = c.bx - c.ax, vy = c.by - c.ay;
    const double wx = px - c.ax, wy = py - c.ay;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0 ? (wx * vx + wy * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = wx - t * vx, dy = wy - t * vy;
    return dx * dx + dy * dy;
}

// Figure geometry in body units (neck at origin, y down, total height ~1).
struct BodyGeometry {
    std::array<Vec2, body25::kJointCount> joints;
    std::vector<Capsule> capsules;
};

BodyGeometry build_body(const PoseParams& pose) {
    using namespace body25;
    BodyGeometry g;
    auto& J = g.joints;
    const double lean = pose.torso_lean;
    const Vec2 down{std::sin(lean), std::cos(lean)};
    const Vec2 up = down * -1.0;
    const Vec2 side{std::cos(lean), -std::sin(lean)};

    J[kNeck] = {0.0, 0.0};
    J[kMidHip] = J[kNeck] + down * 0.30;
    const Vec2 head_up = rotate(up, pose.head_tilt);
    const Vec2 head_side = rotate(side, pose.head_tilt);
    J[kNose] = J[kNeck] + head_up * 0.13;
    J[kREye] = J[kNose] + head_up * 0.03 - head_side * 0.028;
    J[kLEye] = J[kNose] + head_up * 0.03 + head_side * 0.028;
    J[kREar] = J[kNose] + head_up * 0.01 - head_side * 0.058;
    J[kLEar] = J[kNose] + head_up * 0.01 + head_side * 0.058;

    J[kRShoulder] = J[kNeck] - side * 0.11;
    J[kLShoulder] = J[kNeck] + side * 0.11;
    J[kRElbow] = J[kRShoulder] + limb_dir(pose.r_upper_arm, -1) * 0.17;
    J[kRWrist] = J[kRElbow] + limb_dir(pose.r_upper_arm + pose.r_forearm, -1) * 0.16;
    J[kLElbow] = J[kLShoulder] + limb_dir(pose.l_upper_arm, 1) * 0.17;
    J[kLWrist] = J[kLElbow] + limb_dir(pose.l_upper_arm + pose.l_forearm, 1) * 0.16;

    J[kRHip] = J[kMidHip] - side * 0.07;
    J[kLHip] = J[kMidHip] + side * 0.07;
    J[kRKnee] = J[kRHip] + limb_dir(pose.r_thigh, -1) * 0.22;
    J[kRAnkle] = J[kRKnee] + limb_dir(pose.r_thigh + pose.r_shin, -1) * 0.22;
    J[kLKnee] = J[kLHip] + limb_dir(pose.l_thigh, 1) * 0.22;
    J[kLAnkle] = J[kLKnee] + limb_dir(pose.l_thigh + pose.l_shin, 1) * 0.22;

    J[kRHeel] = J[kRAnkle] + Vec2{0.012, 0.035};
    J[kRBigToe] = J[kRAnkle] + Vec2{-0.075, 0.045};
    J[kRSmallToe] = J[kRAnkle] + Vec2{-0.06, 0.055};
    J[kLHeel] = J[kLAnkle] + Vec2{-0.012, 0.035};
    J[kLBigToe] = J[kLAnkle] + Vec2{0.075, 0.045};
    J[kLSmallToe] = J[kLAnkle] + Vec2{0.06, 0.055};

    auto cap = [&](Vec2 a, Vec2 b, double r, BodyPart p) { g.capsules.push_back({a.x, a.y, b.x, b.y, r, p}); };
    // Draw order: later capsules paint over earlier ones.
    for (auto [hip, knee, ankle, heel, big, small, part] :
         {std::tuple{kRHip, kRKnee, kRAnkle, kRHeel, kRBigToe, kRSmallToe, BodyPart::right_leg},
          std::tuple{kLHip, kLKnee, kLAnkle, kLHeel, kLBigToe, kLSmallToe, BodyPart::left_leg}}) {
        cap(J[hip], J[knee], 0.055, part);
        cap(J[knee], J[ankle], 0.048, part);
        cap(J[ankle], J[heel], 0.03, part);
        cap(J[ankle], J[big], 0.03, part);
        cap(J[ankle], J[small], 0.028, part);
    }
    cap(J[kNeck], J[kMidHip], 0.085, BodyPart::torso);
    cap(J[kRShoulder], J[kLShoulder], 0.05, BodyPart::torso);
    cap(J[kRHip], J[kLHip], 0.06, BodyPart::torso);
    cap(J[kNeck], J[kNose], 0.035, BodyPart::head);
    const Vec2 head_centre = J[kNose] + head_up * 0.01;
    cap(head_centre, head_centre, 0.075, BodyPart::head);
    for (auto [sh, el, wr, part] : {std::tuple{kRShoulder, kRElbow, kRWrist, BodyPart::right_arm},
                                    std::tuple{kLShoulder, kLElbow, kLWrist, BodyPart::left_arm}}) {
        cap(J[sh], J[el], 0.045, part);
        cap(J[el], J[wr], 0.04, part);
    }
    return g;
}

}  // namespace

std::string_view part_name(BodyPart p) {
    static constexpr std::array<std::string_view, kBodyPartCount> names{"head",     "torso",     "right_arm",
                                                                        "left_arm", "right_leg", "left_leg"};
    return names.at(static_cast<std::size_t>(p));
}

const std::vector<std::pair<std::string, Rgb>>& figure_palette() {
    static const std::vector<std::pair<std::string, Rgb>> palette{
        {"red", {u8(220), u8(40), u8(40)}},     {"green", {u8(40), u8(190), u8(60)}},
        {"blue", {u8(45), u8(80), u8(225)}},    {"yellow", {u8(235), u8(215), u8(40)}},
        {"cyan", {u8(40), u8(210), u8(220)}},   {"magenta", {u8(215), u8(50), u8(200)}},
        {"orange", {u8(245), u8(140), u8(30)}}, {"white", {u8(240), u8(240), u8(235)}},
    };
    return palette;
}

FigureSpec sample_figure_spec(std::uint64_t seed, const FigureConfig& cfg) {
    Rng rng(derive_seed(seed, "figure"));
    FigureSpec spec;
    spec.seed = seed;
    spec.canvas_size = cfg.canvas_size;
    const auto& palette = figure_palette();
    std::uniform_int_distribution<int> pick(0, static_cast<int>(palette.size()) - 1);
    for (int p = 0; p < kBodyPartCount; ++p) {
        spec.color_ids[p] = pick(rng);
        spec.limb_colors[p] = palette[spec.color_ids[p]].second;
    }
    auto& pose = spec.pose;
    pose.torso_lean = uniform(rng, cfg.torso_lean);
    pose.head_tilt = uniform(rng, cfg.head_tilt);
    pose.r_upper_arm = uniform(rng, cfg.upper_arm);
    pose.r_forearm = uniform(rng, cfg.forearm);
    pose.l_upper_arm = uniform(rng, cfg.upper_arm);
    pose.l_forearm = uniform(rng, cfg.forearm);
    pose.r_thigh = uniform(rng, cfg.thigh);
    pose.r_shin = uniform(rng, cfg.shin);
    pose.l_thigh = uniform(rng, cfg.thigh);
    pose.l_shin = uniform(rng, cfg.shin);
    spec.body_scale = uniform(rng, cfg.body_scale_lo, cfg.body_scale_hi);
    spec.offset_x = uniform(rng, 0.0, 1.0);
    spec.offset_y = uniform(rng, 0.0, 1.0);
    spec.background_top = quantize_u8(static_cast<float>(uniform(rng, 0.08, 0.4)));
    spec.background_bottom = quantize_u8(static_cast<float>(uniform(rng, 0.08, 0.4)));
    return spec;
}

Figure generate_figure(const FigureSpec& spec, const FigureConfig& cfg) {
    const int n = spec.canvas_size;
    if (n < 32) throw ConfigError("canvas_size must be at least 32, got " + std::to_string(n));
    auto in_range = [](double v, AngleRange r) { return v >= r.lo - 1e-12 && v <= r.hi + 1e-12; };
    const auto& p = spec.pose;
    if (!in_range(p.torso_lean, cfg.torso_lean) || !in_range(p.head_tilt, cfg.head_tilt) ||
        !in_range(p.r_upper_arm, cfg.upper_arm) || !in_range(p.l_upper_arm, cfg.upper_arm) ||
        !in_range(p.r_forearm, cfg.forearm) || !in_range(p.l_forearm, cfg.forearm) || !in_range(p.r_thigh, cfg.thigh) ||
        !in_range(p.l_thigh, cfg.thigh) || !in_range(p.r_shin, cfg.shin) || !in_range(p.l_shin, cfg.shin))
        throw ContractError("pose parameters outside the configured joint-angle limits");

    BodyGeometry body = build_body(spec.pose);
    double minx = 1e9, miny = 1e9, maxx = -1e9, maxy = -1e9;
    for (const auto& c : body.capsules) {
        minx = std::min({minx, c.ax - c.radius, c.bx - c.radius});
        maxx = std::max({maxx, c.ax + c.radius, c.bx + c.radius});
        miny = std::min({miny, c.ay - c.radius, c.by - c.radius});
        maxy = std::max({maxy, c.ay + c.radius, c.by + c.radius});
    }
    const double extent = std::max(maxx - minx, maxy - miny);
    const double scale = spec.body_scale * n / extent;
    const double margin = 1.0;
    const double free_x = (n - 1) - 2 * margin - (maxx - minx) * scale;
    const double free_y = (n - 1) - 2 * margin - (maxy - miny) * scale;
    if (free_x < 0 || free_y < 0)
        throw ConfigError("canvas too small to contain the figure (body_scale " + std::to_string(spec.body_scale) +
                          ")");
    const double tx = margin + free_x * spec.offset_x - minx * scale;
    const double ty = margin + free_y * spec.offset_y - miny * scale;
    auto map = [&](double x, double y) { return Vec2{x * scale + tx, y * scale + ty}; };

    Figure fig;
    fig.joints.joints.resize(body25::kJointCount);
    for (int j = 0; j < body25::kJointCount; ++j) {
        const Vec2 q = map(body.joints[j].x, body.joints[j].y);
        // dyadic grid: mirroring (W-1-x) stays exact in floating point
        fig.joints.joints[j] = {std::round(q.x * 1024.0) / 1024.0, std::round(q.y * 1024.0) / 1024.0, true};
    }
    for (const auto& c : body.capsules) {
        const Vec2 a = map(c.ax, c.ay), b = map(c.bx, c.by);
        fig.capsules.push_back({a.x, a.y, b.x, b.y, c.radius * scale, c.part});
    }

    fig.background = Image(n, n, 3);
    for (int y = 0; y < n; ++y) {
        const float t = static_cast<float>(y) / static_cast<float>(n - 1);
        const float v = quantize_u8(spec.background_top * (1.f - t) + spec.background_bottom * t);
        for (int x = 0; x < n; ++x)
            for (int ch = 0; ch < 3; ++ch) fig.background.at(y, x, ch) = v;
    }
    fig.image = fig.background;
    fig.mask = Mask(n, n);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const Capsule* hit = nullptr;
            for (const auto& c : fig.capsules)
                if (segment_dist2(x, y, c) <= c.radius * c.radius) hit = &c;
            if (!hit) continue;
            fig.mask.at(y, x) = 1;
            const Rgb col = spec.limb_colors[static_cast<int>(hit->part)];
            fig.image.at(y, x, 0) = col.r;
            fig.image.at(y, x, 1) = col.g;
            fig.image.at(y, x, 2) = col.b;
        }
    }
    const auto& palette = figure_palette();
    for (int part = 0; part < kBodyPartCount; ++part)
        fig.attributes.push_back(
            {std::string(part_name(static_cast<BodyPart>(part))), palette.at(spec.color_ids[part]).first});
    return fig;
}

// ---------------------------------------------------------------------------
// Occluders

double OccluderShape::area() const {
    switch (kind) {
        case OccluderKind::ellipse:
            return std::numbers::pi * rx * ry;
        case OccluderKind::bar:
            return 4.0 * rx * ry;
        case OccluderKind::polygon: {
            double a = 0.0;
            for (std::size_t i = 0; i < vertices.size(); ++i) {
                const auto& [x0, y0] = vertices[i];
                const auto& [x1, y1] = vertices[(i + 1) % vertices.size()];
                a += x0 * y1 - x1 * y0;
            }
            return std::abs(a) / 2.0;
        }
    }
    return 0.0;
}

Mask OccluderShape::render(int height, int width) const {
    Mask m(height, width);
    const double c = std::cos(angle), s = std::sin(angle);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double dx = x - cx, dy = y - cy;
            const double u = dx * c + dy * s, v = -dx * s + dy * c;
            bool inside = false;
            switch (kind) {
                case OccluderKind::ellipse:
                    inside = (u * u) / (rx * rx) + (v * v) / (ry * ry) <= 1.0;
                    break;
                case OccluderKind::bar:
                    inside = std::abs(u) <= rx && std::abs(v) <= ry;
                    break;
                case OccluderKind::polygon: {
                    inside = true;
                    for (std::size_t i = 0; i < vertices.size() && inside; ++i) {
                        const auto& [x0, y0] = vertices[i];
                        const auto& [x1, y1] = vertices[(i + 1) % vertices.size()];
                        inside = (x1 - x0) * (v - y0) - (y1 - y0) * (u - x0) >= 0.0;
                    }
                    break;
                }
            }
            m.at(y, x) = inside ? 1 : 0;
        }
    }
    return m;
}

Rgb OccluderShape::color_at(double x, double y) const {
    if (stripe_period <= 0.0) return texture_color;
    const double u = (x - cx) * std::cos(angle) + (y - cy) * std::sin(angle);
    const auto band = static_cast<long>(std::floor(u / stripe_period));
    return (band % 2 == 0) ? texture_color : stripe_color;
}

OccluderShape sample_occluder(Rng& rng, double target_area) {
    OccluderShape o;
    o.kind = static_cast<OccluderKind>(std::uniform_int_distribution<int>(0, 2)(rng));
    auto rand_color = [&] {
        return Rgb{quantize_u8(static_cast<float>(uniform(rng, 0.15, 0.95))),
                   quantize_u8(static_cast<float>(uniform(rng, 0.15, 0.95))),
                   quantize_u8(static_cast<float>(uniform(rng, 0.15, 0.95)))};
    };
    o.texture_color = rand_color();
    o.stripe_color = rand_color();
    o.stripe_period = uniform(rng, 0.0, 1.0) < 0.3 ? uniform(rng, 3.0, 6.0) : 0.0;
    o.angle = uniform(rng, 0.0, std::numbers::pi);
    target_area = std::max(target_area, 12.0);
    switch (o.kind) {
        case OccluderKind::ellipse: {
            const double aspect = uniform(rng, 0.5, 1.0);
            o.rx = std::sqrt(target_area / (std::numbers::pi * aspect));
            o.ry = std::max(1.5, o.rx * aspect);
            break;
        }
        case OccluderKind::bar: {
            const double aspect = uniform(rng, 0.2, 0.6);
            o.rx = std::sqrt(target_area / (4.0 * aspect));
            o.ry = std::max(1.5, o.rx * aspect);
            break;
        }
        case OccluderKind::polygon: {
            const int n = std::uniform_int_distribution<int>(5, 7)(rng);
            std::vector<double> angles(n);
            for (auto& a : angles) a = uniform(rng, 0.0, 2.0 * std::numbers::pi);
            std::sort(angles.begin(), angles.end());
            // Evenly spread the vertices a little so the polygon never degenerates.
            for (int i = 0; i < n; ++i) angles[i] = 0.5 * angles[i] + 0.5 * (2.0 * std::numbers::pi * i / n);
            std::sort(angles.begin(), angles.end());
            for (double a : angles) {
                const double r = uniform(rng, 0.8, 1.0);
                o.vertices.emplace_back(r * std::cos(a), r * std::sin(a));
            }
            const double unit_area = o.area();
            const double k = std::sqrt(target_area / unit_area);
            for (auto& [x, y] : o.vertices) {
                x *= k;
                y *= k;
            }
            break;
        }
    }
    return o;
}

double recompute_occlusion_ratio(const Mask& modal, const Mask& amodal) {
    const auto a = amodal.count();
    if (a == 0) return 0.0;
    return 1.0 - static_cast<double>(modal.count()) / static_cast<double>(a);
}

double sample_occlusion_ratio(double mean, double std, double lo, double hi, Rng& rng) {
    require(0.0 <= lo && lo < hi && hi <= 0.95, "occlusion ratio bounds must satisfy 0 <= lo < hi <= 0.95");
    require(std >= 0.0, "occlusion ratio std must be non-negative");
    const double draw = std > 0.0 ? std::normal_distribution<double>(mean, std)(rng) : mean;
    return std::clamp(draw, lo, hi);
}

void composite_record(SceneRecord& rec, const Mask& occluder_mask, const Image& occluder_pixels) {
    rec.mask_occluder = occluder_mask;
    rec.mask_modal = mask_and_not(rec.mask_amodal_gt, occluder_mask);
    rec.image_occluded = rec.image_gt;
    for (int y = 0; y < occluder_mask.height; ++y)
        for (int x = 0; x < occluder_mask.width; ++x)
            if (occluder_mask.at(y, x))
                for (int c = 0; c < 3; ++c) rec.image_occluded.at(y, x, c) = occluder_pixels.at(y, x, c);
    rec.occlusion_ratio = recompute_occlusion_ratio(rec.mask_modal, rec.mask_amodal_gt);
}

namespace {

bool single_component(const Mask& m) {
    const std::size_t total = m.count();
    if (total == 0) return false;
    std::vector<std::uint8_t> seen(m.data.size(), 0);
    std::vector<int> stack;
    const auto first = std::find(m.data.begin(), m.data.end(), 1) - m.data.begin();
    stack.push_back(static_cast<int>(first));
    seen[first] = 1;
    std::size_t reached = 0;
    while (!stack.empty()) {
        const int idx = stack.back();
        stack.pop_back();
        ++reached;
        const int y = idx / m.width, x = idx % m.width;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int ny = y + dy, nx = x + dx;
                if (ny < 0 || nx < 0 || ny >= m.height || nx >= m.width) continue;
                const int nidx = ny * m.width + nx;
                if (m.data[nidx] && !seen[nidx]) {
                    seen[nidx] = 1;
                    stack.push_back(nidx);
                }
            }
    }
    return reached == total;
}

Image paint_occluder(const OccluderShape& o, int h, int w) {
    Image img(h, w, 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const Rgb c = o.color_at(x, y);
            img.at(y, x, 0) = c.r;
            img.at(y, x, 1) = c.g;
            img.at(y, x, 2) = c.b;
        }
    return img;
}

}  // namespace

SceneRecord place_occluder(const Figure& figure, std::uint64_t seed, OccluderShape occluder, double target_ratio,
                           const OcclusionConfig& cfg, Rng& rng) {
    require(target_ratio >= 0.0 && target_ratio <= 0.95, "target_ratio must lie in [0, 0.95]");
    require(cfg.max_iters >= 1, "max_iters must be >= 1");
    SceneRecord rec;
    rec.seed = seed;
    rec.image_gt = figure.image;
    rec.mask_amodal_gt = figure.mask;
    rec.joints = figure.joints;
    rec.attributes = figure.attributes;
    rec.target_ratio = target_ratio;
    const int h = figure.mask.height, w = figure.mask.width;
    if (target_ratio == 0.0) {
        composite_record(rec, Mask(h, w), rec.image_gt);
        return rec;
    }

    std::vector<std::pair<int, int>> figure_pixels;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (figure.mask.at(y, x)) figure_pixels.emplace_back(x, y);
    if (figure_pixels.empty()) throw GenerationError("figure mask is empty", seed);
    const double amodal_area = static_cast<double>(figure_pixels.size());
    std::uniform_int_distribution<std::size_t> pick(0, figure_pixels.size() - 1);

    for (int attempt = 0; attempt < cfg.max_resamples; ++attempt) {
        if (attempt > 0) occluder = sample_occluder(rng, target_ratio * amodal_area * uniform(rng, 1.3, 2.4));
        const double reach = std::sqrt(occluder.area() / std::numbers::pi);
        for (int it = 0; it < cfg.max_iters; ++it) {
            const auto [ax, ay] = figure_pixels[pick(rng)];
            occluder.cx = ax + std::normal_distribution<double>(0.0, 0.5 * reach)(rng);
            occluder.cy = ay + std::normal_distribution<double>(0.0, 0.5 * reach)(rng);
            const Mask occ = occluder.render(h, w);
            const double covered = static_cast<double>(mask_and(occ, figure.mask).count());
            const double ratio = covered / amodal_area;
            if (std::abs(ratio - target_ratio) <= cfg.tolerance && single_component(occ)) {
                composite_record(rec, occ, paint_occluder(occluder, h, w));
                return rec;
            }
        }
    }
    throw GenerationError("no occluder placement reached target ratio " + std::to_string(target_ratio), seed);
}

SceneRecord generate_scene(std::uint64_t seed, const SceneConfig& cfg) {
    const FigureSpec spec = sample_figure_spec(seed, cfg.figure);
    const Figure fig = generate_figure(spec, cfg.figure);
    Rng rng(derive_seed(seed, "occlusion"));
    const auto& oc = cfg.occlusion;
    const double target = sample_occlusion_ratio(oc.ratio_mean, oc.ratio_std, oc.ratio_lo, oc.ratio_hi, rng);
    const double area = static_cast<double>(fig.mask.count());
    OccluderShape occ = sample_occluder(rng, target * area * uniform(rng, 1.3, 2.4));
    return place_occluder(fig, seed, std::move(occ), target, oc, rng);
}

std::string check_record_invariants(const SceneRecord& rec) {
    const int h = rec.mask_amodal_gt.height, w = rec.mask_amodal_gt.width;
    if (!rec.mask_modal.same_shape(rec.mask_amodal_gt) || !rec.mask_occluder.same_shape(rec.mask_amodal_gt))
        return "mask shapes differ";
    if (rec.image_gt.height != h || rec.image_gt.width != w || !rec.image_gt.same_shape(rec.image_occluded))
        return "image shapes differ";
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const bool expect = rec.mask_amodal_gt.at(y, x) && !rec.mask_occluder.at(y, x);
            if (static_cast<bool>(rec.mask_modal.at(y, x)) != expect) return "modal != amodal AND NOT occluder";
            if (rec.mask_modal.at(y, x) && rec.mask_occluder.at(y, x)) return "modal overlaps occluder";
            if (!rec.mask_occluder.at(y, x))
                for (int c = 0; c < 3; ++c)
                    if (rec.image_occluded.at(y, x, c) != rec.image_gt.at(y, x, c))
                        return "occluded image differs outside occluder";
        }
    if (std::abs(recompute_occlusion_ratio(rec.mask_modal, rec.mask_amodal_gt) - rec.occlusion_ratio) > 1e-6)
        return "stored occlusion ratio disagrees with masks";
    if (rec.occlusion_ratio < 0.0 || rec.occlusion_ratio > 1.0) return "occlusion ratio outside [0, 1]";
    for (float v : rec.image_gt.data)
        if (!(v >= 0.f && v <= 1.f)) return "image_gt value outside [0, 1]";
    return {};
}

// ---------------------------------------------------------------------------
// Augmentation

SceneRecord hflip_record(const SceneRecord& rec) {
    SceneRecord out = rec;
    const int w = rec.image_gt.width;
    out.image_gt = flip_horizontal(rec.image_gt);
    out.image_occluded = flip_horizontal(rec.image_occluded);
    out.mask_amodal_gt = flip_horizontal(rec.mask_amodal_gt);
    out.mask_modal = flip_horizontal(rec.mask_modal);
    out.mask_occluder = flip_horizontal(rec.mask_occluder);
    const bool body = rec.joints.size() == static_cast<std::size_t>(body25::kJointCount);
    for (std::size_t i = 0; i < rec.joints.size(); ++i) {
        const std::size_t src = body ? static_cast<std::size_t>(body25::mirror_joint(static_cast<int>(i))) : i;
        Joint j = rec.joints.joints[src];
        j.x = (w - 1) - j.x;
        out.joints.joints[i] = j;
    }
    auto swap_side = [](std::string part) {
        if (part.rfind("left_", 0) == 0) return "right_" + part.substr(5);
        if (part.rfind("right_", 0) == 0) return "left_" + part.substr(6);
        return part;
    };
    // Keep the canonical part order: the value of a part comes from its mirror part.
    for (auto& a : out.attributes) {
        const std::string mirror = swap_side(a.part);
        for (const auto& b : rec.attributes)
            if (b.part == mirror) a.value = b.value;
    }
    return out;
}

std::optional<SceneRecord> shift_record(const SceneRecord& rec, int dx, int dy) {
    const int h = rec.mask_amodal_gt.height, w = rec.mask_amodal_gt.width;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (rec.mask_amodal_gt.at(y, x) && (x + dx < 0 || x + dx >= w || y + dy < 0 || y + dy >= h))
                return std::nullopt;
    auto clamp_src = [](int v, int n) { return std::clamp(v, 0, n - 1); };
    SceneRecord out = rec;
    Image occ_pixels(h, w, 3);
    Mask occ(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int sx = x - dx, sy = y - dy;
            const bool inside = sx >= 0 && sx < w && sy >= 0 && sy < h;
            const int cx = clamp_src(sx, w), cy = clamp_src(sy, h);
            for (int c = 0; c < 3; ++c) {
                // Background is replicated from the border; the figure never reaches it.
                out.image_gt.at(y, x, c) = rec.image_gt.at(cy, cx, c);
                occ_pixels.at(y, x, c) = rec.image_occluded.at(cy, cx, c);
            }
            out.mask_amodal_gt.at(y, x) = inside ? rec.mask_amodal_gt.at(sy, sx) : 0;
            occ.at(y, x) = inside ? rec.mask_occluder.at(sy, sx) : 0;
        }
    for (auto& j : out.joints.joints) {
        j.x += dx;
        j.y += dy;
    }
    composite_record(out, occ, occ_pixels);
    return out;
}

SceneRecord jitter_record(const SceneRecord& rec, const std::array<float, 3>& gain, const std::array<float, 3>& bias) {
    SceneRecord out = rec;
    auto apply = [&](Image& img) {
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                for (int c = 0; c < 3; ++c) img.at(y, x, c) = quantize_u8(img.at(y, x, c) * gain[c] + bias[c]);
    };
    apply(out.image_gt);
    apply(out.image_occluded);
    return out;
}

SceneRecord augment_record(const SceneRecord& rec, const AugmentOps& ops, Rng& rng) {
    SceneRecord out = rec;
    if (ops.jitter) {
        std::array<float, 3> gain{}, bias{};
        const double m = ops.jitter_magnitude;
        for (int c = 0; c < 3; ++c) {
            gain[c] = static_cast<float>(1.0 + uniform(rng, -m, m));
            bias[c] = static_cast<float>(uniform(rng, -m, m) * 0.5);
        }
        if (m > 0.0) out = jitter_record(out, gain, bias);
    }
    if (ops.shift && ops.max_shift > 0) {
        std::uniform_int_distribution<int> d(-ops.max_shift, ops.max_shift);
        const int dx = d(rng), dy = d(rng);
        if (auto shifted = shift_record(out, dx, dy)) out = std::move(*shifted);
    }
    if (ops.hflip) out = hflip_record(out);
    return out;
}

// ---------------------------------------------------------------------------
// Input corruption and pose-detector simulation

CorruptedMask corrupt_modal_mask(const Mask& modal, double probability, double expand_lo, double expand_hi, Rng& rng) {
    require(0.0 <= expand_lo && expand_lo <= expand_hi, "expansion bounds must satisfy 0 <= lo <= hi");
    CorruptedMask out{modal, false, 0.0};
    if (probability <= 0.0 || uniform(rng, 0.0, 1.0) >= probability) return out;
    const std::size_t area = modal.count();
    if (area == 0) return out;
    // Integer pixel budget whose fraction stays inside [lo, hi].
    const double frac = uniform(rng, expand_lo, expand_hi);
    auto budget = static_cast<std::size_t>(std::llround(frac * static_cast<double>(area)));
    budget = std::clamp(budget, static_cast<std::size_t>(std::ceil(expand_lo * area - 1e-9)),
                        static_cast<std::size_t>(std::floor(expand_hi * area + 1e-9)));

    Mask& m = out.mask;
    const int h = m.height, w = m.width;
    std::vector<int> frontier;
    std::vector<std::uint8_t> queued(m.data.size(), 0);
    auto push_neighbours = [&](int idx) {
        const int y = idx / w, x = idx % w;
        constexpr int offs[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
        for (const auto& o : offs) {
            const int ny = y + o[1], nx = x + o[0];
            if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
            const int n = ny * w + nx;
            if (!m.data[n] && !queued[n]) {
                queued[n] = 1;
                frontier.push_back(n);
            }
        }
    };
    for (int i = 0; i < h * w; ++i)
        if (m.data[i]) push_neighbours(i);
    std::size_t added = 0;
    while (added < budget && !frontier.empty()) {
        std::uniform_int_distribution<std::size_t> d(0, frontier.size() - 1);
        const std::size_t k = d(rng);
        const int idx = frontier[k];
        frontier[k] = frontier.back();
        frontier.pop_back();
        m.data[idx] = 1;
        ++added;
        push_neighbours(idx);
    }
    out.corrupted = true;
    out.added_fraction = static_cast<double>(added) / static_cast<double>(area);
    return out;
}

JointSet simulate_pose_detection(const JointSet& joints, double noise_std, double poor_rate, Rng& rng,
                                 bool* poor_out) {
    require(poor_rate >= 0.0 && poor_rate <= 1.0, "poor_rate must lie in [0, 1]");
    JointSet out = joints;
    if (noise_std > 0.0) {
        std::normal_distribution<double> n(0.0, noise_std);
        for (auto& j : out.joints) {
            j.x += n(rng);
            j.y += n(rng);
        }
    }
    const bool poor = poor_rate > 0.0 && uniform(rng, 0.0, 1.0) < poor_rate;
    if (poor) {
        const int keep = std::uniform_int_distribution<int>(1, kPoorDetectionMaxValid)(rng);
        std::vector<int> order(out.joints.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t i = static_cast<std::size_t>(keep); i < order.size(); ++i) out.joints[order[i]].valid = false;
    }
    if (poor_out) *poor_out = poor;
    return out;
}

}  // namespace deocc
