#include "deocc/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <opencv2/imgcodecs.hpp>
#include <sstream>

#include "deocc/errors.hpp"

namespace fs = std::filesystem;

namespace deocc {

namespace {

std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

void imwrite_checked(const std::string& path, const cv::Mat& m) {
    if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
    if (!cv::imwrite(path, m)) throw IoError("cannot write " + path);
}

cv::Mat imread_checked(const std::string& path, int flags) {
    cv::Mat m = cv::imread(path, flags);
    if (m.empty()) throw IoError("cannot read " + path);
    return m;
}

}  // namespace

void write_png(const std::string& path, const Image& img) {
    require(img.channels == 3 || img.channels == 1, "write_png: 1 or 3 channels");
    cv::Mat m(img.height, img.width, img.channels == 3 ? CV_8UC3 : CV_8UC1);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                // OpenCV stores BGR
                const int dst = img.channels == 3 ? 2 - c : 0;
                m.ptr<std::uint8_t>(y)[x * img.channels + dst] = to_u8(img.at(y, x, c));
            }
    imwrite_checked(path, m);
}

void write_png(const std::string& path, const Mask& mk) {
    cv::Mat m(mk.height, mk.width, CV_8UC1);
    for (int y = 0; y < mk.height; ++y)
        for (int x = 0; x < mk.width; ++x) m.at<std::uint8_t>(y, x) = mk.at(y, x) ? 255 : 0;
    imwrite_checked(path, m);
}

void write_png(const std::string& path, const FloatMap& p) {
    cv::Mat m(p.height, p.width, CV_8UC1);
    for (int y = 0; y < p.height; ++y)
        for (int x = 0; x < p.width; ++x) m.at<std::uint8_t>(y, x) = to_u8(p.at(y, x));
    imwrite_checked(path, m);
}

Image read_png_image(const std::string& path) {
    cv::Mat m = imread_checked(path, cv::IMREAD_COLOR);
    Image img(m.rows, m.cols, 3);
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = m.ptr<std::uint8_t>(y)[x * 3 + 2 - c] / 255.0f;
    return img;
}

Mask read_png_mask(const std::string& path) {
    cv::Mat m = imread_checked(path, cv::IMREAD_GRAYSCALE);
    Mask mk(m.rows, m.cols);
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x) mk.at(y, x) = m.at<std::uint8_t>(y, x) >= 128;
    return mk;
}

FloatMap read_png_map(const std::string& path) {
    cv::Mat m = imread_checked(path, cv::IMREAD_GRAYSCALE);
    FloatMap p(m.rows, m.cols);
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x) p.at(y, x) = m.at<std::uint8_t>(y, x) / 255.0;
    return p;
}

std::vector<int> rle_encode(const Mask& m) {
    std::vector<int> runs;
    std::uint8_t cur = 0;
    int n = 0;
    for (auto v : m.data) {
        if (v != cur) {
            runs.push_back(n);
            cur = v;
            n = 0;
        }
        ++n;
    }
    runs.push_back(n);
    return runs;
}

Mask rle_decode(const std::vector<int>& runs, int height, int width) {
    Mask m(height, width);
    std::size_t pos = 0;
    std::uint8_t cur = 0;
    for (int r : runs) {
        if (r < 0 || pos + static_cast<std::size_t>(r) > m.data.size()) throw IoError("corrupt run-length mask");
        std::fill_n(m.data.begin() + static_cast<std::ptrdiff_t>(pos), r, cur);
        pos += static_cast<std::size_t>(r);
        cur ^= 1;
    }
    if (pos != m.data.size()) throw IoError("run-length mask has the wrong area");
    return m;
}

nlohmann::ordered_json joints_to_json(const JointSet& j) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& p : j.joints) arr.push_back({p.x, p.y, p.valid ? 1 : 0});
    return arr;
}

JointSet joints_from_json(const nlohmann::json& j) {
    JointSet out;
    for (const auto& p : j) out.joints.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<int>() != 0});
    return out;
}

nlohmann::ordered_json sidecar_json(const DatasetRecord& r) {
    const auto& s = r.scene;
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["index"] = r.index;
    j["seed"] = s.seed;
    j["generator_version"] = kGeneratorVersion;
    j["canvas"] = {s.image_gt.height, s.image_gt.width};
    j["occlusion_ratio"] = s.occlusion_ratio;
    j["target_ratio"] = s.target_ratio;
    auto attrs = nlohmann::ordered_json::array();
    for (const auto& a : s.attributes) attrs.push_back({a.part, a.value});
    j["attributes"] = attrs;
    j["joints"] = joints_to_json(s.joints);
    j["joints_detected"] = joints_to_json(r.joints_detected);
    j["poor_detection"] = r.poor_detection;
    j["mask_occluder_rle"] = rle_encode(s.mask_occluder);
    return j;
}

void write_record(const std::string& dir, const DatasetRecord& r) {
    const auto base = (fs::path(dir) / r.id).string();
    write_png(base + "_image_gt.png", r.scene.image_gt);
    write_png(base + "_image_occluded.png", r.scene.image_occluded);
    write_png(base + "_mask_modal.png", r.scene.mask_modal);
    write_png(base + "_mask_amodal.png", r.scene.mask_amodal_gt);
    write_text(base + ".json", sidecar_json(r).dump(1) + "\n");
}

DatasetRecord read_record(const std::string& dir, const std::string& id) {
    const auto base = (fs::path(dir) / id).string();
    const auto j = nlohmann::json::parse(read_text(base + ".json"));
    if (j.at("generator_version").get<int>() != kGeneratorVersion)
        throw ConfigError("record " + id + " was written by another generator version");
    DatasetRecord r;
    r.id = j.at("id");
    r.index = j.at("index");
    auto& s = r.scene;
    s.seed = j.at("seed");
    s.image_gt = read_png_image(base + "_image_gt.png");
    s.image_occluded = read_png_image(base + "_image_occluded.png");
    s.mask_modal = read_png_mask(base + "_mask_modal.png");
    s.mask_amodal_gt = read_png_mask(base + "_mask_amodal.png");
    s.mask_occluder = rle_decode(j.at("mask_occluder_rle").get<std::vector<int>>(), s.image_gt.height, s.image_gt.width);
    s.occlusion_ratio = j.at("occlusion_ratio");
    s.target_ratio = j.at("target_ratio");
    for (const auto& a : j.at("attributes")) s.attributes.push_back({a.at(0), a.at(1)});
    s.joints = joints_from_json(j.at("joints"));
    r.joints_detected = joints_from_json(j.at("joints_detected"));
    r.poor_detection = j.at("poor_detection");
    return r;
}

std::vector<std::string> list_record_ids(const std::string& split_dir) {
    std::vector<std::string> ids;
    if (!fs::is_directory(split_dir)) throw IoError("missing split directory " + split_dir);
    for (const auto& e : fs::directory_iterator(split_dir))
        if (e.path().extension() == ".json") ids.push_back(e.path().stem().string());
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::string read_text(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

void write_text(const std::string& path, const std::string& text) {
    if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f << text;
}

}  // namespace deocc
