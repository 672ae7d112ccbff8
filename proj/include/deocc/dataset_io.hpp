#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "deocc/image.hpp"
#include "deocc/scenegen.hpp"

namespace deocc {

// 8-bit lossless PNG; float images are quantised to the nearest 1/255.
void write_png(const std::string& path, const Image& img);
void write_png(const std::string& path, const Mask& m);
void write_png(const std::string& path, const FloatMap& probs);
Image read_png_image(const std::string& path);
Mask read_png_mask(const std::string& path);
FloatMap read_png_map(const std::string& path);

// Row-major run lengths, first run counts zeros.
std::vector<int> rle_encode(const Mask& m);
Mask rle_decode(const std::vector<int>& runs, int height, int width);

nlohmann::ordered_json joints_to_json(const JointSet& j);
JointSet joints_from_json(const nlohmann::json& j);

// Dataset record plus the model-facing observations derived from it.
struct DatasetRecord {
    std::string id;
    std::uint64_t index = 0;
    SceneRecord scene;
    JointSet joints_detected;  // what the pipeline sees in place of J_2D
    bool poor_detection = false;
};

nlohmann::ordered_json sidecar_json(const DatasetRecord& r);
void write_record(const std::string& dir, const DatasetRecord& r);
DatasetRecord read_record(const std::string& dir, const std::string& id);
std::vector<std::string> list_record_ids(const std::string& split_dir);

std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& text);

}  // namespace deocc
