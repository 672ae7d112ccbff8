#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "deocc/image.hpp"

namespace deocc {

// |pred AND gt| / |pred OR gt|; 1 when both masks are empty.
double iou(const Mask& pred, const Mask& gt);

// IoU restricted to the occluded region (pixels outside the modal mask).
// nullopt when the occluded part of the amodal ground truth is empty.
std::optional<double> iou_inv(const Mask& pred, const Mask& gt_amodal, const Mask& modal);

// Mean absolute difference between a probability map and a binary mask.
double mask_l1(const FloatMap& pred, const Mask& gt);

enum class Region { whole, visible, invisible };
std::string to_string(Region r);
Region parse_region(const std::string& name);

struct PixelScores {
    double l1 = 0.0;
    double mse = 0.0;
    double psnr = 0.0;
};

inline constexpr double kPsnrCap = 99.0;
double psnr_from_mse(double mse);

// whole = all pixels, visible = modal, invisible = amodal AND NOT modal.
// nullopt when the selected region is empty.
std::optional<PixelScores> pixel_metrics(const Image& pred, const Image& gt, Region region, const Mask& modal,
                                         const Mask& amodal);

// Per-record metric values keyed by column name; a missing key is a skip.
struct RecordMetrics {
    std::string record_id;
    std::map<std::string, double> values;
    std::map<std::string, std::string> skipped;  // column -> reason
};

struct MetricSummary {
    std::optional<double> mean;  // absent when every record skipped this column
    std::size_t included = 0;
    std::size_t skipped = 0;
};

struct MetricsReport {
    std::vector<std::string> columns;
    std::map<std::string, MetricSummary> summary;
    std::vector<RecordMetrics> records;
};

MetricsReport aggregate(const std::vector<RecordMetrics>& records, const std::vector<std::string>& columns);

// Delimited per-record file and structured aggregate file.
std::string per_record_csv(const MetricsReport& report, const std::string& manifest_hash);
std::string aggregate_json(const MetricsReport& report, const std::string& manifest_hash);
std::vector<RecordMetrics> parse_per_record_csv(const std::string& text, std::vector<std::string>* columns = nullptr);

}  // namespace deocc
