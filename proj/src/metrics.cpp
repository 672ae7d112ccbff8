#include "deocc/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>

#include "deocc/errors.hpp"

namespace deocc {

double iou(const Mask& pred, const Mask& gt) {
    require(pred.same_shape(gt), "iou: shape mismatch");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const bool p = pred.data[i], g = gt.data[i];
        inter += p && g;
        uni += p || g;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::optional<double> iou_inv(const Mask& pred, const Mask& gt_amodal, const Mask& modal) {
    require(pred.same_shape(gt_amodal) && pred.same_shape(modal), "iou_inv: shape mismatch");
    std::size_t inter = 0, uni = 0, gt_area = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        if (modal.data[i]) continue;
        const bool p = pred.data[i], g = gt_amodal.data[i];
        inter += p && g;
        uni += p || g;
        gt_area += g;
    }
    if (gt_area == 0) return std::nullopt;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double mask_l1(const FloatMap& pred, const Mask& gt) {
    require(pred.height == gt.height && pred.width == gt.width, "mask_l1: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.values.size(); ++i) s += std::abs(pred.values[i] - gt.data[i]);
    return s / static_cast<double>(pred.values.size());
}

std::string to_string(Region r) {
    switch (r) {
        case Region::whole:
            return "whole";
        case Region::visible:
            return "visible";
        case Region::invisible:
            return "invisible";
    }
    return "?";
}

Region parse_region(const std::string& name) {
    if (name == "whole") return Region::whole;
    if (name == "visible") return Region::visible;
    if (name == "invisible") return Region::invisible;
    throw ContractError("unknown region '" + name + "'");
}

double psnr_from_mse(double mse) {
    if (mse < 1e-10) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

std::optional<PixelScores> pixel_metrics(const Image& pred, const Image& gt, Region region, const Mask& modal,
                                         const Mask& amodal) {
    require(pred.same_shape(gt), "pixel_metrics: image shape mismatch");
    require(modal.height == gt.height && modal.width == gt.width && modal.same_shape(amodal),
            "pixel_metrics: mask shape mismatch");
    double abs_sum = 0.0, sq_sum = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < gt.height; ++y)
        for (int x = 0; x < gt.width; ++x) {
            bool take = true;
            if (region == Region::visible) take = modal.at(y, x);
            if (region == Region::invisible) take = amodal.at(y, x) && !modal.at(y, x);
            if (!take) continue;
            for (int c = 0; c < gt.channels; ++c) {
                const double d = static_cast<double>(pred.at(y, x, c)) - static_cast<double>(gt.at(y, x, c));
                abs_sum += std::abs(d);
                sq_sum += d * d;
            }
            n += static_cast<std::size_t>(gt.channels);
        }
    if (n == 0) return std::nullopt;
    PixelScores s;
    s.l1 = abs_sum / static_cast<double>(n);
    s.mse = sq_sum / static_cast<double>(n);
    s.psnr = psnr_from_mse(s.mse);
    return s;
}

MetricsReport aggregate(const std::vector<RecordMetrics>& records, const std::vector<std::string>& columns) {
    MetricsReport rep;
    rep.columns = columns;
    rep.records = records;
    for (const auto& col : columns) {
        MetricSummary s;
        double sum = 0.0;
        for (const auto& r : records) {
            if (auto it = r.values.find(col); it != r.values.end()) {
                sum += it->second;
                ++s.included;
            } else {
                ++s.skipped;
            }
        }
        if (s.included > 0) s.mean = sum / static_cast<double>(s.included);
        rep.summary[col] = s;
    }
    return rep;
}

namespace {

std::string fmt_double(double v) {
    std::ostringstream os;
    os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
    return os.str();
}

}  // namespace

std::string per_record_csv(const MetricsReport& report, const std::string& manifest_hash) {
    std::ostringstream os;
    os << "# manifest " << manifest_hash << "\n";
    os << "# mask L1 and image L1 are mean absolute error over all pixels of the selected region\n";
    os << "record_id";
    for (const auto& c : report.columns) os << "," << c;
    os << "\n";
    for (const auto& r : report.records) {
        os << r.record_id;
        for (const auto& c : report.columns) {
            os << ",";
            if (auto it = r.values.find(c); it != r.values.end()) os << fmt_double(it->second);
        }
        os << "\n";
    }
    return os.str();
}

std::vector<RecordMetrics> parse_per_record_csv(const std::string& text, std::vector<std::string>* columns_out) {
    std::istringstream is(text);
    std::string line;
    std::vector<std::string> columns;
    std::vector<RecordMetrics> out;
    auto split = [](const std::string& s) {
        std::vector<std::string> parts;
        std::string cur;
        for (char ch : s) {
            if (ch == ',') {
                parts.push_back(cur);
                cur.clear();
            } else {
                cur += ch;
            }
        }
        parts.push_back(cur);
        return parts;
    };
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto parts = split(line);
        if (columns.empty()) {
            columns.assign(parts.begin() + 1, parts.end());
            continue;
        }
        RecordMetrics r;
        r.record_id = parts.at(0);
        for (std::size_t i = 1; i < parts.size() && i - 1 < columns.size(); ++i)
            if (!parts[i].empty()) r.values[columns[i - 1]] = std::stod(parts[i]);
        out.push_back(std::move(r));
    }
    if (columns_out) *columns_out = columns;
    return out;
}

std::string aggregate_json(const MetricsReport& report, const std::string& manifest_hash) {
    nlohmann::ordered_json j;
    j["manifest"] = manifest_hash;
    j["note"] = "FID and LPIPS columns are reserved and not computed";
    j["record_count"] = report.records.size();
    for (const auto& c : report.columns) {
        const auto& s = report.summary.at(c);
        nlohmann::ordered_json e;
        if (s.mean) {
            e["mean"] = *s.mean;
        } else {
            e["mean"] = nullptr;
        }
        e["included"] = s.included;
        e["skipped"] = s.skipped;
        j["metrics"][c] = e;
    }
    nlohmann::ordered_json skipped = nlohmann::ordered_json::array();
    for (const auto& r : report.records)
        for (const auto& [col, reason] : r.skipped) skipped.push_back({{"record", r.record_id}, {"column", col}, {"reason", reason}});
    j["skipped"] = skipped;
    j["fid"] = nullptr;
    j["lpips"] = nullptr;
    return j.dump(2) + "\n";
}

}  // namespace deocc
