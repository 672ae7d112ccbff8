#pragma once

#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "deocc/codec.hpp"
#include "deocc/dataset_io.hpp"
#include "deocc/diffusion.hpp"
#include "deocc/mask_completion.hpp"
#include "deocc/metrics.hpp"
#include "deocc/rgb_completion.hpp"

namespace deocc {

inline constexpr const char* kArtifactVersion = "deocc-1.0";

struct RunConfig {
    std::uint64_t seed = 7;

    // dataset
    int train_count = 2000;
    int val_count = 100;
    int test_count = 200;
    int canvas_size = 64;
    double ratio_mean = 0.35, ratio_std = 0.15, ratio_lo = 0.05, ratio_hi = 0.75;
    double pose_noise_std = 0.5;
    double poor_detection_rate = 0.079;
    double corruption_rate = 0.0;  // inaccurate modal masks injected into mask training
    double corruption_lo = 0.05, corruption_hi = 0.30;
    double test_corruption_rate = 0.0;

    // diffusion schedule
    int T = 50;
    double beta_start = 1e-4, beta_end = 0.02;

    // heatmaps
    double sigma_joint = 2.5;
    double sigma_occluded = 8.0;
    int subdivision = 9;
    std::string occlusion_input = "occluded_joint_heatmap";

    // model dims
    int codec_width = 32;
    std::vector<int64_t> mask_unet_channels{8, 16, 32, 48, 64, 64};
    std::array<int64_t, 3> mask_backbone_channels{32, 48, 64};
    std::array<int64_t, 3> rgb_channels{64, 96, 128};
    int attr_dim = 64;

    // budgets
    int codec_epochs = 20;
    int codec_batch = 16;
    double codec_lr = 2e-3;
    bool mask_use_prior = true;
    bool mask_one_stage = false;
    int mask_iterations = 2000;
    int mask_batch = 16;
    double mask_lr = 1e-3;
    double mask_momentum = 0.9;
    std::string mask_optimizer = "sgd";
    std::string mask_loss = "bce";
    double lambda_bce = 10.0;
    int rgb_epochs = 30;
    int rgb_batch = 32;
    double rgb_lr = 1e-3;
    int feedforward_iterations = 1000;
    double feedforward_lr = 1e-3;

    // decoder fine-tuning
    double finetune_lambda = 100.0;
    int finetune_steps = 50;
    double finetune_lr = 1e-4;

    int ablate_rgb_records = 20;  // records per arm in RGB-side studies

    std::string output_dir = "runs/default";  // not hashed
};

nlohmann::json to_json(const RunConfig& c);
RunConfig run_config_from_json(const nlohmann::json& j);  // missing keys keep defaults, unknown keys are rejected
std::string config_hash(const RunConfig& c);
void validate(const RunConfig& c);

NoiseSchedule schedule_for(const RunConfig& c);
MaskFeatureConfig mask_features_for(const RunConfig& c);
MaskNetOptions mask_options_for(const RunConfig& c);
MaskTrainConfig mask_train_config_for(const RunConfig& c);
RgbNetOptions rgb_options_for(const RunConfig& c);
FinetuneConfig finetune_config_for(const RunConfig& c);

struct RunPaths {
    std::string root;
    std::string data() const;
    std::string split(const std::string& name) const;
    std::string ckpt(const std::string& stage) const;  // codec / mask / rgb
    std::string curve(const std::string& stage) const;
    std::string infer(const std::string& split) const;
    std::string eval(const std::string& split) const;
    std::string ablate(const std::string& study) const;
    std::string arm(const std::string& hash) const;
};
RunPaths paths_for(const RunConfig& c);

// ---- gen-data
struct GenDataSummary {
    int generated = 0;
    int failed = 0;
    double ratio_mean = 0.0;
    std::vector<int> ratio_histogram;  // 20 bins over [0, 1]
};
DatasetRecord make_dataset_record(const RunConfig& c, std::uint64_t index);
GenDataSummary cmd_gen_data(const RunConfig& c);
std::vector<DatasetRecord> load_split(const RunConfig& c, const std::string& split);

// Modal mask the model sees for a record: possibly an inaccurate (expanded) one.
CorruptedMask observed_modal(const RunConfig& c, const DatasetRecord& r, double rate);

// ---- train
enum class Stage { codec, mask, rgb };
Stage parse_stage(const std::string& s);
std::string to_string(Stage s);

struct TrainOutcome {
    std::string checkpoint;
    std::vector<double> curve;
    double seconds = 0.0;
};
// mask: `stop_after` < 0 trains to the budget; otherwise stops (and checkpoints) at that iteration.
TrainOutcome cmd_train(Stage stage, const RunConfig& c, bool resume = false, int stop_after = -1,
                       const std::string& checkpoint_override = "");

// ---- infer
struct InferOutcome {
    int written = 0;
    std::vector<std::pair<std::string, std::string>> failures;
    std::vector<std::vector<double>> objectives;  // per-record fine-tuning objective
    double seconds = 0.0;
};
struct InferOptions {
    std::string split = "test";
    int limit = -1;
    std::string out_dir;  // default: paths.infer(split)
    bool rgb = true;
    std::vector<std::string> only_ids;
};
InferOutcome cmd_infer(const RunConfig& c, const InferOptions& o = {});

// ---- eval
MetricsReport cmd_eval(const RunConfig& c, const std::string& split, const std::string& infer_dir = "",
                       const std::string& out_dir = "");
std::vector<std::string> eval_columns();

// ---- ablate
std::vector<std::string> study_names();
struct AblationRow {
    std::string arm;
    std::map<std::string, std::optional<double>> values;
};
struct AblationTable {
    std::string study;
    std::vector<std::string> columns;
    std::vector<AblationRow> rows;
    std::string footer;
    std::string to_csv() const;
    const AblationRow& row(const std::string& arm) const;
};
// Arm configurations for a study (name, config); exposed so tests can check the grids.
std::vector<std::pair<std::string, RunConfig>> study_arms(const std::string& study, const RunConfig& base);
AblationTable cmd_ablate(const std::string& study, const RunConfig& c);

// ---- manifest
nlohmann::ordered_json run_manifest(const RunConfig& c);
struct VerifyOutcome {
    int checked = 0;
    std::vector<std::string> mismatches;
};
VerifyOutcome verify_manifest(const std::string& infer_dir, int records = 10);

std::string file_digest(const std::string& path);

}  // namespace deocc
