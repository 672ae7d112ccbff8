#include "deocc/experiments.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "deocc/checkpoint.hpp"
#include "deocc/errors.hpp"
#include "deocc/heatmaps.hpp"
#include "deocc/rng.hpp"
#include "deocc/tensor_io.hpp"

namespace fs = std::filesystem;

namespace deocc {

// ---------------------------------------------------------------- config

nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j;
    j["seed"] = c.seed;
    j["train_count"] = c.train_count;
    j["val_count"] = c.val_count;
    j["test_count"] = c.test_count;
    j["canvas_size"] = c.canvas_size;
    j["ratio_mean"] = c.ratio_mean;
    j["ratio_std"] = c.ratio_std;
    j["ratio_lo"] = c.ratio_lo;
    j["ratio_hi"] = c.ratio_hi;
    j["pose_noise_std"] = c.pose_noise_std;
    j["poor_detection_rate"] = c.poor_detection_rate;
    j["corruption_rate"] = c.corruption_rate;
    j["corruption_lo"] = c.corruption_lo;
    j["corruption_hi"] = c.corruption_hi;
    j["test_corruption_rate"] = c.test_corruption_rate;
    j["T"] = c.T;
    j["beta_start"] = c.beta_start;
    j["beta_end"] = c.beta_end;
    j["sigma_joint"] = c.sigma_joint;
    j["sigma_occluded"] = c.sigma_occluded;
    j["subdivision"] = c.subdivision;
    j["occlusion_input"] = c.occlusion_input;
    j["codec_width"] = c.codec_width;
    j["mask_unet_channels"] = c.mask_unet_channels;
    j["mask_backbone_channels"] = c.mask_backbone_channels;
    j["rgb_channels"] = c.rgb_channels;
    j["attr_dim"] = c.attr_dim;
    j["codec_epochs"] = c.codec_epochs;
    j["codec_batch"] = c.codec_batch;
    j["codec_lr"] = c.codec_lr;
    j["mask_use_prior"] = c.mask_use_prior;
    j["mask_one_stage"] = c.mask_one_stage;
    j["mask_iterations"] = c.mask_iterations;
    j["mask_batch"] = c.mask_batch;
    j["mask_lr"] = c.mask_lr;
    j["mask_momentum"] = c.mask_momentum;
    j["mask_optimizer"] = c.mask_optimizer;
    j["mask_loss"] = c.mask_loss;
    j["lambda_bce"] = c.lambda_bce;
    j["rgb_epochs"] = c.rgb_epochs;
    j["rgb_batch"] = c.rgb_batch;
    j["rgb_lr"] = c.rgb_lr;
    j["feedforward_iterations"] = c.feedforward_iterations;
    j["feedforward_lr"] = c.feedforward_lr;
    j["finetune_lambda"] = c.finetune_lambda;
    j["finetune_steps"] = c.finetune_steps;
    j["finetune_lr"] = c.finetune_lr;
    j["ablate_rgb_records"] = c.ablate_rgb_records;
    j["output_dir"] = c.output_dir;
    return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig c;
    const auto known = to_json(c);
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.contains(it.key())) throw ConfigError("unknown config field '" + it.key() + "'");
    auto merged = known;
    merged.update(j);
    try {
        c.seed = merged.at("seed");
        c.train_count = merged.at("train_count");
        c.val_count = merged.at("val_count");
        c.test_count = merged.at("test_count");
        c.canvas_size = merged.at("canvas_size");
        c.ratio_mean = merged.at("ratio_mean");
        c.ratio_std = merged.at("ratio_std");
        c.ratio_lo = merged.at("ratio_lo");
        c.ratio_hi = merged.at("ratio_hi");
        c.pose_noise_std = merged.at("pose_noise_std");
        c.poor_detection_rate = merged.at("poor_detection_rate");
        c.corruption_rate = merged.at("corruption_rate");
        c.corruption_lo = merged.at("corruption_lo");
        c.corruption_hi = merged.at("corruption_hi");
        c.test_corruption_rate = merged.at("test_corruption_rate");
        c.T = merged.at("T");
        c.beta_start = merged.at("beta_start");
        c.beta_end = merged.at("beta_end");
        c.sigma_joint = merged.at("sigma_joint");
        c.sigma_occluded = merged.at("sigma_occluded");
        c.subdivision = merged.at("subdivision");
        c.occlusion_input = merged.at("occlusion_input");
        c.codec_width = merged.at("codec_width");
        c.mask_unet_channels = merged.at("mask_unet_channels").get<std::vector<int64_t>>();
        c.mask_backbone_channels = merged.at("mask_backbone_channels").get<std::array<int64_t, 3>>();
        c.rgb_channels = merged.at("rgb_channels").get<std::array<int64_t, 3>>();
        c.attr_dim = merged.at("attr_dim");
        c.codec_epochs = merged.at("codec_epochs");
        c.codec_batch = merged.at("codec_batch");
        c.codec_lr = merged.at("codec_lr");
        c.mask_use_prior = merged.at("mask_use_prior");
        c.mask_one_stage = merged.at("mask_one_stage");
        c.mask_iterations = merged.at("mask_iterations");
        c.mask_batch = merged.at("mask_batch");
        c.mask_lr = merged.at("mask_lr");
        c.mask_momentum = merged.at("mask_momentum");
        c.mask_optimizer = merged.at("mask_optimizer");
        c.mask_loss = merged.at("mask_loss");
        c.lambda_bce = merged.at("lambda_bce");
        c.rgb_epochs = merged.at("rgb_epochs");
        c.rgb_batch = merged.at("rgb_batch");
        c.rgb_lr = merged.at("rgb_lr");
        c.feedforward_iterations = merged.at("feedforward_iterations");
        c.feedforward_lr = merged.at("feedforward_lr");
        c.finetune_lambda = merged.at("finetune_lambda");
        c.finetune_steps = merged.at("finetune_steps");
        c.finetune_lr = merged.at("finetune_lr");
        c.ablate_rgb_records = merged.at("ablate_rgb_records");
        c.output_dir = merged.at("output_dir");
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
    return c;
}

namespace {

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

std::string hash_json(nlohmann::json j) {
    j.erase("output_dir");
    return hex64(fnv1a64(j.dump()));
}

// Fields that do not influence the stage-one network. Two configs with equal
// mask keys share a mask checkpoint.
std::string mask_stage_hash(const RunConfig& c) {
    RunConfig d;
    auto j = to_json(c);
    for (const char* k : {"val_count", "test_count", "test_corruption_rate", "rgb_channels", "attr_dim", "rgb_epochs",
                          "rgb_batch", "rgb_lr", "feedforward_iterations", "feedforward_lr", "finetune_lambda",
                          "finetune_steps", "finetune_lr", "ablate_rgb_records"})
        j[k] = to_json(d)[k];
    return hash_json(j);
}

}  // namespace

std::string config_hash(const RunConfig& c) { return hash_json(to_json(c)); }

void validate(const RunConfig& c) {
    auto need = [](bool ok, const std::string& what) {
        if (!ok) throw ConfigError("invalid config: " + what);
    };
    need(c.train_count >= 1 && c.val_count >= 0 && c.test_count >= 1, "split sizes");
    need(c.canvas_size >= 32 && c.canvas_size % 8 == 0, "canvas_size must be >= 32 and divisible by 8");
    need(c.ratio_lo >= 0 && c.ratio_lo < c.ratio_hi && c.ratio_hi < 1, "ratio bounds");
    need(c.ratio_std > 0, "ratio_std");
    need(c.poor_detection_rate >= 0 && c.poor_detection_rate <= 1, "poor_detection_rate");
    need(c.corruption_rate >= 0 && c.corruption_rate <= 1 && c.test_corruption_rate >= 0 &&
             c.test_corruption_rate <= 1,
         "corruption rates");
    need(c.corruption_lo > 0 && c.corruption_lo <= c.corruption_hi, "corruption bounds");
    need(c.codec_width >= 16 && c.codec_width % 16 == 0, "codec_width must be a positive multiple of 16");
    // priors enter down to latent/4 = canvas/32, five halvings below the input
    need(c.mask_unet_channels.size() >= 6, "mask_unet_channels needs at least 6 levels");
    need(c.T >= 1, "T");
    need(c.sigma_joint > 0 && c.sigma_occluded >= 0, "sigmas");
    need(c.subdivision >= 0, "subdivision");
    (void)parse_occlusion_input_kind(c.occlusion_input);
    need(c.mask_optimizer == "sgd" || c.mask_optimizer == "adam", "mask_optimizer");
    need(c.mask_loss == "bce" || c.mask_loss == "ce", "mask_loss");
    need(c.codec_epochs >= 1 && c.mask_iterations >= 1 && c.rgb_epochs >= 1, "budgets");
    need(c.finetune_steps >= 0 && c.finetune_lambda >= 0, "fine-tuning");
}

NoiseSchedule schedule_for(const RunConfig& c) { return make_schedule(c.T, c.beta_start, c.beta_end); }

MaskFeatureConfig mask_features_for(const RunConfig& c) {
    MaskFeatureConfig f;
    f.sigma_joint = c.sigma_joint;
    f.sigma_occluded = c.sigma_occluded;
    f.subdivision = c.subdivision;
    f.input_kind = parse_occlusion_input_kind(c.occlusion_input);
    f.h2d_resolution = c.canvas_size / 2;
    return f;
}

MaskTrainConfig mask_train_config_for(const RunConfig& c) {
    MaskTrainConfig t;
    t.iterations = c.mask_iterations;
    t.batch_size = c.mask_batch;
    t.lr = c.mask_lr;
    t.momentum = c.mask_momentum;
    t.optimizer = c.mask_optimizer;
    t.loss = c.mask_loss;
    t.lambda_bce = c.lambda_bce;
    t.seed = derive_seed(c.seed, "mask_train");
    return t;
}

MaskNetOptions mask_options_for(const RunConfig& c) {
    MaskNetOptions o;
    o.use_prior = c.mask_use_prior;
    o.image_resolution = c.canvas_size;
    o.latent_resolution = c.canvas_size / 8;
    o.h2d_resolution = c.canvas_size / 2;
    o.backbone_channels = c.mask_backbone_channels;
    o.unet_channels = c.mask_unet_channels;
    o.one_stage = c.mask_one_stage;
    return mask_options_for(o, mask_train_config_for(c));
}

RgbNetOptions rgb_options_for(const RunConfig& c) {
    RgbNetOptions o;
    o.image_resolution = c.canvas_size;
    o.latent_resolution = c.canvas_size / 8;
    o.channels = c.rgb_channels;
    o.attr_dim = c.attr_dim;
    return o;
}

FinetuneConfig finetune_config_for(const RunConfig& c) {
    FinetuneConfig f;
    f.lambda_vis = c.finetune_lambda;
    f.steps = c.finetune_steps;
    f.lr = c.finetune_lr;
    return f;
}

std::string RunPaths::data() const { return (fs::path(root) / "data").string(); }
std::string RunPaths::split(const std::string& name) const { return (fs::path(data()) / name).string(); }
std::string RunPaths::ckpt(const std::string& stage) const { return (fs::path(root) / "ckpt" / (stage + ".pt")).string(); }
std::string RunPaths::curve(const std::string& stage) const {
    return (fs::path(root) / "ckpt" / (stage + "_curve.csv")).string();
}
std::string RunPaths::infer(const std::string& split) const { return (fs::path(root) / "infer" / split).string(); }
std::string RunPaths::eval(const std::string& split) const { return (fs::path(root) / "eval" / split).string(); }
std::string RunPaths::ablate(const std::string& study) const { return (fs::path(root) / "ablate" / study).string(); }
std::string RunPaths::arm(const std::string& hash) const { return (fs::path(root) / "arms" / hash).string(); }

RunPaths paths_for(const RunConfig& c) { return {c.output_dir}; }

std::string file_digest(const std::string& path) { return hex64(fnv1a64(read_text(path))); }

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Wall-clock lives apart from the manifest so that manifests stay byte-stable.
void record_timing(const RunConfig& c, const std::string& stage, double seconds) {
    const auto path = (fs::path(c.output_dir) / "timing.json").string();
    nlohmann::json j = nlohmann::json::object();
    if (fs::exists(path)) j = nlohmann::json::parse(read_text(path));
    j[stage] = seconds;
    write_text(path, j.dump(2) + "\n");
}

void write_curve(const std::string& path, const std::string& x_name, const std::vector<double>& ys, int x0 = 1) {
    std::ostringstream os;
    os << x_name << ",loss\n" << std::setprecision(17);
    for (std::size_t i = 0; i < ys.size(); ++i) os << x0 + static_cast<int>(i) << "," << ys[i] << "\n";
    write_text(path, os.str());
}

}  // namespace

// ---------------------------------------------------------------- data

namespace {

constexpr std::uint64_t kSplitStride = 10'000'000;

std::uint64_t split_base(const std::string& split) {
    if (split == "train") return 0;
    if (split == "val") return kSplitStride;
    if (split == "test") return 2 * kSplitStride;
    throw ConfigError("unknown split '" + split + "'");
}

int split_count(const RunConfig& c, const std::string& split) {
    if (split == "train") return c.train_count;
    if (split == "val") return c.val_count;
    return c.test_count;
}

std::string record_id(std::uint64_t index) {
    std::ostringstream os;
    os << "r" << std::setw(8) << std::setfill('0') << index;
    return os.str();
}

}  // namespace

DatasetRecord make_dataset_record(const RunConfig& c, std::uint64_t index) {
    SceneConfig sc;
    sc.figure.canvas_size = c.canvas_size;
    sc.occlusion.ratio_mean = c.ratio_mean;
    sc.occlusion.ratio_std = c.ratio_std;
    sc.occlusion.ratio_lo = c.ratio_lo;
    sc.occlusion.ratio_hi = c.ratio_hi;
    DatasetRecord r;
    r.id = record_id(index);
    r.index = index;
    r.scene = generate_scene(derive_seed(c.seed, "scene", index), sc);
    Rng rng(derive_seed(c.seed, "pose_detection", index));
    r.joints_detected = simulate_pose_detection(r.scene.joints, c.pose_noise_std, c.poor_detection_rate, rng,
                                                &r.poor_detection);
    return r;
}

CorruptedMask observed_modal(const RunConfig& c, const DatasetRecord& r, double rate) {
    Rng rng(derive_seed(c.seed, "modal_corruption", r.index));
    return corrupt_modal_mask(r.scene.mask_modal, rate, c.corruption_lo, c.corruption_hi, rng);
}

GenDataSummary cmd_gen_data(const RunConfig& c) {
    validate(c);
    const auto t0 = std::chrono::steady_clock::now();
    const auto P = paths_for(c);
    GenDataSummary sum;
    sum.ratio_histogram.assign(20, 0);
    double ratio_sum = 0.0;
    nlohmann::ordered_json failures = nlohmann::ordered_json::array();
    nlohmann::ordered_json splits;
    for (const std::string split : {"train", "val", "test"}) {
        const int want = split_count(c, split);
        const auto dir = P.split(split);
        if (fs::exists(dir)) fs::remove_all(dir);
        fs::create_directories(dir);
        int got = 0, failed = 0;
        for (std::uint64_t k = 0; got < want; ++k) {
            const auto index = split_base(split) + k;
            try {
                const auto r = make_dataset_record(c, index);
                write_record(dir, r);
                ++got;
                ratio_sum += r.scene.occlusion_ratio;
                ++sum.ratio_histogram[std::min(19, static_cast<int>(r.scene.occlusion_ratio * 20.0))];
            } catch (const GenerationError& e) {
                ++failed;
                failures.push_back({{"split", split}, {"index", index}, {"error", e.what()}});
                std::cerr << "gen-data: " << split << " index " << index << ": " << e.what() << "\n";
            }
            if (failed > 0 && failed > 0.05 * static_cast<double>(got + failed) && got + failed >= 100)
                throw GenerationError("more than 5% of " + split + " records failed", index);
        }
        sum.generated += got;
        sum.failed += failed;
        splits[split] = {{"records", got}, {"failures", failed}};
    }
    sum.ratio_mean = ratio_sum / std::max(1, sum.generated);
    nlohmann::ordered_json j;
    j["config_hash"] = config_hash(c);
    j["generator_version"] = kGeneratorVersion;
    j["splits"] = splits;
    j["ratio_mean"] = sum.ratio_mean;
    j["ratio_histogram_bins"] = 20;
    j["ratio_histogram"] = sum.ratio_histogram;
    j["failures"] = failures;
    write_text((fs::path(P.data()) / "summary.json").string(), j.dump(2) + "\n");
    record_timing(c, "gen_data", seconds_since(t0));
    return sum;
}

std::vector<DatasetRecord> load_split(const RunConfig& c, const std::string& split) {
    const auto dir = paths_for(c).split(split);
    std::vector<DatasetRecord> out;
    for (const auto& id : list_record_ids(dir)) out.push_back(read_record(dir, id));
    return out;
}

// ---------------------------------------------------------------- inference context

namespace {

// Everything stage one and two may look at. No ground-truth amodal fields.
struct InferenceInput {
    std::string id;
    std::uint64_t index = 0;
    Image i_o;
    Mask m_m;
    JointSet joints;
    Attributes attributes;
};

InferenceInput inference_input(const RunConfig& c, const DatasetRecord& r, double corruption_rate) {
    return {r.id, r.index, r.scene.image_occluded, observed_modal(c, r, corruption_rate).mask, r.joints_detected,
            r.scene.attributes};
}

MaskSample mask_sample_for(const InferenceInput& in, const MaskFeatureConfig& fc, const CodecParams& codec) {
    return build_mask_sample(in.i_o, in.m_m, in.joints, fc, codec);
}

std::vector<MaskSample> training_mask_samples(const RunConfig& c, const std::vector<DatasetRecord>& recs,
                                              const CodecParams& codec, bool image_targets) {
    const auto fc = mask_features_for(c);
    std::vector<MaskSample> out;
    out.reserve(recs.size());
    for (const auto& r : recs) {
        auto s = mask_sample_for(inference_input(c, r, c.corruption_rate), fc, codec);
        s.target = to_tensor(r.scene.mask_amodal_gt);
        if (image_targets) s.image_target = to_tensor(r.scene.image_gt);
        out.push_back(std::move(s));
    }
    return out;
}

std::uint64_t z_seed_for(const RunConfig& c, std::uint64_t index) { return derive_seed(c.seed, "z_T", index); }

struct StageModels {
    CodecParams codec;
    MaskNet mask{nullptr};
    MaskFeatureConfig features;
    RgbNet rgb{nullptr};
};

void require_file(const std::string& path, const std::string& what) {
    if (!fs::exists(path)) throw ConfigError(what + " checkpoint missing: " + path);
}

}  // namespace

// ---------------------------------------------------------------- train

Stage parse_stage(const std::string& s) {
    if (s == "codec") return Stage::codec;
    if (s == "mask") return Stage::mask;
    if (s == "rgb") return Stage::rgb;
    throw ConfigError("unknown stage '" + s + "'");
}

std::string to_string(Stage s) {
    switch (s) {
        case Stage::codec:
            return "codec";
        case Stage::mask:
            return "mask";
        case Stage::rgb:
            return "rgb";
    }
    return "?";
}

namespace {

std::vector<double> read_curve(const std::string& path) {
    std::vector<double> ys;
    if (!fs::exists(path)) return ys;
    std::istringstream is(read_text(path));
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) ys.push_back(std::stod(line.substr(line.find(',') + 1)));
    return ys;
}

TrainOutcome train_codec_stage(const RunConfig& c) {
    const auto P = paths_for(c);
    const auto recs = load_split(c, "train");
    std::vector<SceneRecord> scenes;
    for (const auto& r : recs) scenes.push_back(r.scene);
    CodecOptions o;
    o.width = c.codec_width;
    CodecTrainConfig t;
    t.epochs = c.codec_epochs;
    t.batch_size = c.codec_batch;
    t.lr = c.codec_lr;
    t.seed = derive_seed(c.seed, "codec_train");
    auto res = train_codec(scenes, o, t);
    save_codec(P.ckpt("codec"), res.params, config_hash(c));
    write_curve(P.curve("codec"), "epoch", res.epoch_losses);
    return {P.ckpt("codec"), res.epoch_losses, 0.0};
}

TrainOutcome train_mask_stage(const RunConfig& c, bool resume, int stop_after, const std::string& path) {
    const auto P = paths_for(c);
    require_file(P.ckpt("codec"), "codec");
    const auto codec = load_codec(P.ckpt("codec"));
    const auto recs = load_split(c, "train");
    const auto data = training_mask_samples(c, recs, codec, c.mask_one_stage);
    const auto tc = mask_train_config_for(c);
    const auto fc = mask_features_for(c);
    const auto curve_path = path.substr(0, path.size() - 3) + "_curve.csv";
    MaskNet net{nullptr};
    MaskTrainState state;
    std::unique_ptr<torch::optim::Optimizer> opt;
    if (resume && fs::exists(path)) {
        auto loaded = load_mask_net(path);
        if (loaded.meta.value("mask_hash", "") != mask_stage_hash(c))
            throw ConfigError("cannot resume: checkpoint was trained with a different configuration");
        net = loaded.net;
        state = loaded.state;
        opt = make_mask_optimizer(net, tc);
        load_optimizer_state(path, *opt);
        const auto prev = read_curve(curve_path);
        for (int i = 0; i < state.iteration && i < static_cast<int>(prev.size()); ++i) state.curve.push_back({i, prev[i]});
    } else {
        net = make_mask_net(mask_options_for(c), derive_seed(c.seed, "mask_net"));
        opt = make_mask_optimizer(net, tc);
    }
    const int until = stop_after >= 0 ? std::min(stop_after, tc.iterations) : tc.iterations;
    try {
        train_mask_net(net, *opt, data, tc, state, until);
    } catch (const TrainingError&) {
        std::vector<double> ys;
        for (const auto& p : state.curve) ys.push_back(p.loss);
        write_curve(curve_path, "iteration", ys, 0);
        throw;
    }
    save_mask_net(path, net, opt.get(), state, fc, tc, config_hash(c));
    // stamp the stage key so ablation arms can share checkpoints
    {
        auto meta = read_checkpoint_meta(path);
        meta["mask_hash"] = mask_stage_hash(c);
        save_checkpoint(path, {{"net", net.ptr().get()}}, meta, opt.get());
    }
    std::vector<double> ys;
    for (const auto& p : state.curve) ys.push_back(p.loss);
    write_curve(curve_path, "iteration", ys, 0);
    return {path, ys, 0.0};
}

std::vector<RgbSample> training_rgb_samples(const std::vector<DatasetRecord>& recs, const CodecParams& codec) {
    std::vector<RgbSample> out;
    out.reserve(recs.size());
    for (const auto& r : recs)
        out.push_back(build_rgb_sample(r.scene.image_occluded, r.scene.mask_modal, to_tensor(r.scene.mask_amodal_gt),
                                       r.scene.attributes, codec, &r.scene.image_gt));
    return out;
}

TrainOutcome train_rgb_stage(const RunConfig& c) {
    const auto P = paths_for(c);
    require_file(P.ckpt("codec"), "codec");
    const auto codec = load_codec(P.ckpt("codec"));
    const auto data = training_rgb_samples(load_split(c, "train"), codec);
    auto net = make_rgb_net(rgb_options_for(c), derive_seed(c.seed, "rgb_net"));
    RgbTrainConfig t;
    t.epochs = c.rgb_epochs;
    t.batch_size = c.rgb_batch;
    t.lr = c.rgb_lr;
    t.seed = derive_seed(c.seed, "rgb_train");
    const auto losses = train_rgb_net(net, data, schedule_for(c), t);
    save_rgb_net(P.ckpt("rgb"), net, {{"config_hash", config_hash(c)}, {"epoch_losses", losses}});
    write_curve(P.curve("rgb"), "epoch", losses);
    return {P.ckpt("rgb"), losses, 0.0};
}

}  // namespace

TrainOutcome cmd_train(Stage stage, const RunConfig& c, bool resume, int stop_after,
                       const std::string& checkpoint_override) {
    validate(c);
    const auto t0 = std::chrono::steady_clock::now();
    TrainOutcome out;
    switch (stage) {
        case Stage::codec:
            out = train_codec_stage(c);
            break;
        case Stage::mask:
            out = train_mask_stage(c, resume, stop_after,
                                   checkpoint_override.empty() ? paths_for(c).ckpt("mask") : checkpoint_override);
            break;
        case Stage::rgb:
            out = train_rgb_stage(c);
            break;
    }
    out.seconds = seconds_since(t0);
    if (checkpoint_override.empty()) record_timing(c, "train_" + to_string(stage), out.seconds);
    return out;
}

// ---------------------------------------------------------------- manifest

nlohmann::ordered_json run_manifest(const RunConfig& c) {
    const auto P = paths_for(c);
    nlohmann::ordered_json m;
    m["artifact_version"] = kArtifactVersion;
    m["config_hash"] = config_hash(c);
    auto cfg = to_json(c);
    cfg.erase("output_dir");
    m["config"] = cfg;
    nlohmann::ordered_json ck;
    for (const char* s : {"codec", "mask", "rgb"})
        ck[s] = fs::exists(P.ckpt(s)) ? nlohmann::ordered_json(file_digest(P.ckpt(s))) : nlohmann::ordered_json();
    m["checkpoints"] = ck;
    nlohmann::ordered_json seeds;
    seeds["global"] = c.seed;
    for (const char* s : {"scene", "pose_detection", "modal_corruption", "z_T"})
        seeds[s] = "derive_seed(global, \"" + std::string(s) + "\", record index)";
    for (const char* s : {"codec_train", "mask_net", "mask_train", "rgb_net", "rgb_train", "feedforward"})
        seeds[s] = derive_seed(c.seed, s);
    m["seeds"] = seeds;
    return m;
}

// ---------------------------------------------------------------- infer

namespace {

StageModels load_models(const RunConfig& c, bool with_rgb, const std::string& mask_path = "") {
    const auto P = paths_for(c);
    StageModels m;
    require_file(P.ckpt("codec"), "codec");
    m.codec = load_codec(P.ckpt("codec"));
    const auto mp = mask_path.empty() ? P.ckpt("mask") : mask_path;
    require_file(mp, "mask");
    auto lm = load_mask_net(mp);
    m.mask = lm.net;
    m.mask->eval();
    m.features = lm.features;
    if (with_rgb) {
        require_file(P.ckpt("rgb"), "rgb");
        m.rgb = load_rgb_net(P.ckpt("rgb"));
        m.rgb->eval();
    }
    return m;
}

torch::Tensor predict_one(StageModels& m, const MaskSample& s) {
    torch::NoGradGuard g;
    return m.mask->forward(collate({&s}));  // [1, 1, H, W]
}

}  // namespace

InferOutcome cmd_infer(const RunConfig& c, const InferOptions& o) {
    validate(c);
    const auto t0 = std::chrono::steady_clock::now();
    const auto P = paths_for(c);
    auto models = load_models(c, o.rgb);
    if (models.mask->opts.one_stage) throw ConfigError("infer expects a two-stage mask checkpoint");
    const auto out_dir = o.out_dir.empty() ? P.infer(o.split) : o.out_dir;
    fs::create_directories(out_dir);
    const auto split_dir = P.split(o.split);
    auto ids = list_record_ids(split_dir);
    if (!o.only_ids.empty()) {
        std::set<std::string> keep(o.only_ids.begin(), o.only_ids.end());
        std::erase_if(ids, [&](const std::string& id) { return !keep.count(id); });
    }
    if (o.limit >= 0 && static_cast<int>(ids.size()) > o.limit) ids.resize(static_cast<std::size_t>(o.limit));
    const auto sched = schedule_for(c);
    const auto ft = finetune_config_for(c);
    InferOutcome res;
    std::ostringstream objectives;
    objectives << std::setprecision(17);
    nlohmann::ordered_json done = nlohmann::ordered_json::array();
    for (const auto& id : ids) {
        try {
            const auto rec = read_record(split_dir, id);
            const auto in = inference_input(c, rec, c.test_corruption_rate);
            const auto ms = mask_sample_for(in, models.features, models.codec);
            auto m_a = predict_one(models, ms);
            const auto base = (fs::path(out_dir) / id).string();
            write_png(base + "_m_a.png", to_float_map(m_a[0]));
            if (o.rgb) {
                auto rs = build_rgb_sample(in.i_o, in.m_m, m_a[0], in.attributes, models.codec);
                auto r = complete_rgb(models.rgb, models.codec, sched, rs, to_tensor(in.i_o).unsqueeze(0),
                                      to_tensor(in.m_m).unsqueeze(0), ft, z_seed_for(c, in.index));
                write_png(base + "_i_do.png", to_image(r.i_do[0]));
                write_png(base + "_i_do_star.png", to_image(r.i_do_star[0]));
                objectives << id;
                for (double v : r.finetune_objective) objectives << "," << v;
                objectives << "\n";
                res.objectives.push_back(r.finetune_objective);
            }
            done.push_back(id);
            ++res.written;
        } catch (const std::exception& e) {
            res.failures.emplace_back(id, e.what());
            std::cerr << "infer: " << id << ": " << e.what() << "\n";
        }
    }
    auto manifest = run_manifest(c);
    manifest["split"] = o.split;
    manifest["rgb"] = o.rgb;
    manifest["records"] = done;
    write_text((fs::path(out_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
    if (o.rgb) write_text((fs::path(out_dir) / "finetune_objective.csv").string(), objectives.str());
    nlohmann::ordered_json fj = nlohmann::ordered_json::array();
    for (const auto& [id, msg] : res.failures) fj.push_back({{"record", id}, {"error", msg}});
    write_text((fs::path(out_dir) / "failures.json").string(), fj.dump(2) + "\n");
    res.seconds = seconds_since(t0);
    if (o.out_dir.empty()) record_timing(c, "infer_" + o.split, res.seconds);
    return res;
}

// ---------------------------------------------------------------- eval

std::vector<std::string> eval_columns() {
    return {"miou",          "miou_inv",      "mask_l1",        "l1_whole",      "mse_whole",   "psnr_whole",
            "l1_visible",    "mse_visible",   "psnr_visible",   "l1_invisible",  "mse_invisible", "psnr_invisible",
            "raw_l1_visible", "raw_l1_whole", "raw_psnr_invisible"};
}

namespace {

void add_pixel_columns(RecordMetrics& rm, const std::string& prefix, const Image& pred, const SceneRecord& s,
                       bool full) {
    for (Region reg : {Region::whole, Region::visible, Region::invisible}) {
        const auto name = to_string(reg);
        const auto sc = pixel_metrics(pred, s.image_gt, reg, s.mask_modal, s.mask_amodal_gt);
        const std::vector<std::pair<std::string, double>> cols =
            sc ? std::vector<std::pair<std::string, double>>{{"l1_", sc->l1}, {"mse_", sc->mse}, {"psnr_", sc->psnr}}
               : std::vector<std::pair<std::string, double>>{{"l1_", 0}, {"mse_", 0}, {"psnr_", 0}};
        for (const auto& [k, v] : cols) {
            const auto col = prefix + k + name;
            if (!full && col != "raw_l1_visible" && col != "raw_l1_whole" && col != "raw_psnr_invisible") continue;
            if (sc)
                rm.values[col] = v;
            else
                rm.skipped[col] = "empty " + name + " region";
        }
    }
}

}  // namespace

MetricsReport cmd_eval(const RunConfig& c, const std::string& split, const std::string& infer_dir,
                       const std::string& out_dir) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto P = paths_for(c);
    const auto in_dir = infer_dir.empty() ? P.infer(split) : infer_dir;
    const auto dst = out_dir.empty() ? P.eval(split) : out_dir;
    const auto split_dir = P.split(split);
    std::vector<RecordMetrics> rows;
    const auto cols = eval_columns();
    for (const auto& id : list_record_ids(split_dir)) {
        const auto rec = read_record(split_dir, id);
        const auto& s = rec.scene;
        RecordMetrics rm;
        rm.record_id = id;
        const auto base = (fs::path(in_dir) / id).string();
        if (fs::exists(base + "_m_a.png")) {
            const auto probs = read_png_map(base + "_m_a.png");
            const auto pred = binarize(probs);
            rm.values["miou"] = iou(pred, s.mask_amodal_gt);
            if (auto v = iou_inv(pred, s.mask_amodal_gt, s.mask_modal))
                rm.values["miou_inv"] = *v;
            else
                rm.skipped["miou_inv"] = "no occluded amodal pixels";
            rm.values["mask_l1"] = mask_l1(probs, s.mask_amodal_gt);
        } else {
            for (const char* k : {"miou", "miou_inv", "mask_l1"}) rm.skipped[k] = "missing output";
        }
        if (fs::exists(base + "_i_do_star.png"))
            add_pixel_columns(rm, "", read_png_image(base + "_i_do_star.png"), s, true);
        else
            for (const auto& k : cols)
                if (k.rfind("l1_", 0) == 0 || k.rfind("mse_", 0) == 0 || k.rfind("psnr_", 0) == 0)
                    rm.skipped[k] = "missing output";
        if (fs::exists(base + "_i_do.png"))
            add_pixel_columns(rm, "raw_", read_png_image(base + "_i_do.png"), s, false);
        else
            for (const char* k : {"raw_l1_visible", "raw_l1_whole", "raw_psnr_invisible"}) rm.skipped[k] = "missing output";
        rows.push_back(std::move(rm));
    }
    auto report = aggregate(rows, cols);
    std::string mh = "none";
    if (fs::exists((fs::path(in_dir) / "manifest.json").string())) mh = file_digest((fs::path(in_dir) / "manifest.json").string());
    write_text((fs::path(dst) / "per_record.csv").string(), per_record_csv(report, mh));
    write_text((fs::path(dst) / "aggregate.json").string(), aggregate_json(report, mh));
    if (out_dir.empty()) record_timing(c, "eval_" + split, seconds_since(t0));
    return report;
}

// ---------------------------------------------------------------- ablate

std::vector<std::string> study_names() {
    return {"sigma2_sweep",   "subdiv_sweep",     "input_variant",  "prior_components",
            "loss_optimizer", "one_vs_two_stage", "finetune_steps", "mask_corruption"};
}

std::string AblationTable::to_csv() const {
    std::ostringstream os;
    os << std::setprecision(6) << std::fixed;
    os << "arm";
    for (const auto& c : columns) os << "," << c;
    os << "\n";
    for (const auto& r : rows) {
        os << r.arm;
        for (const auto& c : columns) {
            os << ",";
            if (auto it = r.values.find(c); it != r.values.end() && it->second) os << *it->second;
        }
        os << "\n";
    }
    if (!footer.empty()) os << "# " << footer << "\n";
    return os.str();
}

const AblationRow& AblationTable::row(const std::string& arm) const {
    for (const auto& r : rows)
        if (r.arm == arm) return r;
    throw ContractError("no arm '" + arm + "' in study " + study);
}

std::vector<std::pair<std::string, RunConfig>> study_arms(const std::string& study, const RunConfig& base) {
    std::vector<std::pair<std::string, RunConfig>> arms;
    auto fmt = [](double v) {
        std::ostringstream os;
        os << v;
        return os.str();
    };
    if (study == "sigma2_sweep") {
        for (double s : {0.0, 4.0, 8.0, 16.0, 32.0}) {
            auto c = base;
            c.sigma_occluded = s;
            arms.emplace_back("sigma2=" + fmt(s), c);
        }
    } else if (study == "subdiv_sweep") {
        for (int s : {0, 1, 3, 5, 7, 9, 11, 13}) {
            auto c = base;
            c.subdivision = s;
            arms.emplace_back("s=" + std::to_string(s), c);
        }
    } else if (study == "input_variant") {
        for (const char* k : {"occluded_joint_mask", "whole_joint_heatmap", "occluded_joint_heatmap"}) {
            auto c = base;
            c.occlusion_input = k;
            arms.emplace_back(k, c);
        }
    } else if (study == "prior_components") {
        auto c1 = base;
        c1.mask_use_prior = false;
        c1.sigma_occluded = 0.0;
        auto c2 = base;
        c2.mask_use_prior = true;
        c2.sigma_occluded = 0.0;
        auto c3 = base;
        c3.mask_use_prior = true;
        c3.subdivision = 0;
        auto c4 = base;
        c4.mask_use_prior = true;
        arms = {{"#1 none", c1}, {"#2 +F,T", c2}, {"#3 +H_o", c3}, {"#4 +J_sub", c4}};
    } else if (study == "loss_optimizer") {
        for (const char* loss : {"bce", "ce"})
            for (const char* opt : {"sgd", "adam"}) {
                auto c = base;
                c.mask_loss = loss;
                c.mask_optimizer = opt;
                arms.emplace_back(std::string(loss) + "+" + opt, c);
            }
    } else if (study == "one_vs_two_stage") {
        auto c1 = base;
        c1.mask_one_stage = true;
        arms = {{"one_stage", c1}, {"two_stage_feedforward", base}, {"two_stage_diffusion", base}};
    } else if (study == "finetune_steps") {
        for (int s : {0, 10, 30, 50, 70, 100, 150, 200}) {
            auto c = base;
            c.finetune_steps = s;
            arms.emplace_back("steps=" + std::to_string(s), c);
        }
    } else if (study == "mask_corruption") {
        auto am = base;
        am.corruption_rate = 0.0;
        am.test_corruption_rate = 1.0;
        auto iam = am;
        iam.corruption_rate = 0.1;
        arms = {{"AM", am}, {"AM+IAM", iam}};
    } else {
        throw ConfigError("unknown study '" + study + "'");
    }
    return arms;
}

namespace {

// Mask checkpoint for an arm: the base checkpoint when the stage key matches, else trained once per key.
std::string ensure_mask_arm(const RunConfig& arm, const RunConfig& base) {
    const auto P = paths_for(base);
    const auto key = mask_stage_hash(arm);
    if (key == mask_stage_hash(base) && fs::exists(P.ckpt("mask")) &&
        read_checkpoint_meta(P.ckpt("mask")).value("mask_hash", "") == key)
        return P.ckpt("mask");
    const auto path = (fs::path(P.arm(key)) / "mask.pt").string();
    if (fs::exists(path) && read_checkpoint_meta(path).value("mask_hash", "") == key &&
        read_checkpoint_meta(path).value("iteration", -1) == arm.mask_iterations)
        return path;
    write_text((fs::path(P.arm(key)) / "config.json").string(), to_json(arm).dump(2) + "\n");
    std::cerr << "ablate: training mask arm " << key << "\n";
    cmd_train(Stage::mask, arm, true, -1, path);
    return path;
}

struct MaskScores {
    std::optional<double> miou, miou_inv, mask_l1;
};

std::map<std::string, std::optional<double>> mean_columns(const std::vector<RecordMetrics>& rows,
                                                          const std::vector<std::string>& cols) {
    auto rep = aggregate(rows, cols);
    std::map<std::string, std::optional<double>> out;
    for (const auto& c : cols) out[c] = rep.summary.at(c).mean;
    return out;
}

void mask_metrics_into(RecordMetrics& rm, const torch::Tensor& prob, const SceneRecord& s) {
    const auto probs = to_float_map(prob);
    const auto pred = binarize(probs);
    rm.values["miou"] = iou(pred, s.mask_amodal_gt);
    if (auto v = iou_inv(pred, s.mask_amodal_gt, s.mask_modal)) rm.values["miou_inv"] = *v;
    rm.values["mask_l1"] = mask_l1(probs, s.mask_amodal_gt);
}

void pixel_metrics_into(RecordMetrics& rm, const torch::Tensor& img, const SceneRecord& s) {
    auto pred = to_image(img);
    quantize_u8(pred);
    for (Region reg : {Region::whole, Region::visible, Region::invisible})
        if (auto sc = pixel_metrics(pred, s.image_gt, reg, s.mask_modal, s.mask_amodal_gt)) {
            rm.values["l1_" + to_string(reg)] = sc->l1;
            rm.values["psnr_" + to_string(reg)] = sc->psnr;
        }
}

// Per-record mask predictions of a mask checkpoint on the test split.
std::vector<RecordMetrics> evaluate_mask_arm(const RunConfig& arm, const std::string& ckpt,
                                             const std::vector<DatasetRecord>& test, const CodecParams& codec,
                                             std::vector<torch::Tensor>* probs_out = nullptr,
                                             std::vector<torch::Tensor>* rgb_out = nullptr) {
    auto lm = load_mask_net(ckpt);
    lm.net->eval();
    std::vector<MaskSample> samples;
    for (const auto& r : test) samples.push_back(mask_sample_for(inference_input(arm, r, arm.test_corruption_rate), lm.features, codec));
    torch::Tensor rgb;
    auto probs = predict_masks(lm.net, samples, 32, lm.net->opts.one_stage ? &rgb : nullptr);
    std::vector<RecordMetrics> rows;
    for (std::size_t i = 0; i < test.size(); ++i) {
        RecordMetrics rm;
        rm.record_id = test[i].id;
        mask_metrics_into(rm, probs[static_cast<int64_t>(i)], test[i].scene);
        if (probs_out) probs_out->push_back(probs[static_cast<int64_t>(i)]);
        if (rgb_out && rgb.defined()) rgb_out->push_back(rgb[static_cast<int64_t>(i)]);
        rows.push_back(std::move(rm));
    }
    return rows;
}

AblationTable ablate_masks(const std::string& study, const RunConfig& base, const CodecParams& codec,
                           const std::vector<DatasetRecord>& test) {
    AblationTable t;
    t.study = study;
    t.columns = {"miou", "miou_inv", "mask_l1"};
    for (const auto& [name, arm] : study_arms(study, base)) {
        AblationRow row;
        row.arm = name;
        try {
            const auto ck = ensure_mask_arm(arm, base);
            row.values = mean_columns(evaluate_mask_arm(arm, ck, test, codec), t.columns);
        } catch (const std::exception& e) {
            std::cerr << "ablate: arm " << name << " failed: " << e.what() << "\n";
            for (const auto& c : t.columns) row.values[c] = std::nullopt;
        }
        t.rows.push_back(std::move(row));
    }
    t.footer = "each arm retrains only the mask network; codec fixed; " + std::to_string(test.size()) +
               " test records";
    if (study == "mask_corruption") t.footer += "; every test modal mask is expanded by 5-30% area";
    return t;
}

AblationTable ablate_finetune(const RunConfig& base, const std::vector<DatasetRecord>& test) {
    AblationTable t;
    t.study = "finetune_steps";
    t.columns = {"l1_visible", "l1_whole", "psnr_whole", "l1_invisible", "psnr_invisible"};
    auto m = load_models(base, true);
    const auto sched = schedule_for(base);
    const auto n = std::min<std::size_t>(test.size(), static_cast<std::size_t>(base.ablate_rgb_records));
    std::vector<torch::Tensor> z_do, i_o, m_m;
    for (std::size_t i = 0; i < n; ++i) {
        const auto in = inference_input(base, test[i], base.test_corruption_rate);
        auto ms = mask_sample_for(in, m.features, m.codec);
        auto m_a = predict_one(m, ms);
        auto rs = build_rgb_sample(in.i_o, in.m_m, m_a[0], in.attributes, m.codec);
        z_do.push_back(sample_latent(m.rgb, sched, rs, z_seed_for(base, in.index)));
        i_o.push_back(to_tensor(in.i_o).unsqueeze(0));
        m_m.push_back(to_tensor(in.m_m).unsqueeze(0));
    }
    for (const auto& [name, arm] : study_arms("finetune_steps", base)) {
        AblationRow row;
        row.arm = name;
        std::vector<RecordMetrics> rows;
        try {
            for (std::size_t i = 0; i < n; ++i) {
                auto f = finetune_decoder(z_do[i], i_o[i], m_m[i], m.codec, finetune_config_for(arm));
                RecordMetrics rm;
                rm.record_id = test[i].id;
                pixel_metrics_into(rm, f.i_do_star[0], test[i].scene);
                rows.push_back(std::move(rm));
            }
            row.values = mean_columns(rows, t.columns);
        } catch (const std::exception& e) {
            std::cerr << "ablate: arm " << name << " failed: " << e.what() << "\n";
        }
        t.rows.push_back(std::move(row));
    }
    t.footer = "lambda " + std::to_string(base.finetune_lambda) + "; " + std::to_string(n) + " test records";
    return t;
}

AblationTable ablate_stages(const RunConfig& base, const CodecParams& codec, const std::vector<DatasetRecord>& test) {
    AblationTable t;
    t.study = "one_vs_two_stage";
    t.columns = {"miou", "miou_inv", "mask_l1", "l1_whole", "psnr_whole", "l1_invisible", "psnr_invisible"};
    const auto arms = study_arms("one_vs_two_stage", base);
    const auto n = std::min<std::size_t>(test.size(), static_cast<std::size_t>(base.ablate_rgb_records));
    const auto P = paths_for(base);

    // one stage
    {
        AblationRow row;
        row.arm = arms[0].first;
        try {
            const auto ck = ensure_mask_arm(arms[0].second, base);
            std::vector<torch::Tensor> rgb;
            auto rows = evaluate_mask_arm(arms[0].second, ck, test, codec, nullptr, &rgb);
            for (std::size_t i = 0; i < n; ++i) pixel_metrics_into(rows[i], rgb[i], test[i].scene);
            row.values = mean_columns(rows, t.columns);
        } catch (const std::exception& e) {
            std::cerr << "ablate: one-stage arm failed: " << e.what() << "\n";
        }
        t.rows.push_back(std::move(row));
    }

    auto m = load_models(base, true);
    std::vector<torch::Tensor> probs;
    auto mask_rows = evaluate_mask_arm(base, P.ckpt("mask"), test, codec, &probs);

    // two stage, feedforward RGB network on frozen diffusion priors
    {
        AblationRow row;
        row.arm = arms[1].first;
        try {
            const auto ff_path = (fs::path(P.ablate("one_vs_two_stage")) / "feedforward.pt").string();
            FeedforwardNet ff{nullptr};
            auto build = [&](const RunConfig& cc) {
                torch::manual_seed(derive_seed(cc.seed, "feedforward") >> 1);
                return FeedforwardNet(rgb_options_for(cc), cc.mask_unet_channels);
            };
            ff = build(base);
            const auto key = config_hash(base);
            if (fs::exists(ff_path) && read_checkpoint_meta(ff_path).value("config_hash", "") == key) {
                load_checkpoint(ff_path, {{"net", ff.ptr().get()}});
            } else {
                std::vector<FeedforwardSample> data;
                for (const auto& r : load_split(base, "train")) {
                    auto rs = build_rgb_sample(r.scene.image_occluded, r.scene.mask_modal,
                                               to_tensor(r.scene.mask_amodal_gt), r.scene.attributes, codec);
                    data.push_back({to_tensor(r.scene.image_occluded), to_tensor(r.scene.mask_modal),
                                    to_tensor(r.scene.mask_amodal_gt), rs.z0_prime, to_tensor(r.scene.image_gt)});
                }
                auto curve = train_feedforward(ff, m.rgb, data, base.feedforward_iterations, base.mask_batch,
                                               base.feedforward_lr, derive_seed(base.seed, "feedforward"));
                save_checkpoint(ff_path, {{"net", ff.ptr().get()}}, {{"kind", "feedforward"}, {"config_hash", key}});
                write_curve((fs::path(P.ablate("one_vs_two_stage")) / "feedforward_curve.csv").string(), "iteration",
                            curve, 0);
            }
            ff->eval();
            torch::NoGradGuard g;
            auto rows = mask_rows;
            for (std::size_t i = 0; i < n; ++i) {
                const auto in = inference_input(base, test[i], base.test_corruption_rate);
                auto rs = build_rgb_sample(in.i_o, in.m_m, probs[i], in.attributes, codec);
                auto out = ff->forward(m.rgb, to_tensor(in.i_o).unsqueeze(0), to_tensor(in.m_m).unsqueeze(0),
                                       probs[i].unsqueeze(0), rs.z0_prime.unsqueeze(0));
                pixel_metrics_into(rows[i], out[0], test[i].scene);
            }
            row.values = mean_columns(rows, t.columns);
        } catch (const std::exception& e) {
            std::cerr << "ablate: feedforward arm failed: " << e.what() << "\n";
        }
        t.rows.push_back(std::move(row));
    }

    // two stage, diffusion (the full pipeline)
    {
        AblationRow row;
        row.arm = arms[2].first;
        try {
            auto rows = mask_rows;
            const auto sched = schedule_for(base);
            for (std::size_t i = 0; i < n; ++i) {
                const auto in = inference_input(base, test[i], base.test_corruption_rate);
                auto rs = build_rgb_sample(in.i_o, in.m_m, probs[i], in.attributes, codec);
                auto r = complete_rgb(m.rgb, codec, sched, rs, to_tensor(in.i_o).unsqueeze(0),
                                      to_tensor(in.m_m).unsqueeze(0), finetune_config_for(base),
                                      z_seed_for(base, in.index));
                pixel_metrics_into(rows[i], r.i_do_star[0], test[i].scene);
            }
            row.values = mean_columns(rows, t.columns);
        } catch (const std::exception& e) {
            std::cerr << "ablate: diffusion arm failed: " << e.what() << "\n";
        }
        t.rows.push_back(std::move(row));
    }
    t.footer = "one-stage and stage-one networks share the same iteration budget; mask columns over " +
               std::to_string(test.size()) + " test records, image columns over " + std::to_string(n);
    return t;
}

}  // namespace

AblationTable cmd_ablate(const std::string& study, const RunConfig& c) {
    validate(c);
    const auto t0 = std::chrono::steady_clock::now();
    const auto P = paths_for(c);
    require_file(P.ckpt("codec"), "codec");
    const auto codec = load_codec(P.ckpt("codec"));
    const auto test = load_split(c, "test");
    AblationTable t;
    if (study == "finetune_steps")
        t = ablate_finetune(c, test);
    else if (study == "one_vs_two_stage")
        t = ablate_stages(c, codec, test);
    else
        t = ablate_masks(study, c, codec, test);
    write_text((fs::path(P.ablate(study)) / "table.csv").string(), t.to_csv());
    record_timing(c, "ablate_" + study, seconds_since(t0));
    return t;
}

// ---------------------------------------------------------------- verify

VerifyOutcome verify_manifest(const std::string& infer_dir, int records) {
    const auto mpath = (fs::path(infer_dir) / "manifest.json").string();
    const auto manifest = nlohmann::json::parse(read_text(mpath));
    if (manifest.value("artifact_version", "") != kArtifactVersion)
        throw ConfigError("manifest was written by another artifact version");
    // the run root sits two levels above infer/<split>
    auto cfg_json = manifest.at("config");
    cfg_json["output_dir"] = fs::path(infer_dir).parent_path().parent_path().string();
    const auto c = run_config_from_json(cfg_json);
    if (config_hash(c) != manifest.at("config_hash")) throw ConfigError("manifest config hash does not match");
    const auto P = paths_for(c);
    for (const auto& [name, digest] : manifest.at("checkpoints").items())
        if (!digest.is_null() && file_digest(P.ckpt(name)) != digest)
            throw ConfigError("checkpoint " + name + " differs from the manifest");
    InferOptions o;
    o.split = manifest.at("split");
    o.rgb = manifest.at("rgb");
    for (const auto& id : manifest.at("records")) {
        if (static_cast<int>(o.only_ids.size()) >= records) break;
        o.only_ids.push_back(id);
    }
    o.out_dir = (fs::path(infer_dir) / ".verify").string();
    fs::remove_all(o.out_dir);
    cmd_infer(c, o);
    VerifyOutcome v;
    for (const auto& id : o.only_ids) {
        std::vector<std::string> files{id + "_m_a.png"};
        if (o.rgb) {
            files.push_back(id + "_i_do.png");
            files.push_back(id + "_i_do_star.png");
        }
        for (const auto& f : files) {
            const auto a = (fs::path(infer_dir) / f).string(), b = (fs::path(o.out_dir) / f).string();
            if (!fs::exists(a) || !fs::exists(b) || read_text(a) != read_text(b)) v.mismatches.push_back(f);
        }
        ++v.checked;
    }
    fs::remove_all(o.out_dir);
    return v;
}

}  // namespace deocc
