#include "deocc/mask_completion.hpp"

#include <cmath>

#include "deocc/checkpoint.hpp"
#include "deocc/errors.hpp"
#include "deocc/inpaint_loss.hpp"
#include "deocc/rng.hpp"
#include "deocc/tensor_io.hpp"

namespace deocc {

JointEmbedderImpl::JointEmbedderImpl(int64_t joint_count, int64_t dim) {
    in = register_module("coord_in", torch::nn::Linear(2, dim));
    id = register_module("id", torch::nn::Embedding(joint_count, dim));
    out = register_module("out", torch::nn::Linear(dim, dim));
}

torch::Tensor JointEmbedderImpl::forward(const torch::Tensor& coords, const torch::Tensor& valid) {
    require(coords.dim() == 3 && coords.size(2) == 2, "joint_feature: expected [B, K, 2] coordinates");
    require(coords.size(1) == id->weight.size(0), "joint_feature: joint count mismatch");
    auto h = torch::silu(in(coords) + id->weight.unsqueeze(0));
    return out(h) * valid.unsqueeze(-1);
}

nn::PriorSpec mask_prior_spec(const MaskNetOptions& o) {
    const auto [c0, c1, c2] = o.backbone_channels;
    const int64_t L = o.latent_resolution;
    nn::PriorSpec s;
    s.feature_channels = {c2, c1, c0, o.prior_channels};
    s.feature_resolutions = {L / 4, L / 2, L, 2 * L};
    s.attention_tokens = {o.joint_count + 1, o.joint_count + 1};
    s.attention_resolutions = {L / 2, L};
    return s;
}

MaskNetImpl::MaskNetImpl(const MaskNetOptions& o) : opts(o) {
    nn::ImageUNetOptions u;
    u.in_channels = o.one_stage ? 5 : 2;
    u.resolution = o.image_resolution;
    u.mask_head = true;
    u.rgb_head = o.one_stage;
    u.channels = o.unet_channels;
    u.use_prior = o.use_prior;
    u.prior = mask_prior_spec(o);
    u.modal_skip_channel = 0;
    u.mask_classes = o.mask_classes;
    unet = register_module("unet", nn::ImageUNet(u));
    if (!o.use_prior) return;
    phi = register_module("phi", JointEmbedder(o.joint_count, o.joint_dim));
    nn::ControlBranchOptions c;
    c.hint_channels = o.joint_count;
    c.hint_resolution = o.h2d_resolution;
    c.latent_resolution = o.latent_resolution;
    c.latent_channels = o.latent_channels;
    c.cond_dim = o.joint_dim;
    c.channels = o.backbone_channels;
    c.emb_dim = o.emb_dim;
    control = register_module("control", nn::ControlBranch(c));
    nn::LatentUNetOptions b;
    b.in_channels = o.latent_channels;
    b.out_channels = 0;
    b.channels = o.backbone_channels;
    b.emb_dim = o.emb_dim;
    b.ctx_dim = o.joint_dim;
    b.attn_dim = o.attn_dim;
    b.prior_channels = o.prior_channels;
    backbone = register_module("backbone", nn::LatentUNet(b));
}

torch::Tensor MaskNetImpl::joint_feature(const torch::Tensor& joints, const torch::Tensor& valid) {
    require(opts.use_prior, "joint_feature: this network has no prior branch");
    return phi(joints, valid);
}

PriorFeatures MaskNetImpl::extract_prior(const torch::Tensor& z0, const torch::Tensor& h2d, const torch::Tensor& f_j,
                                         const torch::Tensor& valid) {
    require(opts.use_prior, "extract_prior: this network has no prior branch");
    require(z0.dim() == 4 && h2d.dim() == 4 && f_j.dim() == 3 && z0.size(0) == h2d.size(0) &&
                z0.size(0) == f_j.size(0),
            "extract_prior: inconsistent batch shapes");
    auto pooled = f_j.sum(1) / valid.sum(1, true).clamp_min(1.0);
    auto f_c1 = control(h2d, z0, pooled);
    // t pinned to 0: no noise anywhere on this path
    auto t = torch::zeros({z0.size(0)}, torch::kLong);
    auto out = backbone(z0, t, f_j, valid, torch::Tensor(), f_c1, true);
    return {out.features, out.attention};
}

nn::ImageUNetOutput MaskNetImpl::outputs(const MaskInputs& in) {
    require(in.m_m.dim() == 4 && in.m_m.sizes() == in.h_o.sizes(), "complete_mask: m_m and h_o must match");
    PriorFeatures prior;
    if (opts.use_prior) prior = extract_prior(in.z0, in.h2d, joint_feature(in.joints, in.valid), in.valid);
    std::vector<torch::Tensor> parts{in.m_m, in.h_o};
    if (opts.one_stage) {
        require(in.i_o.defined() && in.i_o.size(1) == 3, "one-stage network needs the occluded image");
        parts.push_back(in.i_o);
    }
    return unet(torch::cat(parts, 1), prior.features, prior.attention);
}

torch::Tensor MaskNetImpl::logits(const MaskInputs& in) { return outputs(in).mask_logits; }

torch::Tensor MaskNetImpl::forward(const MaskInputs& in) { return logits_to_prob(logits(in)); }

torch::Tensor logits_to_prob(const torch::Tensor& logits) {
    if (logits.size(1) == 1) return torch::sigmoid(logits);
    return torch::softmax(logits, 1).narrow(1, 1, 1);
}

torch::Tensor complete_mask(MaskNet& net, const torch::Tensor& m_m, const torch::Tensor& h_o,
                            const PriorFeatures& prior) {
    require(m_m.dim() == 4 && m_m.sizes() == h_o.sizes(), "complete_mask: m_m and h_o must match");
    return logits_to_prob(net->unet(torch::cat({m_m, h_o}, 1), prior.features, prior.attention).mask_logits);
}

torch::Tensor bce_loss_tensor(const torch::Tensor& pred, const torch::Tensor& gt) {
    require(pred.sizes() == gt.sizes(), "bce_loss: shape mismatch");
    auto p = pred.clamp(1e-7, 1.0 - 1e-7);
    return -(gt * torch::log(p) + (1.0 - gt) * torch::log(1.0 - p)).mean();
}

double bce_loss(const torch::Tensor& pred, const torch::Tensor& gt) {
    return bce_loss_tensor(pred.to(torch::kDouble), gt.to(torch::kDouble)).item<double>();
}

MaskSample build_mask_sample(const Image& i_o, const Mask& m_m, const JointSet& j2d, const MaskFeatureConfig& fc,
                             const CodecParams& codec) {
    require(i_o.height == m_m.height && i_o.width == m_m.width, "mask sample: image and mask sizes differ");
    MaskSample s;
    s.m_m = to_tensor(m_m);
    s.h_o = to_tensor(occluded_joint_heatmap(j2d, m_m, fc.subdivision, fc.sigma_occluded, fc.input_kind).map);
    const auto stack = render_heatmap_stack(j2d, fc.sigma_joint, fc.h2d_resolution, fc.h2d_resolution, i_o.height,
                                            i_o.width);
    s.h2d = torch::from_blob(const_cast<float*>(stack.data()),
                             {static_cast<int64_t>(j2d.size()), fc.h2d_resolution, fc.h2d_resolution}, torch::kFloat)
                .clone();
    {
        torch::NoGradGuard g;
        s.z0 = encode(i_o, codec)[0];
    }
    s.i_o = to_tensor(i_o);
    s.joints = torch::zeros({static_cast<int64_t>(j2d.size()), 2});
    s.valid = torch::zeros({static_cast<int64_t>(j2d.size())});
    auto ja = s.joints.accessor<float, 2>();
    auto va = s.valid.accessor<float, 1>();
    for (std::size_t k = 0; k < j2d.size(); ++k) {
        const auto& j = j2d.joints[k];
        if (!j.valid) continue;
        ja[k][0] = static_cast<float>(std::clamp(j.x / i_o.width, 0.0, 1.0));
        ja[k][1] = static_cast<float>(std::clamp(j.y / i_o.height, 0.0, 1.0));
        va[k] = 1.f;
    }
    return s;
}

MaskInputs collate(const std::vector<const MaskSample*>& items, torch::Tensor* target_out,
                   torch::Tensor* image_target_out) {
    require(!items.empty(), "collate: empty batch");
    auto gather = [&](auto member) {
        std::vector<torch::Tensor> v;
        v.reserve(items.size());
        for (const auto* s : items) v.push_back(s->*member);
        return torch::stack(v);
    };
    MaskInputs in{gather(&MaskSample::m_m), gather(&MaskSample::h_o),    gather(&MaskSample::h2d),
                  gather(&MaskSample::z0),  gather(&MaskSample::joints), gather(&MaskSample::valid),
                  gather(&MaskSample::i_o)};
    if (target_out) *target_out = gather(&MaskSample::target);
    if (image_target_out) *image_target_out = gather(&MaskSample::image_target);
    return in;
}

MaskNetOptions mask_options_for(const MaskNetOptions& base, const MaskTrainConfig& cfg) {
    MaskNetOptions o = base;
    o.mask_classes = cfg.loss == "ce" ? 2 : 1;
    return o;
}

MaskNet make_mask_net(const MaskNetOptions& o, std::uint64_t seed) {
    torch::manual_seed(derive_seed(seed, "mask_init") >> 1);
    return MaskNet(o);
}

std::unique_ptr<torch::optim::Optimizer> make_mask_optimizer(MaskNet& net, const MaskTrainConfig& cfg) {
    if (cfg.optimizer == "sgd")
        return std::make_unique<torch::optim::SGD>(net->parameters(),
                                                   torch::optim::SGDOptions(cfg.lr).momentum(cfg.momentum));
    if (cfg.optimizer == "adam")
        return std::make_unique<torch::optim::Adam>(net->parameters(), torch::optim::AdamOptions(cfg.lr));
    throw ConfigError("unknown mask optimizer '" + cfg.optimizer + "'");
}

namespace {

torch::Tensor mask_objective(const torch::Tensor& logits, const torch::Tensor& target, const std::string& loss) {
    if (loss == "bce") return bce_loss_tensor(logits_to_prob(logits), target);
    if (loss == "ce") {
        require(logits.size(1) == 2, "cross-entropy needs a two-class head");
        auto p = torch::softmax(logits, 1).clamp(1e-7, 1.0 - 1e-7);
        return -(target * torch::log(p.narrow(1, 1, 1)) + (1.0 - target) * torch::log(p.narrow(1, 0, 1))).mean();
    }
    throw ConfigError("unknown mask loss '" + loss + "'");
}

}  // namespace

void train_mask_net(MaskNet& net, torch::optim::Optimizer& opt, const std::vector<MaskSample>& data,
                    const MaskTrainConfig& cfg, MaskTrainState& state, int until) {
    require(!data.empty(), "train_mask_net: empty dataset");
    require(data.front().target.defined(), "train_mask_net: samples need targets");
    net->train();
    std::vector<const MaskSample*> batch(static_cast<std::size_t>(cfg.batch_size));
    for (int it = state.iteration; it < until; ++it) {
        Rng rng(derive_seed(cfg.seed, "mask_batch", static_cast<std::uint64_t>(it)));
        std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
        for (auto& b : batch) b = &data[pick(rng)];
        torch::Tensor target, image_target;
        auto in = collate(batch, &target, net->opts.one_stage ? &image_target : nullptr);
        torch::Tensor loss;
        if (net->opts.one_stage) {
            auto out = net->outputs(in);
            loss = cfg.lambda_bce * mask_objective(out.mask_logits, target, cfg.loss) +
                   inpainting_loss(out.rgb, image_target, in.m_m).total;
        } else {
            loss = mask_objective(net->logits(in), target, cfg.loss);
        }
        const double v = loss.item<double>();
        if (!std::isfinite(v)) throw TrainingError("mask training diverged at iteration " + std::to_string(it));
        opt.zero_grad();
        loss.backward();
        opt.step();
        state.curve.push_back({it, v});
        state.iteration = it + 1;
    }
}

torch::Tensor predict_masks(MaskNet& net, const std::vector<MaskSample>& data, int batch_size,
                            torch::Tensor* rgb_out) {
    torch::NoGradGuard g;
    net->eval();
    std::vector<torch::Tensor> out, rgb;
    for (std::size_t b = 0; b < data.size(); b += static_cast<std::size_t>(batch_size)) {
        std::vector<const MaskSample*> items;
        for (std::size_t i = b; i < std::min(data.size(), b + batch_size); ++i) items.push_back(&data[i]);
        auto o = net->outputs(collate(items));
        out.push_back(logits_to_prob(o.mask_logits));
        if (o.rgb.defined()) rgb.push_back(o.rgb);
    }
    if (rgb_out && !rgb.empty()) *rgb_out = torch::cat(rgb);
    return torch::cat(out);
}

nlohmann::json to_json(const MaskNetOptions& o) {
    return {{"use_prior", o.use_prior},           {"image_resolution", o.image_resolution},
            {"latent_resolution", o.latent_resolution}, {"latent_channels", o.latent_channels},
            {"joint_count", o.joint_count},       {"joint_dim", o.joint_dim},
            {"h2d_resolution", o.h2d_resolution}, {"backbone_channels", o.backbone_channels},
            {"emb_dim", o.emb_dim},               {"attn_dim", o.attn_dim},
            {"prior_channels", o.prior_channels}, {"unet_channels", o.unet_channels},
            {"mask_classes", o.mask_classes},     {"one_stage", o.one_stage}};
}

MaskNetOptions mask_options_from_json(const nlohmann::json& j) {
    MaskNetOptions o;
    o.use_prior = j.at("use_prior");
    o.image_resolution = j.at("image_resolution");
    o.latent_resolution = j.at("latent_resolution");
    o.latent_channels = j.at("latent_channels");
    o.joint_count = j.at("joint_count");
    o.joint_dim = j.at("joint_dim");
    o.h2d_resolution = j.at("h2d_resolution");
    o.backbone_channels = j.at("backbone_channels").get<std::array<int64_t, 3>>();
    o.emb_dim = j.at("emb_dim");
    o.attn_dim = j.at("attn_dim");
    o.prior_channels = j.at("prior_channels");
    o.unet_channels = j.at("unet_channels").get<std::vector<int64_t>>();
    o.mask_classes = j.at("mask_classes");
    o.one_stage = j.at("one_stage");
    return o;
}

nlohmann::json to_json(const MaskFeatureConfig& c) {
    return {{"sigma_joint", c.sigma_joint},
            {"sigma_occluded", c.sigma_occluded},
            {"subdivision", c.subdivision},
            {"input_kind", to_string(c.input_kind)},
            {"h2d_resolution", c.h2d_resolution}};
}

MaskFeatureConfig mask_features_from_json(const nlohmann::json& j) {
    MaskFeatureConfig c;
    c.sigma_joint = j.at("sigma_joint");
    c.sigma_occluded = j.at("sigma_occluded");
    c.subdivision = j.at("subdivision");
    c.input_kind = parse_occlusion_input_kind(j.at("input_kind"));
    c.h2d_resolution = j.at("h2d_resolution");
    return c;
}

void save_mask_net(const std::string& path, MaskNet& net, torch::optim::Optimizer* opt, const MaskTrainState& state,
                   const MaskFeatureConfig& fc, const MaskTrainConfig& tc, const std::string& config_hash) {
    nlohmann::json meta{{"kind", "mask"},
                        {"mask_version", kMaskNetVersion},
                        {"options", to_json(net->opts)},
                        {"features", to_json(fc)},
                        {"train", {{"iterations", tc.iterations},
                                   {"batch_size", tc.batch_size},
                                   {"lr", tc.lr},
                                   {"momentum", tc.momentum},
                                   {"optimizer", tc.optimizer},
                                   {"loss", tc.loss},
                                   {"lambda_bce", tc.lambda_bce},
                                   {"seed", tc.seed}}},
                        {"iteration", state.iteration},
                        {"config_hash", config_hash}};
    save_checkpoint(path, {{"net", net.ptr().get()}}, meta, opt);
}

LoadedMaskNet load_mask_net(const std::string& path) {
    auto meta = read_checkpoint_meta(path);
    if (meta.value("kind", "") != "mask") throw ConfigError(path + " is not a mask checkpoint");
    if (meta.value("mask_version", -1) != kMaskNetVersion) throw ConfigError("mask network version mismatch in " + path);
    LoadedMaskNet out;
    out.net = MaskNet(mask_options_from_json(meta.at("options")));
    load_checkpoint(path, {{"net", out.net.ptr().get()}});
    out.features = mask_features_from_json(meta.at("features"));
    out.state.iteration = meta.at("iteration");
    out.meta = meta;
    return out;
}

}  // namespace deocc
