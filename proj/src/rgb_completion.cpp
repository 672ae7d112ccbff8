#include "deocc/rgb_completion.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <numeric>

#include "deocc/checkpoint.hpp"
#include "deocc/errors.hpp"
#include "deocc/rng.hpp"
#include "deocc/tensor_io.hpp"

namespace deocc {

int attribute_vocab_size() { return kBodyPartCount * static_cast<int>(figure_palette().size()); }

int attribute_token_id(const Attribute& a) {
    int part = -1;
    for (int p = 0; p < kBodyPartCount; ++p)
        if (part_name(static_cast<BodyPart>(p)) == a.part) part = p;
    const auto& pal = figure_palette();
    int colour = -1;
    for (std::size_t c = 0; c < pal.size(); ++c)
        if (pal[c].first == a.value) colour = static_cast<int>(c);
    if (part < 0 || colour < 0) throw ContractError("unknown attribute token '" + a.token() + "'");
    return part * static_cast<int>(pal.size()) + colour;
}

AttributeBatch encode_attributes(const Attributes& attrs) {
    require(static_cast<int>(attrs.size()) <= kMaxAttributes, "too many attributes");
    AttributeBatch b{torch::zeros({kMaxAttributes}, torch::kLong), torch::zeros({kMaxAttributes})};
    for (std::size_t i = 0; i < attrs.size(); ++i) {
        b.ids[static_cast<int64_t>(i)] = attribute_token_id(attrs[i]);
        b.mask[static_cast<int64_t>(i)] = 1.f;
    }
    return b;
}

RgbNetImpl::RgbNetImpl(const RgbNetOptions& o) : opts(o) {
    attr = register_module("attr", torch::nn::Embedding(attribute_vocab_size(), o.attr_dim));
    hs_to_emb = register_module("hs_to_emb", torch::nn::Linear(o.attr_dim, o.emb_dim));
    nn::ControlBranchOptions c;
    c.hint_channels = 1;
    c.hint_resolution = o.image_resolution;
    c.latent_resolution = o.latent_resolution;
    c.latent_channels = 2 * o.latent_channels;
    c.cond_dim = o.attr_dim;
    c.channels = o.channels;
    c.emb_dim = o.emb_dim;
    control = register_module("control", nn::ControlBranch(c));
    nn::LatentUNetOptions u;
    u.in_channels = 3 * o.latent_channels;
    u.out_channels = o.latent_channels;
    u.channels = o.channels;
    u.emb_dim = o.emb_dim;
    u.ctx_dim = o.attr_dim;
    u.attn_dim = o.attn_dim;
    u.prior_channels = o.prior_channels;
    denoiser = register_module("denoiser", nn::LatentUNet(u));
}

torch::Tensor RgbNetImpl::attribute_embedding(const torch::Tensor& ids, const torch::Tensor& mask) {
    require(ids.dim() == 2 && ids.sizes() == mask.sizes(), "attribute_embedding: expected [B, A] ids and mask");
    return (attr(ids) * mask.unsqueeze(-1)).sum(1);
}

std::vector<torch::Tensor> RgbNetImpl::control_feature(const torch::Tensor& m_a, const torch::Tensor& z0_prime,
                                                       const torch::Tensor& f_hs) {
    require(m_a.dim() == 4 && m_a.size(1) == 1 && m_a.size(2) == opts.image_resolution &&
                m_a.size(3) == opts.image_resolution,
            "control_feature: m_a must be [B, 1, H, W]");
    require(z0_prime.dim() == 4 && z0_prime.size(1) == 2 * opts.latent_channels &&
                z0_prime.size(2) == opts.latent_resolution && z0_prime.size(0) == m_a.size(0),
            "control_feature: z0' shape mismatch");
    require(f_hs.dim() == 2 && f_hs.size(0) == m_a.size(0) && f_hs.size(1) == opts.attr_dim,
            "control_feature: f_hs shape mismatch");
    return control(m_a, z0_prime, f_hs);
}

namespace {

torch::Tensor ctx_valid_for(const torch::Tensor& f) {
    // a zero condition (no attributes) leaves only the null token
    return (f.abs().sum(1, true) > 0).to(torch::kFloat);
}

}  // namespace

torch::Tensor RgbNetImpl::predict_noise(const torch::Tensor& z0_prime, const torch::Tensor& z_t, const torch::Tensor& t,
                                        const torch::Tensor& f_hs, const std::vector<torch::Tensor>& f_c2) {
    require(z_t.dim() == 4 && z_t.size(1) == opts.latent_channels && z_t.size(0) == z0_prime.size(0) &&
                z_t.size(2) == z0_prime.size(2),
            "predict_noise: z_t shape mismatch");
    auto out = denoiser(torch::cat({z0_prime, z_t}, 1), t, f_hs.unsqueeze(1), ctx_valid_for(f_hs), hs_to_emb(f_hs),
                        f_c2, false);
    return out.eps;
}

nn::LatentUNetOutput RgbNetImpl::prior(const torch::Tensor& z0_prime, const torch::Tensor& z_t, const torch::Tensor& f,
                                       const std::vector<torch::Tensor>& f_c2) {
    auto t = torch::zeros({z_t.size(0)}, torch::kLong);
    return denoiser(torch::cat({z0_prime, z_t}, 1), t, f.unsqueeze(1), ctx_valid_for(f), hs_to_emb(f), f_c2, true);
}

RgbNet make_rgb_net(const RgbNetOptions& o, std::uint64_t seed) {
    torch::manual_seed(derive_seed(seed, "rgb_init") >> 1);
    return RgbNet(o);
}

RgbSample build_rgb_sample(const Image& i_o, const Mask& m_m, const torch::Tensor& hint, const Attributes& attrs,
                           const CodecParams& codec, const Image* i_gt) {
    require(hint.dim() == 3 && hint.size(0) == 1 && hint.size(1) == i_o.height && hint.size(2) == i_o.width,
            "rgb sample: hint must be [1, H, W]");
    torch::NoGradGuard g;
    RgbSample s;
    s.z0_prime = torch::cat({encode(i_o, codec)[0], encode(m_m, codec)[0]}, 0);
    s.hint = hint.to(torch::kFloat);
    auto a = encode_attributes(attrs);
    s.attr_ids = a.ids;
    s.attr_mask = a.mask;
    if (i_gt) s.z_gt = encode(*i_gt, codec)[0];
    return s;
}

std::vector<double> train_rgb_net(RgbNet& net, const std::vector<RgbSample>& data, const NoiseSchedule& sched,
                                  const RgbTrainConfig& cfg) {
    require(!data.empty(), "train_rgb_net: empty dataset");
    require(data.front().z_gt.defined(), "train_rgb_net: samples need z_gt");
    net->train();
    torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(cfg.lr));
    auto gen = at::detail::createCPUGenerator(derive_seed(cfg.seed, "rgb_noise") >> 1);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> losses;
    const auto per_epoch = (data.size() + cfg.batch_size - 1) / cfg.batch_size;
    const double total_steps = static_cast<double>(per_epoch) * cfg.epochs;
    int step = 0;
    for (int e = 0; e < cfg.epochs; ++e) {
        Rng rng(derive_seed(cfg.seed, "rgb_epoch", static_cast<std::uint64_t>(e)));
        std::shuffle(order.begin(), order.end(), rng);
        double sum = 0.0;
        for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
            std::vector<torch::Tensor> z0p, hint, ids, msk, zgt;
            for (std::size_t i = b; i < std::min(order.size(), b + cfg.batch_size); ++i) {
                const auto& s = data[order[i]];
                z0p.push_back(s.z0_prime);
                hint.push_back(s.hint);
                ids.push_back(s.attr_ids);
                msk.push_back(s.attr_mask);
                zgt.push_back(s.z_gt);
            }
            const auto n = static_cast<int64_t>(z0p.size());
            auto z0 = torch::stack(zgt);
            auto t = torch::randint(1, sched.T + 1, {n}, gen, torch::kLong);
            auto eps = torch::randn(z0.sizes(), gen, torch::kFloat);
            auto z_t = forward_diffuse(z0, t, eps, sched);
            auto zp = torch::stack(z0p);
            auto f_hs = net->attribute_embedding(torch::stack(ids), torch::stack(msk));
            auto f_c2 = net->control_feature(torch::stack(hint), zp, f_hs);
            auto loss = denoise_loss_tensor(eps, net->predict_noise(zp, z_t, t, f_hs, f_c2));
            const double v = loss.item<double>();
            if (!std::isfinite(v)) throw TrainingError("rgb training diverged at epoch " + std::to_string(e + 1));
            // cosine decay: late epochs would otherwise bounce around the plateau
            const double lr = cfg.lr * 0.5 * (1.0 + std::cos(M_PI * step++ / total_steps));
            for (auto& g : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(g.options()).lr(lr);
            opt.zero_grad();
            loss.backward();
            opt.step();
            sum += v * static_cast<double>(n);
        }
        losses.push_back(sum / static_cast<double>(data.size()));
    }
    return losses;
}

torch::Tensor sample_latent(RgbNet& net, const NoiseSchedule& sched, const RgbSample& sample, std::uint64_t z_seed) {
    torch::NoGradGuard g;
    net->eval();
    auto zp = sample.z0_prime.unsqueeze(0);
    auto f_hs = net->attribute_embedding(sample.attr_ids.unsqueeze(0), sample.attr_mask.unsqueeze(0));
    auto f_c2 = net->control_feature(sample.hint.unsqueeze(0), zp, f_hs);
    auto gen = at::detail::createCPUGenerator(z_seed >> 1);
    auto z_T = torch::randn({1, net->opts.latent_channels, zp.size(2), zp.size(3)}, gen, torch::kFloat);
    NoisePredictor eps = [&](const torch::Tensor& z, int t) {
        return net->predict_noise(zp, z, torch::full({1}, t, torch::kLong), f_hs, f_c2);
    };
    return sample_loop(eps, z_T, sched);
}

RgbResult complete_rgb(RgbNet& net, const CodecParams& codec, const NoiseSchedule& sched, const RgbSample& sample,
                       const torch::Tensor& i_o, const torch::Tensor& m_m, const FinetuneConfig& ft,
                       std::uint64_t z_seed) {
    torch::Tensor z_do;
    try {
        z_do = sample_latent(net, sched, sample, z_seed);
    } catch (const SamplingError& e) {
        throw SamplingError("rgb stage: non-finite noise prediction", e.step());
    }
    auto f = finetune_decoder(z_do, i_o, m_m, codec, ft);
    return {f.i_do, f.i_do_star, f.objective};
}

torch::Tensor occluded_region(const torch::Tensor& m_a, const torch::Tensor& m_m) {
    require(m_a.defined(), "occluded region needs the stage-one amodal mask");
    require(m_a.sizes() == m_m.sizes(), "occluded_region: shape mismatch");
    return (m_a - m_m).clamp(0.0, 1.0);
}

namespace {

nn::PriorSpec rgb_prior_spec(const RgbNetOptions& o) {
    const auto [c0, c1, c2] = o.channels;
    const int64_t L = o.latent_resolution;
    nn::PriorSpec s;
    s.feature_channels = {c2, c1, c0, o.prior_channels};
    s.feature_resolutions = {L / 4, L / 2, L, 2 * L};
    s.attention_tokens = {2, 2};
    s.attention_resolutions = {L / 2, L};
    return s;
}

}  // namespace

FeedforwardNetImpl::FeedforwardNetImpl(const RgbNetOptions& rgb, std::vector<int64_t> unet_channels) {
    const int64_t l = rgb.latent_resolution;
    lw = register_module("lw", torch::nn::Linear(rgb.latent_channels * l * l, rgb.attr_dim));
    nn::ImageUNetOptions u;
    u.in_channels = 5;
    u.resolution = rgb.image_resolution;
    u.mask_head = false;
    u.rgb_head = true;
    u.channels = std::move(unet_channels);
    u.use_prior = true;
    u.prior = rgb_prior_spec(rgb);
    unet = register_module("unet", nn::ImageUNet(u));
}

torch::Tensor FeedforwardNetImpl::forward(RgbNet& prior_net, const torch::Tensor& i_o, const torch::Tensor& m_m,
                                          const torch::Tensor& m_a, const torch::Tensor& z0_prime) {
    require(m_a.defined(), "feedforward stage needs the stage-one amodal mask");
    const auto c = prior_net->opts.latent_channels;
    auto z_o = z0_prime.narrow(1, 0, c);
    auto f_lw = lw(z_o.flatten(1));
    auto f_c2 = prior_net->control_feature(m_a, z0_prime, f_lw);
    auto pr = prior_net->prior(z0_prime, z_o, f_lw, f_c2);
    return unet(torch::cat({i_o, m_m, occluded_region(m_a, m_m)}, 1), pr.features, pr.attention).rgb;
}

std::vector<double> train_feedforward(FeedforwardNet& net, RgbNet& prior_net,
                                      const std::vector<FeedforwardSample>& data, int iterations, int batch_size,
                                      double lr, std::uint64_t seed) {
    require(!data.empty(), "train_feedforward: empty dataset");
    for (auto& p : prior_net->parameters()) p.set_requires_grad(false);
    net->train();
    prior_net->eval();
    torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(lr));
    std::vector<double> curve;
    for (int it = 0; it < iterations; ++it) {
        Rng rng(derive_seed(seed, "ff_batch", static_cast<std::uint64_t>(it)));
        std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
        std::vector<torch::Tensor> io, mm, ma, zp, tg;
        for (int b = 0; b < batch_size; ++b) {
            const auto& s = data[pick(rng)];
            io.push_back(s.i_o);
            mm.push_back(s.m_m);
            ma.push_back(s.m_a);
            zp.push_back(s.z0_prime);
            tg.push_back(s.target);
        }
        auto m = torch::stack(mm);
        auto pred = net->forward(prior_net, torch::stack(io), m, torch::stack(ma), torch::stack(zp));
        auto loss = inpainting_loss(pred, torch::stack(tg), m).total;
        const double v = loss.item<double>();
        if (!std::isfinite(v)) throw TrainingError("feedforward training diverged at iteration " + std::to_string(it));
        opt.zero_grad();
        loss.backward();
        opt.step();
        curve.push_back(v);
    }
    for (auto& p : prior_net->parameters()) p.set_requires_grad(true);
    return curve;
}

nlohmann::json to_json(const RgbNetOptions& o) {
    return {{"image_resolution", o.image_resolution}, {"latent_resolution", o.latent_resolution},
            {"latent_channels", o.latent_channels},   {"attr_dim", o.attr_dim},
            {"channels", o.channels},                 {"emb_dim", o.emb_dim},
            {"attn_dim", o.attn_dim},                 {"prior_channels", o.prior_channels}};
}

RgbNetOptions rgb_options_from_json(const nlohmann::json& j) {
    RgbNetOptions o;
    o.image_resolution = j.at("image_resolution");
    o.latent_resolution = j.at("latent_resolution");
    o.latent_channels = j.at("latent_channels");
    o.attr_dim = j.at("attr_dim");
    o.channels = j.at("channels").get<std::array<int64_t, 3>>();
    o.emb_dim = j.at("emb_dim");
    o.attn_dim = j.at("attn_dim");
    o.prior_channels = j.at("prior_channels");
    return o;
}

void save_rgb_net(const std::string& path, RgbNet& net, const nlohmann::json& extra) {
    nlohmann::json meta = extra;
    meta["kind"] = "rgb";
    meta["rgb_version"] = kRgbNetVersion;
    meta["options"] = to_json(net->opts);
    save_checkpoint(path, {{"net", net.ptr().get()}}, meta);
}

RgbNet load_rgb_net(const std::string& path, nlohmann::json* meta_out) {
    auto meta = read_checkpoint_meta(path);
    if (meta.value("kind", "") != "rgb") throw ConfigError(path + " is not an rgb checkpoint");
    if (meta.value("rgb_version", -1) != kRgbNetVersion) throw ConfigError("rgb network version mismatch in " + path);
    RgbNet net(rgb_options_from_json(meta.at("options")));
    load_checkpoint(path, {{"net", net.ptr().get()}});
    if (meta_out) *meta_out = meta;
    return net;
}

}  // namespace deocc
