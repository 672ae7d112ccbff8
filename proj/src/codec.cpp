#include "deocc/codec.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "deocc/checkpoint.hpp"
#include "deocc/errors.hpp"
#include "deocc/rng.hpp"
#include "deocc/tensor_io.hpp"

namespace deocc {

namespace {

namespace tnn = torch::nn;

void conv_gn(tnn::Sequential& seq, int64_t in, int64_t out, int64_t stride = 1) {
    seq->push_back(tnn::Conv2d(tnn::Conv2dOptions(in, out, 3).stride(stride).padding(1)));
    seq->push_back(tnn::GroupNorm(8, out));
    seq->push_back(tnn::SiLU());
}

tnn::Upsample up2() {
    return tnn::Upsample(tnn::UpsampleOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest));
}

}  // namespace

CodecEncoderImpl::CodecEncoderImpl(const CodecOptions& o) {
    require(o.downsample == 8, "codec: only a downsample factor of 8 is supported");
    const int64_t w = o.width;
    tnn::Sequential seq;
    conv_gn(seq, 3, w / 2);
    conv_gn(seq, w / 2, w, 2);
    conv_gn(seq, w, w);
    conv_gn(seq, w, 2 * w, 2);
    conv_gn(seq, 2 * w, 2 * w);
    conv_gn(seq, 2 * w, 2 * w, 2);
    conv_gn(seq, 2 * w, 2 * w);
    seq->push_back(tnn::Conv2d(tnn::Conv2dOptions(2 * w, o.latent_channels, 1)));
    net = register_module("net", seq);
}

torch::Tensor CodecEncoderImpl::forward(const torch::Tensor& x) { return net->forward(x); }

CodecDecoderImpl::CodecDecoderImpl(const CodecOptions& o) {
    const int64_t w = o.width;
    tnn::Sequential seq;
    seq->push_back(tnn::Conv2d(tnn::Conv2dOptions(o.latent_channels, 2 * w, 3).padding(1)));
    conv_gn(seq, 2 * w, 2 * w);
    conv_gn(seq, 2 * w, 2 * w);
    seq->push_back(up2());
    conv_gn(seq, 2 * w, 2 * w);
    conv_gn(seq, 2 * w, 2 * w);
    seq->push_back(up2());
    conv_gn(seq, 2 * w, w);
    conv_gn(seq, w, w);
    // last 2x through sub-pixel rearrangement
    seq->push_back(tnn::Conv2d(tnn::Conv2dOptions(w, 12, 3).padding(1)));
    seq->push_back(tnn::PixelShuffle(2));
    net = register_module("net", seq);
}

torch::Tensor CodecDecoderImpl::forward(const torch::Tensor& z) { return net->forward(z) + 0.5; }

CodecParams make_codec(const CodecOptions& opts, std::uint64_t seed) {
    torch::manual_seed(static_cast<std::uint64_t>(derive_seed(seed, "codec_init") >> 1));
    CodecParams p;
    p.opts = opts;
    p.encoder = CodecEncoder(opts);
    p.decoder = CodecDecoder(opts);
    return p;
}

torch::Tensor encode(const torch::Tensor& x, const CodecParams& params) {
    require(x.dim() == 4, "encode: expected [B, c, H, W]");
    require(x.size(1) == 1 || x.size(1) == 3, "encode: expected 1 or 3 channels");
    require(x.size(2) % params.opts.downsample == 0 && x.size(3) % params.opts.downsample == 0,
            "encode: height and width must be divisible by " + std::to_string(params.opts.downsample));
    auto in = x.size(1) == 1 ? x.expand({x.size(0), 3, x.size(2), x.size(3)}) : x;
    return params.encoder.ptr()->forward(in) * params.latent_scale;
}

torch::Tensor encode(const Image& img, const CodecParams& params) { return encode(to_tensor(img).unsqueeze(0), params); }

torch::Tensor encode(const Mask& m, const CodecParams& params) { return encode(to_tensor(m).unsqueeze(0), params); }

torch::Tensor decode_with(const CodecDecoder& decoder, const torch::Tensor& z, const CodecParams& params) {
    require(z.dim() == 4 && z.size(1) == params.opts.latent_channels, "decode: latent channel mismatch");
    return decoder.ptr()->forward(z / params.latent_scale).clamp(0.0, 1.0);
}

torch::Tensor decode(const torch::Tensor& z, const CodecParams& params) {
    return decode_with(params.decoder, z, params);
}

CodecTrainResult train_codec(const std::vector<SceneRecord>& records, const CodecOptions& opts,
                             const CodecTrainConfig& cfg) {
    require(records.size() >= 100, "train_codec needs at least 100 records");
    require(cfg.epochs >= 1 && cfg.batch_size >= 1, "train_codec: epochs and batch size must be positive");
    std::vector<torch::Tensor> items;
    items.reserve(records.size() * 3);
    for (const auto& r : records) {
        items.push_back(to_tensor(r.image_gt));
        items.push_back(to_tensor(r.image_occluded));
        items.push_back(to_tensor(r.mask_modal).expand({3, r.mask_modal.height, r.mask_modal.width}));
    }
    auto data = torch::stack(items);
    const auto n = static_cast<std::size_t>(data.size(0));

    CodecTrainResult res;
    res.params = make_codec(opts, cfg.seed);
    auto& p = res.params;
    std::vector<torch::Tensor> params = p.encoder->parameters();
    for (auto& t : p.decoder->parameters()) params.push_back(t);
    torch::optim::Adam opt(params, torch::optim::AdamOptions(cfg.lr));
    Rng rng(derive_seed(cfg.seed, "codec_batches"));
    std::vector<std::int64_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    const int total_steps = cfg.epochs * static_cast<int>((n + cfg.batch_size - 1) / cfg.batch_size);
    int step = 0;
    for (int e = 0; e < cfg.epochs; ++e) {
        std::shuffle(order.begin(), order.end(), rng);
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t b = 0; b < n; b += cfg.batch_size) {
            const std::size_t end = std::min(n, b + cfg.batch_size);
            auto idx = torch::tensor(std::vector<std::int64_t>(order.begin() + b, order.begin() + end), torch::kLong);
            auto x = data.index_select(0, idx);
            // cosine decay keeps late epochs stable
            const double lr = cfg.lr * 0.5 * (1.0 + std::cos(M_PI * step / std::max(1, total_steps)));
            for (auto& g : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(g.options()).lr(lr);
            auto loss = (p.decoder->forward(p.encoder->forward(x)) - x).pow(2).mean();
            const double lv = loss.item<double>();
            if (!std::isfinite(lv)) throw TrainingError("codec training diverged at epoch " + std::to_string(e + 1));
            opt.zero_grad();
            loss.backward();
            opt.step();
            sum += lv * static_cast<double>(end - b);
            count += end - b;
            ++step;
        }
        res.epoch_losses.push_back(sum / static_cast<double>(count));
    }
    // Unit-variance latents for the diffusion stage.
    {
        torch::NoGradGuard g;
        std::vector<torch::Tensor> zs;
        for (std::size_t b = 0; b < std::min<std::size_t>(n, 512); b += 64)
            zs.push_back(p.encoder->forward(data.slice(0, b, std::min<std::size_t>(n, b + 64))));
        const double sd = torch::cat(zs).std().item<double>();
        p.latent_scale = sd > 1e-8 ? 1.0 / sd : 1.0;
    }
    return res;
}

void save_codec(const std::string& path, const CodecParams& params, const std::string& config_hash) {
    nlohmann::json meta{{"kind", "codec"},
                        {"codec_version", params.version},
                        {"width", params.opts.width},
                        {"latent_channels", params.opts.latent_channels},
                        {"downsample", params.opts.downsample},
                        {"latent_scale", params.latent_scale},
                        {"config_hash", config_hash}};
    save_checkpoint(path, {{"encoder", params.encoder.ptr().get()}, {"decoder", params.decoder.ptr().get()}}, meta);
}

CodecParams load_codec(const std::string& path) {
    auto meta = read_checkpoint_meta(path);
    if (meta.value("kind", "") != "codec") throw ConfigError(path + " is not a codec checkpoint");
    if (meta.value("codec_version", -1) != kCodecVersion) throw ConfigError("codec version mismatch in " + path);
    CodecOptions o;
    o.width = meta.at("width");
    o.latent_channels = meta.at("latent_channels");
    o.downsample = meta.at("downsample");
    CodecParams p = make_codec(o, 0);
    load_checkpoint(path, {{"encoder", p.encoder.ptr().get()}, {"decoder", p.decoder.ptr().get()}});
    p.latent_scale = meta.at("latent_scale");
    return p;
}

FinetuneResult finetune_decoder(const torch::Tensor& z_do, const torch::Tensor& i_o, const torch::Tensor& m_m,
                                const CodecParams& init, const FinetuneConfig& cfg) {
    require(cfg.steps >= 0, "finetune_decoder: steps must be >= 0");
    require(cfg.lambda_vis >= 0.0, "finetune_decoder: lambda must be >= 0");
    require(z_do.dim() == 4 && z_do.size(0) == 1, "finetune_decoder: expected a single latent");
    require(i_o.dim() == 4 && m_m.dim() == 4 && m_m.size(1) == 1, "finetune_decoder: expected [1,3,H,W] and [1,1,H,W]");
    torch::AutoGradMode grad_on(true);  // callers often sit under NoGradGuard
    FinetuneResult res;
    res.theta_star = CodecDecoder(init.opts);
    copy_parameters(*init.decoder, *res.theta_star);
    {
        torch::NoGradGuard g;
        res.i_do = decode_with(res.theta_star, z_do, init);
    }
    require(res.i_do.sizes() == i_o.sizes(), "finetune_decoder: i_o shape differs from the decode");
    const auto vis = m_m;
    const auto inv = 1.0 - m_m;
    auto objective = [&](const torch::Tensor& out) {
        return ((out - res.i_do).pow(2) * inv).mean() + cfg.lambda_vis * ((out - i_o).pow(2) * vis).mean();
    };
    torch::optim::Adam opt(res.theta_star->parameters(), torch::optim::AdamOptions(cfg.lr));
    for (int s = 0; s < cfg.steps; ++s) {
        auto loss = objective(decode_with(res.theta_star, z_do, init));
        const double v = loss.item<double>();
        if (!std::isfinite(v)) throw OptimizationError("decoder fine-tuning produced a non-finite objective", s);
        res.objective.push_back(v);
        opt.zero_grad();
        loss.backward();
        opt.step();
    }
    torch::NoGradGuard g;
    res.i_do_star = decode_with(res.theta_star, z_do, init);
    const double final_v = objective(res.i_do_star).item<double>();
    if (!std::isfinite(final_v)) throw OptimizationError("decoder fine-tuning produced a non-finite objective", cfg.steps);
    res.objective.push_back(final_v);
    return res;
}

}  // namespace deocc
