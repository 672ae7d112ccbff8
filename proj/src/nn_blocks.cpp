#include "deocc/nn_blocks.hpp"

#include <cmath>

#include "deocc/errors.hpp"

namespace F = torch::nn::functional;

namespace deocc::nn {

namespace {

int64_t groups_for(int64_t ch) {
    for (int64_t g : {8, 4, 2})
        if (ch % g == 0) return g;
    return 1;
}

torch::nn::Conv2d make_conv3(int64_t in, int64_t out, int64_t stride = 1) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

torch::nn::Conv2d make_conv1(int64_t in, int64_t out) { return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1)); }

torch::Tensor upsample_to(const torch::Tensor& x, int64_t size) {
    if (x.size(2) == size) return x;
    return F::interpolate(x, F::InterpolateFuncOptions()
                                 .size(std::vector<int64_t>{size, size})
                                 .mode(torch::kNearest));
}

bool is_pow2(int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

int log2i(int64_t v) {
    int k = 0;
    while ((int64_t{1} << k) < v) ++k;
    return k;
}

}  // namespace

torch::Tensor timestep_embedding(const torch::Tensor& t, int64_t dim) {
    require(dim % 2 == 0, "timestep_embedding: dim must be even");
    const int64_t half = dim / 2;
    auto freqs = torch::exp(-std::log(10000.0) * torch::arange(half, torch::kFloat) / static_cast<double>(half));
    auto args = t.to(torch::kFloat).unsqueeze(1) * freqs.unsqueeze(0);
    return torch::cat({torch::sin(args), torch::cos(args)}, 1);
}

void zero_init(torch::nn::Conv2d conv) {
    torch::NoGradGuard g;
    conv->weight.zero_();
    if (conv->bias.defined()) conv->bias.zero_();
}

ResBlockImpl::ResBlockImpl(int64_t in_ch, int64_t out_ch, int64_t emb_dim) {
    norm1 = register_module("norm1", torch::nn::GroupNorm(groups_for(in_ch), in_ch));
    conv1 = register_module("conv1", make_conv3(in_ch, out_ch));
    norm2 = register_module("norm2", torch::nn::GroupNorm(groups_for(out_ch), out_ch));
    conv2 = register_module("conv2", make_conv3(out_ch, out_ch));
    if (in_ch != out_ch) skip = register_module("skip", make_conv1(in_ch, out_ch));
    if (emb_dim > 0) emb_proj = register_module("emb_proj", torch::nn::Linear(emb_dim, out_ch));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& emb) {
    auto h = conv1(F::silu(norm1(x)));
    if (emb.defined() && emb_proj) h = h + emb_proj(F::silu(emb)).unsqueeze(-1).unsqueeze(-1);
    h = conv2(F::silu(norm2(h)));
    return (skip ? skip(x) : x) + h;
}

CrossAttentionImpl::CrossAttentionImpl(int64_t channels, int64_t ctx_dim, int64_t attn_dim_) : attn_dim(attn_dim_) {
    norm = register_module("norm", torch::nn::GroupNorm(groups_for(channels), channels));
    to_q = register_module("to_q", torch::nn::Linear(torch::nn::LinearOptions(channels, attn_dim).bias(false)));
    to_k = register_module("to_k", torch::nn::Linear(torch::nn::LinearOptions(ctx_dim, attn_dim).bias(false)));
    to_v = register_module("to_v", torch::nn::Linear(torch::nn::LinearOptions(ctx_dim, attn_dim).bias(false)));
    to_out = register_module("to_out", make_conv1(attn_dim, channels));
    null_k = register_parameter("null_k", torch::randn({1, 1, attn_dim}) * 0.02);
    null_v = register_parameter("null_v", torch::zeros({1, 1, attn_dim}));
}

AttentionResult CrossAttentionImpl::forward(const torch::Tensor& x, const torch::Tensor& ctx,
                                            const torch::Tensor& ctx_valid) {
    const int64_t B = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
    require(ctx.dim() == 3 && ctx.size(0) == B, "cross-attention: context must be [B, N, D]");
    auto q = to_q(norm(x).flatten(2).transpose(1, 2));  // [B, HW, A]
    auto k = torch::cat({null_k.expand({B, 1, attn_dim}), to_k(ctx)}, 1);
    auto v = torch::cat({null_v.expand({B, 1, attn_dim}), to_v(ctx)}, 1);
    auto scores = torch::matmul(q, k.transpose(1, 2)) / std::sqrt(static_cast<double>(attn_dim));
    if (ctx_valid.defined()) {
        auto keep = torch::cat({torch::ones({B, 1}, ctx_valid.options()), ctx_valid}, 1).to(torch::kBool);
        scores = scores.masked_fill(keep.logical_not().unsqueeze(1), -1e9);
    }
    auto maps = torch::softmax(scores, -1);
    auto out = torch::matmul(maps, v).transpose(1, 2).reshape({B, attn_dim, H, W});
    (void)C;
    return {x + to_out(out), maps};
}

LatentUNetImpl::LatentUNetImpl(const LatentUNetOptions& o) : opts(o) {
    const auto [c0, c1, c2] = o.channels;
    const int64_t e = o.emb_dim;
    time_mlp = register_module("time_mlp", torch::nn::Sequential(torch::nn::Linear(e, e), torch::nn::SiLU(),
                                                                 torch::nn::Linear(e, e)));
    in_conv = register_module("in_conv", make_conv3(o.in_channels, c0));
    enc0 = register_module("enc0", ResBlock(c0, c0, e));
    down0 = register_module("down0", make_conv3(c0, c1, 2));
    enc1 = register_module("enc1", ResBlock(c1, c1, e));
    down1 = register_module("down1", make_conv3(c1, c2, 2));
    enc2 = register_module("enc2", ResBlock(c2, c2, e));
    mid = register_module("mid", ResBlock(c2, c2, e));
    dec2 = register_module("dec2", ResBlock(2 * c2, c2, e));
    up1 = register_module("up1", make_conv3(c2, c1));
    dec1 = register_module("dec1", ResBlock(2 * c1, c1, e));
    attn1 = register_module("attn1", CrossAttention(c1, o.ctx_dim, o.attn_dim));
    up0 = register_module("up0", make_conv3(c1, c0));
    dec0 = register_module("dec0", ResBlock(2 * c0, c0, e));
    attn0 = register_module("attn0", CrossAttention(c0, o.ctx_dim, o.attn_dim));
    if (o.out_channels > 0) {
        out_norm = register_module("out_norm", torch::nn::GroupNorm(groups_for(c0), c0));
        out_conv = register_module("out_conv", make_conv3(c0, o.out_channels));
        zero_init(out_conv);
    }
    prior_conv = register_module("prior_conv", make_conv3(c0, o.prior_channels));
}

LatentUNetOutput LatentUNetImpl::forward(const torch::Tensor& x, const torch::Tensor& t, const torch::Tensor& ctx,
                                         const torch::Tensor& ctx_valid, const torch::Tensor& extra_emb,
                                         const std::vector<torch::Tensor>& control, bool want_prior) {
    require(x.dim() == 4 && x.size(1) == opts.in_channels, "latent unet: unexpected input channels");
    require(x.size(2) % 4 == 0, "latent unet: latent size must be divisible by 4");
    require(control.empty() || control.size() == 3, "latent unet: expected 3 control residuals");
    auto emb = time_mlp->forward(timestep_embedding(t, opts.emb_dim));
    if (extra_emb.defined()) emb = emb + extra_emb;

    auto h = in_conv(x);
    auto h0 = enc0(h, emb);
    auto h1 = enc1(down0(h0), emb);
    auto h2 = enc2(down1(h1), emb);
    h = mid(h2, emb);

    LatentUNetOutput out;
    auto d = dec2(torch::cat({h, h2}, 1), emb);
    if (!control.empty()) d = d + control[0];
    if (want_prior) out.features.push_back(d);

    d = dec1(torch::cat({up1(upsample_to(d, h1.size(2))), h1}, 1), emb);
    if (!control.empty()) d = d + control[1];
    auto a1 = attn1(d, ctx, ctx_valid);
    d = a1.out;
    if (want_prior) out.features.push_back(d);

    d = dec0(torch::cat({up0(upsample_to(d, h0.size(2))), h0}, 1), emb);
    if (!control.empty()) d = d + control[2];
    auto a0 = attn0(d, ctx, ctx_valid);
    d = a0.out;
    if (want_prior) {
        out.features.push_back(d);
        out.features.push_back(F::silu(prior_conv(upsample_to(d, 2 * d.size(2)))));
        auto to_map = [](const torch::Tensor& m, int64_t r) {
            return m.transpose(1, 2).reshape({m.size(0), m.size(2), r, r});
        };
        out.attention.push_back(to_map(a1.maps, h1.size(2)));
        out.attention.push_back(to_map(a0.maps, h0.size(2)));
    }
    if (opts.out_channels > 0) out.eps = out_conv(F::silu(out_norm(d)));
    return out;
}

ControlBranchImpl::ControlBranchImpl(const ControlBranchOptions& o) : opts(o) {
    require(o.hint_resolution % o.latent_resolution == 0 && is_pow2(o.hint_resolution / o.latent_resolution),
            "control branch: hint resolution must be a power-of-two multiple of the latent resolution");
    const auto [c0, c1, c2] = o.channels;
    const int downs = log2i(o.hint_resolution / o.latent_resolution);
    torch::nn::Sequential seq;
    int64_t ch = 16;
    seq->push_back(make_conv3(o.hint_channels, ch));
    seq->push_back(torch::nn::SiLU());
    for (int i = 0; i < downs; ++i) {
        const int64_t next = std::min<int64_t>(ch * 2, 64);
        seq->push_back(make_conv3(ch, next, 2));
        seq->push_back(torch::nn::SiLU());
        ch = next;
    }
    seq->push_back(make_conv3(ch, c0));
    hint_net = register_module("hint_net", seq);
    z_in = register_module("z_in", make_conv3(o.latent_channels, c0));
    cond_proj = register_module("cond_proj", torch::nn::Linear(o.cond_dim, o.emb_dim));
    enc0 = register_module("enc0", ResBlock(c0, c0, o.emb_dim));
    down0 = register_module("down0", make_conv3(c0, c1, 2));
    enc1 = register_module("enc1", ResBlock(c1, c1, o.emb_dim));
    down1 = register_module("down1", make_conv3(c1, c2, 2));
    enc2 = register_module("enc2", ResBlock(c2, c2, o.emb_dim));
    zero0 = register_module("zero0", make_conv1(c0, c0));
    zero1 = register_module("zero1", make_conv1(c1, c1));
    zero2 = register_module("zero2", make_conv1(c2, c2));
    zero_init(zero0);
    zero_init(zero1);
    zero_init(zero2);
}

std::vector<torch::Tensor> ControlBranchImpl::forward(const torch::Tensor& hint, const torch::Tensor& z,
                                                      const torch::Tensor& cond) {
    require(hint.dim() == 4 && hint.size(1) == opts.hint_channels && hint.size(2) == opts.hint_resolution,
            "control branch: unexpected hint shape");
    require(z.dim() == 4 && z.size(1) == opts.latent_channels && z.size(2) == opts.latent_resolution,
            "control branch: unexpected latent shape");
    auto emb = cond_proj(cond);
    auto h = hint_net->forward(hint) + z_in(z);
    auto h0 = enc0(h, emb);
    auto h1 = enc1(down0(h0), emb);
    auto h2 = enc2(down1(h1), emb);
    return {zero2(h2), zero1(h1), zero0(h0)};
}

std::vector<int64_t> ControlBranchImpl::output_scales() const {
    const int64_t L = opts.latent_resolution;
    return {L / 4, L / 2, L};
}

ConvGNImpl::ConvGNImpl(int64_t in_ch, int64_t out_ch, int64_t stride) {
    conv = register_module("conv", make_conv3(in_ch, out_ch, stride));
    norm = register_module("norm", torch::nn::GroupNorm(groups_for(out_ch), out_ch));
}

torch::Tensor ConvGNImpl::forward(const torch::Tensor& x) { return F::silu(norm(conv(x))); }

ImageUNetImpl::ImageUNetImpl(const ImageUNetOptions& o) : opts(o) {
    const auto& ch = o.channels;
    const int n = static_cast<int>(ch.size());
    require(n >= 2, "image unet: need at least two levels");
    require(o.resolution % (int64_t{1} << (n - 1)) == 0, "image unet: resolution too small for the level count");
    require(o.mask_head || o.rgb_head, "image unet: needs at least one head");
    in_conv = register_module("in_conv", ConvGN(o.in_channels, ch[0], 1));
    for (int i = 0; i < n; ++i) {
        if (i > 0) enc_down.push_back(register_module("enc_down" + std::to_string(i), ConvGN(ch[i - 1], ch[i], 2)));
        enc_conv.push_back(register_module("enc_conv" + std::to_string(i), ConvGN(ch[i], ch[i], 1)));
    }
    for (int i = 0; i + 1 < n; ++i) {
        dec_conv1.push_back(register_module("dec_conv1_" + std::to_string(i), ConvGN(ch[i + 1] + ch[i], ch[i], 1)));
        dec_conv2.push_back(register_module("dec_conv2_" + std::to_string(i), ConvGN(ch[i], ch[i], 1)));
    }
    auto level_of = [&](int64_t res) {
        require(res > 0 && o.resolution % res == 0 && is_pow2(o.resolution / res), "image unet: bad prior resolution");
        const int lvl = log2i(o.resolution / res);
        require(lvl < n, "image unet: prior resolution below the bottleneck");
        return lvl;
    };
    if (o.use_prior) {
        for (int m = 0; m < 4; ++m) {
            const int lvl = level_of(o.prior.feature_resolutions[m]);
            auto c = register_module("feat_adapter" + std::to_string(m), make_conv1(o.prior.feature_channels[m], ch[lvl]));
            zero_init(c);
            feature_adapters.push_back(c);
            feature_level.push_back(lvl);
        }
        for (int m = 0; m < 2; ++m) {
            const int lvl = level_of(o.prior.attention_resolutions[m]);
            auto c = register_module("attn_gate" + std::to_string(m), make_conv1(o.prior.attention_tokens[m], ch[lvl]));
            zero_init(c);
            attention_gates.push_back(c);
            attention_level.push_back(lvl);
        }
    }
    if (o.mask_head) {
        require(o.mask_classes == 1 || o.mask_classes == 2, "image unet: mask_classes must be 1 or 2");
        mask_out = register_module("mask_out", make_conv3(ch[0], o.mask_classes));
        zero_init(mask_out);
    }
    if (o.rgb_head) rgb_out = register_module("rgb_out", make_conv3(ch[0], 3));
    if (o.modal_skip_channel >= 0) {
        require(o.modal_skip_channel < o.in_channels, "image unet: modal skip channel out of range");
        modal_gain = register_parameter("modal_gain", torch::zeros({1}));  // untrained head stays at 0.5
    }
}

void ImageUNetImpl::zero_prior_adapters() {
    for (auto& c : feature_adapters) zero_init(c);
    for (auto& c : attention_gates) zero_init(c);
}

ImageUNetOutput ImageUNetImpl::forward(const torch::Tensor& x, const std::vector<torch::Tensor>& features,
                                       const std::vector<torch::Tensor>& attention) {
    require(x.dim() == 4 && x.size(1) == opts.in_channels && x.size(2) == opts.resolution &&
                x.size(3) == opts.resolution,
            "image unet: unexpected input shape");
    const int n = static_cast<int>(opts.channels.size());
    if (opts.use_prior) {
        require(features.size() == 4 && attention.size() == 2, "image unet: prior needs 4 feature and 2 attention maps");
    }
    auto inject = [&](torch::Tensor h, int lvl) {
        if (!opts.use_prior) return h;
        for (std::size_t m = 0; m < feature_adapters.size(); ++m)
            if (feature_level[m] == lvl) h = h + feature_adapters[m](features[m]);
        for (std::size_t m = 0; m < attention_gates.size(); ++m)
            if (attention_level[m] == lvl) h = h * (1.0 + attention_gates[m](attention[m]));
        return h;
    };
    std::vector<torch::Tensor> skips;
    auto h = enc_conv[0](in_conv(x));
    skips.push_back(h);
    for (int i = 1; i < n; ++i) {
        h = enc_conv[i](enc_down[i - 1](h));
        skips.push_back(h);
    }
    h = inject(h, n - 1);
    for (int i = n - 2; i >= 0; --i) {
        h = dec_conv1[i](torch::cat({upsample_to(h, skips[i].size(2)), skips[i]}, 1));
        h = inject(dec_conv2[i](h), i);
    }
    ImageUNetOutput out;
    if (opts.mask_head) {
        out.mask_logits = mask_out(h);
        if (opts.modal_skip_channel >= 0) {
            auto skip = modal_gain * (2.0 * x.narrow(1, opts.modal_skip_channel, 1) - 1.0);
            if (opts.mask_classes == 2) skip = torch::cat({torch::zeros_like(skip), skip}, 1);
            out.mask_logits = out.mask_logits + skip;
        }
    }
    if (opts.rgb_head) out.rgb = torch::sigmoid(rgb_out(h));
    return out;
}

}  // namespace deocc::nn
