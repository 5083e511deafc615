#pragma once

#include <map>
#include <string>
#include <vector>

#include "nrd/nn_ops.h"
#include "nrd/nrd_core.h"
#include "nrd/rng.h"

namespace nrd {

// Encoder: five conv3x3/stride2 -> ReLU -> conv3x3/stride1 -> ReLU stages,
// overall downsample 32, low-level tap after stage 2 (stride 4). No
// normalization layers anywhere; every block is conv + ReLU.

constexpr int kEncoderStages = 5;
constexpr int kEncoderStride = 32; // 2^5
constexpr int kLowLevelStride = 4; // tap after stage 2

enum class DecoderKind { Nrd, Bilinear, Duc };

inline const char* decoder_name(DecoderKind k) {
    switch (k) {
        case DecoderKind::Nrd: return "nrd";
        case DecoderKind::Bilinear: return "bilinear";
        case DecoderKind::Duc: return "duc";
    }
    return "?";
}

struct EncoderConfig {
    std::array<int, kEncoderStages> widths = {16, 32, 64, 128, 256};
    int controller_hidden = 512;
    bool use_neck = false; // 1x1 D->D conv + ReLU after stage 5

    int feature_channels() const { return widths[kEncoderStages - 1]; }
    int low_level_channels() const { return widths[1]; }

    void validate() const {
        for (int w : widths) check_contract(w >= 1, "encoder stage width must be >= 1");
        check_contract(controller_hidden >= 1, "controller hidden width must be >= 1");
    }
};

struct ModelConfig {
    EncoderConfig enc;
    NrdConfig nrd;
    DecoderKind decoder = DecoderKind::Nrd;

    void validate() const {
        enc.validate();
        nrd.validate();
        if (decoder == DecoderKind::Nrd)
            check_contract(nrd.patch() == kEncoderStride,
                           "NRD patch extent must equal the encoder stride (s = 8)");
    }
};

template <typename T>
using ParamMap = std::map<std::string, TensorT<T>>;

// One row per trainable tensor; order is the init draw order and is part of
// the checkpoint contract.
struct ParamSpec {
    std::string name;
    Shape shape;    // [Cout, Cin, k, k] for weights, [Cout] for biases
    int fan_in = 0; // Cin * k * k, 0 for biases
};

inline std::vector<ParamSpec> param_schema(const ModelConfig& cfg) {
    cfg.validate();
    std::vector<ParamSpec> specs;
    auto conv = [&](const std::string& name, int cin, int cout, int k) {
        specs.push_back({name + ".w", Shape{cout, cin, k, k}, cin * k * k});
        specs.push_back({name + ".b", Shape{cout}, 0});
    };
    int prev = 3;
    for (int stage = 1; stage <= kEncoderStages; ++stage) {
        int width = cfg.enc.widths[static_cast<std::size_t>(stage - 1)];
        conv("enc.stage" + std::to_string(stage) + ".conv1", prev, width, 3);
        conv("enc.stage" + std::to_string(stage) + ".conv2", width, width, 3);
        prev = width;
    }
    const int d = cfg.enc.feature_channels();
    if (cfg.enc.use_neck) conv("enc.neck", d, d, 1);
    switch (cfg.decoder) {
        case DecoderKind::Nrd: {
            if (cfg.nrd.guide_channels > 0) {
                const int cl = cfg.enc.low_level_channels();
                conv("guide.conv1", cl, cl, 3);
                conv("guide.conv2", cl, cfg.nrd.guide_channels, 3);
            }
            ParamLayout lay = build_param_layout(cfg.nrd);
            conv("ctrl.conv1", d, cfg.enc.controller_hidden, 3);
            conv("ctrl.conv2", cfg.enc.controller_hidden, lay.total, 1);
            break;
        }
        case DecoderKind::Bilinear:
            conv("head.bilinear", d, cfg.nrd.classes, 1);
            break;
        case DecoderKind::Duc:
            conv("head.duc", d, kEncoderStride * kEncoderStride * cfg.nrd.classes, 1);
            break;
    }
    return specs;
}

// Kaiming-uniform weights (bound sqrt(6/fan_in)), zero biases. The final
// controller conv instead gets N(0, 0.01^2) weights so the generated networks
// start near zero and the softmax starts near uniform.
template <typename T>
ParamMap<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
    Pcg32 rng = named_stream(seed, "init");
    ParamMap<T> params;
    for (const ParamSpec& spec : param_schema(cfg)) {
        if (spec.fan_in == 0) {
            TensorT<T> t(spec.shape);
            params.emplace(spec.name, std::move(t));
        } else if (spec.name == "ctrl.conv2.w") {
            params.emplace(spec.name, rand_normal<T>(rng, spec.shape, 0.0, 0.01));
        } else {
            double bound = std::sqrt(6.0 / spec.fan_in);
            params.emplace(spec.name, rand_uniform<T>(rng, spec.shape, -bound, bound));
        }
    }
    return params;
}

template <typename T>
const TensorT<T>& param(const ParamMap<T>& params, const std::string& name) {
    auto it = params.find(name);
    check_contract(it != params.end(), "missing parameter: " + name);
    return it->second;
}

// Everything the backward pass needs; enc_out[i] is the post-ReLU output of
// encoder conv i (stage-major, two convs per stage), enc_out[3] the low-level
// tap, feat the decoder input.
template <typename T>
struct ForwardCache {
    TensorT<T> image;
    std::vector<TensorT<T>> enc_out;
    TensorT<T> neck_out;
    TensorT<T> feat;
    TensorT<T> guide_mid;
    TensorT<T> guidance;
    TensorT<T> ctrl_mid;
    TensorT<T> theta_map;
    TensorT<T> head_pre; // baseline 1x1 conv output
    TensorT<T> logits;
};

namespace detail {

template <typename T>
ConvSpec enc_conv_spec(int idx, const ParamMap<T>& params) {
    int stage = idx / 2 + 1, sub = idx % 2 + 1;
    const auto& w =
        param(params, "enc.stage" + std::to_string(stage) + ".conv" + std::to_string(sub) + ".w");
    ConvSpec spec;
    spec.out_channels = w.dim(0);
    spec.in_channels = w.dim(1);
    spec.kernel = 3;
    spec.stride = sub == 1 ? 2 : 1;
    return spec;
}

inline std::string enc_conv_name(int idx) {
    return "enc.stage" + std::to_string(idx / 2 + 1) + ".conv" + std::to_string(idx % 2 + 1);
}

} // namespace detail

template <typename T>
void encoder_forward(const TensorT<T>& image, const ParamMap<T>& params, const ModelConfig& cfg,
                     ForwardCache<T>& cache) {
    check_valid(image.ndim() == 3 && image.dim(2) == 3,
                "encoder input must be [H,W,3], got " + shape_str(image.shape));
    check_valid(image.dim(0) % kEncoderStride == 0 && image.dim(1) % kEncoderStride == 0,
                "input extents must be divisible by 32");
    cache.image = image;
    cache.enc_out.clear();
    const TensorT<T>* cur = &cache.image;
    for (int i = 0; i < 2 * kEncoderStages; ++i) {
        ConvSpec spec = detail::enc_conv_spec(i, params);
        std::string name = detail::enc_conv_name(i);
        cache.enc_out.push_back(
            relu(conv2d(*cur, spec, param(params, name + ".w"), param(params, name + ".b"))));
        cur = &cache.enc_out.back();
    }
    if (cfg.enc.use_neck) {
        ConvSpec spec{cfg.enc.feature_channels(), cfg.enc.feature_channels(), 1, 1};
        cache.neck_out = relu(
            conv2d(*cur, spec, param(params, "enc.neck.w"), param(params, "enc.neck.b")));
        cache.feat = cache.neck_out;
    } else {
        cache.feat = *cur;
    }
}

template <typename T>
const TensorT<T>& low_level_tap(const ForwardCache<T>& cache) {
    check_contract(cache.enc_out.size() == 2 * kEncoderStages, "encoder cache not populated");
    return cache.enc_out[3];
}

template <typename T>
TensorT<T> guidance_head_forward(const TensorT<T>& low_level, const ParamMap<T>& params, int c_m,
                                 TensorT<T>* mid_out = nullptr) {
    const int cl = low_level.dim(2);
    ConvSpec s1{cl, cl, 3, 1};
    TensorT<T> mid =
        relu(conv2d(low_level, s1, param(params, "guide.conv1.w"), param(params, "guide.conv1.b")));
    ConvSpec s2{cl, c_m, 3, 1};
    TensorT<T> out =
        conv2d(mid, s2, param(params, "guide.conv2.w"), param(params, "guide.conv2.b"));
    if (mid_out) *mid_out = std::move(mid);
    return out;
}

template <typename T>
TensorT<T> controller_forward(const TensorT<T>& feat, const ParamMap<T>& params,
                              const ModelConfig& cfg, const ParamLayout& lay,
                              TensorT<T>* mid_out = nullptr) {
    const int d = feat.dim(2), hidden = cfg.enc.controller_hidden;
    ConvSpec s1{d, hidden, 3, 1};
    TensorT<T> mid =
        relu(conv2d(feat, s1, param(params, "ctrl.conv1.w"), param(params, "ctrl.conv1.b")));
    ConvSpec s2{hidden, lay.total, 1, 1};
    TensorT<T> theta =
        conv2d(mid, s2, param(params, "ctrl.conv2.w"), param(params, "ctrl.conv2.b"));
    if (mid_out) *mid_out = std::move(mid);
    return theta;
}

// Full pipeline: encoder -> (guidance head) -> controller -> decode, or the
// baseline heads on the same encoder output. Returns full-resolution logits.
template <typename T>
TensorT<T> model_forward(const TensorT<T>& image, const ParamMap<T>& params, const ModelConfig& cfg,
                         ForwardCache<T>& cache) {
    cfg.validate();
    encoder_forward(image, params, cfg, cache);
    switch (cfg.decoder) {
        case DecoderKind::Nrd: {
            ParamLayout lay = build_param_layout(cfg.nrd);
            const TensorT<T>* guidance = nullptr;
            if (cfg.nrd.guide_channels > 0) {
                cache.guidance = guidance_head_forward(low_level_tap(cache), params,
                                                       cfg.nrd.guide_channels, &cache.guide_mid);
                guidance = &cache.guidance;
            }
            cache.theta_map = controller_forward(cache.feat, params, cfg, lay, &cache.ctrl_mid);
            cache.logits = nrd_decode(cache.theta_map, guidance, cfg.nrd, lay);
            break;
        }
        case DecoderKind::Bilinear: {
            ConvSpec spec{cache.feat.dim(2), cfg.nrd.classes, 1, 1};
            cache.head_pre = conv2d(cache.feat, spec, param(params, "head.bilinear.w"),
                                    param(params, "head.bilinear.b"));
            cache.logits = bilinear_resize(cache.head_pre, cache.feat.dim(0) * kEncoderStride,
                                           cache.feat.dim(1) * kEncoderStride);
            break;
        }
        case DecoderKind::Duc: {
            const int r = kEncoderStride;
            ConvSpec spec{cache.feat.dim(2), r * r * cfg.nrd.classes, 1, 1};
            cache.head_pre = conv2d(cache.feat, spec, param(params, "head.duc.w"),
                                    param(params, "head.duc.b"));
            cache.logits = depth_to_space(cache.head_pre, r);
            break;
        }
    }
    return cache.logits;
}

namespace detail {

template <typename T>
void add_grad(ParamMap<T>& grads, const std::string& name, TensorT<T>&& g) {
    auto it = grads.find(name);
    if (it == grads.end()) {
        grads.emplace(name, std::move(g));
        return;
    }
    check_contract(it->second.same_shape(g), "gradient shape mismatch for " + name);
    for (std::int64_t i = 0; i < g.numel(); ++i) it->second[i] += g[i];
}

// conv + ReLU block backward: d is the gradient at the post-ReLU output.
template <typename T>
TensorT<T> conv_relu_backward(const TensorT<T>& input, const TensorT<T>& post, const ConvSpec& spec,
                              const std::string& name, const ParamMap<T>& params,
                              ParamMap<T>& grads, const TensorT<T>& d) {
    TensorT<T> d_pre = relu_backward(post, d);
    ConvGrads<T> g = conv2d_backward(input, spec, param(params, name + ".w"), d_pre);
    add_grad(grads, name + ".w", std::move(g.d_weights));
    add_grad(grads, name + ".b", std::move(g.d_bias));
    return std::move(g.d_input);
}

} // namespace detail

// Gradients for every parameter of the active configuration, keyed by the
// schema names. d_logits must match cache.logits.
template <typename T>
ParamMap<T> model_backward(const ForwardCache<T>& cache, const ParamMap<T>& params,
                           const ModelConfig& cfg, const TensorT<T>& d_logits) {
    check_contract(d_logits.same_shape(cache.logits), "model upstream gradient shape mismatch");
    ParamMap<T> grads;
    TensorT<T> d_feat;
    TensorT<T> d_low_extra;

    switch (cfg.decoder) {
        case DecoderKind::Nrd: {
            ParamLayout lay = build_param_layout(cfg.nrd);
            const TensorT<T>* guidance =
                cfg.nrd.guide_channels > 0 ? &cache.guidance : nullptr;
            NrdDecodeGrads<T> dg =
                nrd_decode_backward(cache.theta_map, guidance, cfg.nrd, lay, d_logits);

            const int d = cache.feat.dim(2), hidden = cfg.enc.controller_hidden;
            ConvGrads<T> g2 = conv2d_backward(cache.ctrl_mid, ConvSpec{hidden, lay.total, 1, 1},
                                              param(params, "ctrl.conv2.w"), dg.d_theta_map);
            detail::add_grad(grads, "ctrl.conv2.w", std::move(g2.d_weights));
            detail::add_grad(grads, "ctrl.conv2.b", std::move(g2.d_bias));
            d_feat = detail::conv_relu_backward(cache.feat, cache.ctrl_mid,
                                                ConvSpec{d, hidden, 3, 1}, "ctrl.conv1", params,
                                                grads, g2.d_input);

            if (cfg.nrd.guide_channels > 0) {
                const TensorT<T>& low = low_level_tap(cache);
                const int cl = low.dim(2);
                ConvGrads<T> gg2 =
                    conv2d_backward(cache.guide_mid, ConvSpec{cl, cfg.nrd.guide_channels, 3, 1},
                                    param(params, "guide.conv2.w"), dg.d_guidance);
                detail::add_grad(grads, "guide.conv2.w", std::move(gg2.d_weights));
                detail::add_grad(grads, "guide.conv2.b", std::move(gg2.d_bias));
                d_low_extra = detail::conv_relu_backward(low, cache.guide_mid,
                                                         ConvSpec{cl, cl, 3, 1}, "guide.conv1",
                                                         params, grads, gg2.d_input);
            }
            break;
        }
        case DecoderKind::Bilinear: {
            TensorT<T> d_pre =
                bilinear_resize_backward(d_logits, cache.head_pre.dim(0), cache.head_pre.dim(1));
            ConvGrads<T> g =
                conv2d_backward(cache.feat, ConvSpec{cache.feat.dim(2), cfg.nrd.classes, 1, 1},
                                param(params, "head.bilinear.w"), d_pre);
            detail::add_grad(grads, "head.bilinear.w", std::move(g.d_weights));
            detail::add_grad(grads, "head.bilinear.b", std::move(g.d_bias));
            d_feat = std::move(g.d_input);
            break;
        }
        case DecoderKind::Duc: {
            const int r = kEncoderStride;
            TensorT<T> d_pre = space_to_depth(d_logits, r);
            ConvGrads<T> g = conv2d_backward(
                cache.feat, ConvSpec{cache.feat.dim(2), r * r * cfg.nrd.classes, 1, 1},
                param(params, "head.duc.w"), d_pre);
            detail::add_grad(grads, "head.duc.w", std::move(g.d_weights));
            detail::add_grad(grads, "head.duc.b", std::move(g.d_bias));
            d_feat = std::move(g.d_input);
            break;
        }
    }

    TensorT<T> d = std::move(d_feat);
    if (cfg.enc.use_neck) {
        const int dch = cfg.enc.feature_channels();
        d = detail::conv_relu_backward(cache.enc_out.back(), cache.neck_out,
                                       ConvSpec{dch, dch, 1, 1}, "enc.neck", params, grads, d);
    }
    for (int i = 2 * kEncoderStages - 1; i >= 0; --i) {
        if (i == 3 && d_low_extra.numel() > 0) {
            check_contract(d.same_shape(d_low_extra), "low-level gradient shape mismatch");
            for (std::int64_t k = 0; k < d.numel(); ++k) d[k] += d_low_extra[k];
        }
        const TensorT<T>& input = i == 0 ? cache.image : cache.enc_out[static_cast<std::size_t>(i - 1)];
        d = detail::conv_relu_backward(input, cache.enc_out[static_cast<std::size_t>(i)],
                                       detail::enc_conv_spec(i, params),
                                       detail::enc_conv_name(i), params, grads, d);
    }
    return grads;
}

} // namespace nrd
