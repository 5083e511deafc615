#pragma once

#include <array>
#include <optional>

#include "nrd/nn_ops.h"
#include "nrd/tensor.h"

namespace nrd {

// The representation network g_theta is three per-position affine layers
// (1x1 convs) whose parameters arrive as one flat vector per coarse-grid
// location. Patches never overlap: location (i,j) owns output block (i,j).

struct NrdConfig {
    int s = 8;                // representation grid extent per patch
    bool use_coords = true;   // feed the (x, y) coordinate map
    int guide_channels = 16;  // C_m, 0 disables guidance
    int hidden = 16;          // C_r
    int classes = 19;

    static constexpr int kUpsample = 4; // r = 4s, fixed bilinear factor

    int patch() const { return s * kUpsample; } // r
    int in_channels() const { return (use_coords ? 2 : 0) + guide_channels; }

    void validate() const {
        check_contract(s >= 1, "NrdConfig.s must be >= 1");
        check_contract(guide_channels >= 0, "NrdConfig.guide_channels must be >= 0");
        check_contract(hidden >= 1, "NrdConfig.hidden must be >= 1");
        check_contract(classes >= 1, "NrdConfig.classes must be >= 1");
        check_contract(in_channels() >= 1, "repr network needs coords or guidance");
    }
};

// Flat layout: layer-major, weights before bias, weights (out, in) row-major.
struct ParamLayout {
    struct Layer {
        int in = 0, out = 0;
        int w_off = 0, b_off = 0;
    };
    std::array<Layer, 3> layers;
    int weight_count = 0;
    int bias_count = 0;
    int total = 0;
};

inline ParamLayout build_param_layout(const NrdConfig& cfg) {
    cfg.validate();
    ParamLayout lay;
    const int ins[3] = {cfg.in_channels(), cfg.hidden, cfg.hidden};
    const int outs[3] = {cfg.hidden, cfg.hidden, cfg.classes};
    int off = 0;
    for (int l = 0; l < 3; ++l) {
        lay.layers[l].in = ins[l];
        lay.layers[l].out = outs[l];
        lay.layers[l].w_off = off;
        off += ins[l] * outs[l];
        lay.layers[l].b_off = off;
        off += outs[l];
        lay.weight_count += ins[l] * outs[l];
        lay.bias_count += outs[l];
    }
    lay.total = off;
    return lay;
}

template <typename T>
struct ReprParams {
    std::array<TensorT<T>, 3> w; // [out, in]
    std::array<TensorT<T>, 3> b; // [out]
};

template <typename T>
ReprParams<T> split_params(const T* theta, const ParamLayout& lay) {
    ReprParams<T> p{{TensorT<T>({1}), TensorT<T>({1}), TensorT<T>({1})},
                    {TensorT<T>({1}), TensorT<T>({1}), TensorT<T>({1})}};
    for (int l = 0; l < 3; ++l) {
        const auto& L = lay.layers[l];
        p.w[l] = TensorT<T>({L.out, L.in},
                            std::vector<T>(theta + L.w_off, theta + L.w_off + L.in * L.out));
        p.b[l] = TensorT<T>({L.out}, std::vector<T>(theta + L.b_off, theta + L.b_off + L.out));
    }
    return p;
}

template <typename T>
ReprParams<T> split_params(const TensorT<T>& theta, const ParamLayout& lay) {
    check_valid(theta.numel() == lay.total, "theta length does not match layout total");
    return split_params(theta.data.data(), lay);
}

template <typename T>
TensorT<T> join_params(const ReprParams<T>& p, const ParamLayout& lay) {
    TensorT<T> theta({lay.total});
    for (int l = 0; l < 3; ++l) {
        const auto& L = lay.layers[l];
        check_contract(p.w[l].shape == Shape{L.out, L.in}, "join_params weight shape mismatch");
        check_contract(p.b[l].shape == Shape{L.out}, "join_params bias shape mismatch");
        std::copy(p.w[l].data.begin(), p.w[l].data.end(), theta.data.begin() + L.w_off);
        std::copy(p.b[l].data.begin(), p.b[l].data.end(), theta.data.begin() + L.b_off);
    }
    return theta;
}

// Channel 0 is x = j/s (column), channel 1 is y = i/s (row).
template <typename T>
TensorT<T> make_coordinate_map(int s) {
    check_valid(s >= 1, "coordinate map extent must be >= 1");
    TensorT<T> q({s, s, 2});
    for (int i = 0; i < s; ++i)
        for (int j = 0; j < s; ++j) {
            q.at(i, j, 0) = static_cast<T>(j) / static_cast<T>(s);
            q.at(i, j, 1) = static_cast<T>(i) / static_cast<T>(s);
        }
    return q;
}

namespace detail {

// Gathers the per-position input vector: coords (when enabled) then guidance.
template <typename T>
void repr_input(const NrdConfig& cfg, const TensorT<T>* coord_map, const T* guidance_px, int i,
                int j, T* x) {
    int n = 0;
    if (cfg.use_coords) {
        x[n++] = coord_map->at(i, j, 0);
        x[n++] = coord_map->at(i, j, 1);
    }
    for (int ch = 0; ch < cfg.guide_channels; ++ch) x[n++] = guidance_px[ch];
}

} // namespace detail

// guidance_patch must be [s, s, C_m] when cfg.guide_channels > 0, ignored
// otherwise; coord_map likewise when cfg.use_coords.
template <typename T>
TensorT<T> eval_repr_network(const T* theta, const ParamLayout& lay, const NrdConfig& cfg,
                             const TensorT<T>* coord_map, const TensorT<T>* guidance_patch) {
    cfg.validate();
    if (cfg.use_coords) {
        check_contract(coord_map != nullptr && coord_map->shape == Shape{cfg.s, cfg.s, 2},
                       "coordinate map missing or wrong shape");
    }
    if (cfg.guide_channels > 0) {
        check_contract(guidance_patch != nullptr &&
                           guidance_patch->shape == Shape{cfg.s, cfg.s, cfg.guide_channels},
                       "guidance patch missing or wrong shape");
    }
    const int s = cfg.s, cin = cfg.in_channels(), hid = cfg.hidden, cls = cfg.classes;
    TensorT<T> g({s, s, cls});
    std::vector<T> x(static_cast<std::size_t>(cin));
    std::vector<T> h1(static_cast<std::size_t>(hid)), h2(static_cast<std::size_t>(hid));
    const auto& L1 = lay.layers[0];
    const auto& L2 = lay.layers[1];
    const auto& L3 = lay.layers[2];
    for (int i = 0; i < s; ++i) {
        for (int j = 0; j < s; ++j) {
            const T* gp = cfg.guide_channels > 0 ? &guidance_patch->at(i, j, 0) : nullptr;
            detail::repr_input(cfg, coord_map, gp, i, j, x.data());
            for (int o = 0; o < hid; ++o) {
                T acc = theta[L1.b_off + o];
                const T* wr = theta + L1.w_off + static_cast<std::size_t>(o) * cin;
                for (int k = 0; k < cin; ++k) acc += wr[k] * x[static_cast<std::size_t>(k)];
                h1[static_cast<std::size_t>(o)] = std::max(acc, T(0));
            }
            for (int o = 0; o < hid; ++o) {
                T acc = theta[L2.b_off + o];
                const T* wr = theta + L2.w_off + static_cast<std::size_t>(o) * hid;
                for (int k = 0; k < hid; ++k) acc += wr[k] * h1[static_cast<std::size_t>(k)];
                h2[static_cast<std::size_t>(o)] = std::max(acc, T(0));
            }
            T* out = &g.at(i, j, 0);
            for (int o = 0; o < cls; ++o) {
                T acc = theta[L3.b_off + o];
                const T* wr = theta + L3.w_off + static_cast<std::size_t>(o) * hid;
                for (int k = 0; k < hid; ++k) acc += wr[k] * h2[static_cast<std::size_t>(k)];
                out[o] = acc;
            }
        }
    }
    return g;
}

// Accumulates into d_theta (length layout.total) and, when guidance is in use,
// into d_guidance_patch [s, s, C_m]. Coordinates are constants and get no
// gradient. Hidden activations are recomputed rather than cached.
template <typename T>
void eval_repr_network_backward(const T* theta, const ParamLayout& lay, const NrdConfig& cfg,
                                const TensorT<T>* coord_map, const TensorT<T>* guidance_patch,
                                const TensorT<T>& d_g, T* d_theta, TensorT<T>* d_guidance_patch) {
    const int s = cfg.s, cin = cfg.in_channels(), hid = cfg.hidden, cls = cfg.classes;
    check_contract(d_g.shape == Shape{s, s, cls}, "repr upstream gradient shape mismatch");
    if (cfg.guide_channels > 0)
        check_contract(d_guidance_patch != nullptr &&
                           d_guidance_patch->shape == Shape{s, s, cfg.guide_channels},
                       "guidance gradient buffer missing or wrong shape");
    const auto& L1 = lay.layers[0];
    const auto& L2 = lay.layers[1];
    const auto& L3 = lay.layers[2];
    std::vector<T> x(static_cast<std::size_t>(cin));
    std::vector<T> h1(static_cast<std::size_t>(hid)), h2(static_cast<std::size_t>(hid));
    std::vector<T> dh2(static_cast<std::size_t>(hid)), dh1(static_cast<std::size_t>(hid));
    std::vector<T> dx(static_cast<std::size_t>(cin));
    for (int i = 0; i < s; ++i) {
        for (int j = 0; j < s; ++j) {
            const T* gp = cfg.guide_channels > 0 ? &guidance_patch->at(i, j, 0) : nullptr;
            detail::repr_input(cfg, coord_map, gp, i, j, x.data());
            for (int o = 0; o < hid; ++o) {
                T acc = theta[L1.b_off + o];
                const T* wr = theta + L1.w_off + static_cast<std::size_t>(o) * cin;
                for (int k = 0; k < cin; ++k) acc += wr[k] * x[static_cast<std::size_t>(k)];
                h1[static_cast<std::size_t>(o)] = std::max(acc, T(0));
            }
            for (int o = 0; o < hid; ++o) {
                T acc = theta[L2.b_off + o];
                const T* wr = theta + L2.w_off + static_cast<std::size_t>(o) * hid;
                for (int k = 0; k < hid; ++k) acc += wr[k] * h1[static_cast<std::size_t>(k)];
                h2[static_cast<std::size_t>(o)] = std::max(acc, T(0));
            }

            const T* dout = &d_g.at(i, j, 0);
            std::fill(dh2.begin(), dh2.end(), T(0));
            for (int o = 0; o < cls; ++o) {
                T gv = dout[o];
                d_theta[L3.b_off + o] += gv;
                const T* wr = theta + L3.w_off + static_cast<std::size_t>(o) * hid;
                T* dwr = d_theta + L3.w_off + static_cast<std::size_t>(o) * hid;
                for (int k = 0; k < hid; ++k) {
                    dwr[k] += gv * h2[static_cast<std::size_t>(k)];
                    dh2[static_cast<std::size_t>(k)] += gv * wr[k];
                }
            }
            std::fill(dh1.begin(), dh1.end(), T(0));
            for (int o = 0; o < hid; ++o) {
                if (h2[static_cast<std::size_t>(o)] <= T(0)) continue;
                T gv = dh2[static_cast<std::size_t>(o)];
                d_theta[L2.b_off + o] += gv;
                const T* wr = theta + L2.w_off + static_cast<std::size_t>(o) * hid;
                T* dwr = d_theta + L2.w_off + static_cast<std::size_t>(o) * hid;
                for (int k = 0; k < hid; ++k) {
                    dwr[k] += gv * h1[static_cast<std::size_t>(k)];
                    dh1[static_cast<std::size_t>(k)] += gv * wr[k];
                }
            }
            std::fill(dx.begin(), dx.end(), T(0));
            for (int o = 0; o < hid; ++o) {
                if (h1[static_cast<std::size_t>(o)] <= T(0)) continue;
                T gv = dh1[static_cast<std::size_t>(o)];
                d_theta[L1.b_off + o] += gv;
                const T* wr = theta + L1.w_off + static_cast<std::size_t>(o) * cin;
                T* dwr = d_theta + L1.w_off + static_cast<std::size_t>(o) * cin;
                for (int k = 0; k < cin; ++k) {
                    dwr[k] += gv * x[static_cast<std::size_t>(k)];
                    dx[static_cast<std::size_t>(k)] += gv * wr[k];
                }
            }
            if (cfg.guide_channels > 0) {
                const int base = cfg.use_coords ? 2 : 0;
                T* dst = &d_guidance_patch->at(i, j, 0);
                for (int ch = 0; ch < cfg.guide_channels; ++ch)
                    dst[ch] += dx[static_cast<std::size_t>(base + ch)];
            }
        }
    }
}

// Cuts [H'*p, W'*p, C] into non-overlapping blocks [H', W', p, p, C].
template <typename T>
TensorT<T> split_patches(const TensorT<T>& full, int p) {
    check_valid(full.ndim() == 3, "split_patches expects [H,W,C]");
    check_valid(p >= 1 && full.dim(0) % p == 0 && full.dim(1) % p == 0,
                "extents not divisible by patch size");
    const int gh = full.dim(0) / p, gw = full.dim(1) / p, c = full.dim(2);
    TensorT<T> patches({gh, gw, p, p, c});
    T* dst = patches.data.data();
    for (int i = 0; i < gh; ++i)
        for (int j = 0; j < gw; ++j)
            for (int a = 0; a < p; ++a)
                for (int b = 0; b < p; ++b) {
                    const T* src = &full.at(i * p + a, j * p + b, 0);
                    for (int ch = 0; ch < c; ++ch) *dst++ = src[ch];
                }
    return patches;
}

template <typename T>
TensorT<T> extract_guidance_patches(const TensorT<T>& guidance, int s) {
    return split_patches(guidance, s);
}

// Inverse of split_patches: patch (i,j) lands at rows [i*p, (i+1)*p).
template <typename T>
TensorT<T> merge_patches(const TensorT<T>& patches) {
    check_valid(patches.ndim() == 5, "merge_patches expects [H',W',p,p,C]");
    check_valid(patches.dim(2) == patches.dim(3), "patches must be square");
    const int gh = patches.dim(0), gw = patches.dim(1), p = patches.dim(2), c = patches.dim(4);
    TensorT<T> full({gh * p, gw * p, c});
    const T* src = patches.data.data();
    for (int i = 0; i < gh; ++i)
        for (int j = 0; j < gw; ++j)
            for (int a = 0; a < p; ++a)
                for (int b = 0; b < p; ++b) {
                    T* dst = &full.at(i * p + a, j * p + b, 0);
                    for (int ch = 0; ch < c; ++ch) dst[ch] = *src++;
                }
    return full;
}

template <typename T>
void check_decode_args(const TensorT<T>& theta_map, const TensorT<T>* guidance,
                       const NrdConfig& cfg, const ParamLayout& lay) {
    cfg.validate();
    check_contract(theta_map.ndim() == 3, "theta_map must be [H',W',total]");
    check_contract(theta_map.dim(2) == lay.total,
                   "theta_map last extent does not match layout total");
    if (cfg.guide_channels > 0) {
        check_contract(guidance != nullptr, "decode needs a guidance map");
        check_contract(guidance->shape ==
                           Shape{theta_map.dim(0) * cfg.s, theta_map.dim(1) * cfg.s,
                                 cfg.guide_channels},
                       "guidance extents must be s x the coarse grid");
    }
}

// Per location: g_theta on the s x s grid, bilinear x4 to r x r, tile.
template <typename T>
TensorT<T> nrd_decode(const TensorT<T>& theta_map, const TensorT<T>* guidance,
                      const NrdConfig& cfg, const ParamLayout& lay) {
    check_decode_args(theta_map, guidance, cfg, lay);
    const int gh = theta_map.dim(0), gw = theta_map.dim(1);
    const int s = cfg.s, r = cfg.patch(), cls = cfg.classes;
    const TensorT<T> coord = make_coordinate_map<T>(s);
    const TensorT<T>* coord_ptr = cfg.use_coords ? &coord : nullptr;

    TensorT<T> logits({gh * r, gw * r, cls});
    TensorT<T> gpatch({s, s, std::max(cfg.guide_channels, 1)});
    for (int i = 0; i < gh; ++i) {
        for (int j = 0; j < gw; ++j) {
            const TensorT<T>* gp = nullptr;
            if (cfg.guide_channels > 0) {
                for (int a = 0; a < s; ++a)
                    for (int b = 0; b < s; ++b) {
                        const T* src = &guidance->at(i * s + a, j * s + b, 0);
                        T* dst = &gpatch.at(a, b, 0);
                        for (int ch = 0; ch < cfg.guide_channels; ++ch) dst[ch] = src[ch];
                    }
                gp = &gpatch;
            }
            TensorT<T> g = eval_repr_network(&theta_map.at(i, j, 0), lay, cfg, coord_ptr, gp);
            TensorT<T> up = bilinear_resize(g, r, r);
            for (int a = 0; a < r; ++a)
                for (int b = 0; b < r; ++b) {
                    const T* src = &up.at(a, b, 0);
                    T* dst = &logits.at(i * r + a, j * r + b, 0);
                    for (int ch = 0; ch < cls; ++ch) dst[ch] = src[ch];
                }
        }
    }
    return logits;
}

template <typename T>
struct NrdDecodeGrads {
    TensorT<T> d_theta_map;
    TensorT<T> d_guidance; // left empty when guidance is off
};

template <typename T>
NrdDecodeGrads<T> nrd_decode_backward(const TensorT<T>& theta_map, const TensorT<T>* guidance,
                                      const NrdConfig& cfg, const ParamLayout& lay,
                                      const TensorT<T>& d_logits) {
    check_decode_args(theta_map, guidance, cfg, lay);
    const int gh = theta_map.dim(0), gw = theta_map.dim(1);
    const int s = cfg.s, r = cfg.patch(), cls = cfg.classes;
    check_contract(d_logits.shape == Shape{gh * r, gw * r, cls},
                   "decode upstream gradient shape mismatch");
    const TensorT<T> coord = make_coordinate_map<T>(s);
    const TensorT<T>* coord_ptr = cfg.use_coords ? &coord : nullptr;

    NrdDecodeGrads<T> grads{TensorT<T>({gh, gw, lay.total}),
                            cfg.guide_channels > 0
                                ? TensorT<T>({gh * s, gw * s, cfg.guide_channels})
                                : TensorT<T>{}};
    TensorT<T> gpatch({s, s, std::max(cfg.guide_channels, 1)});
    TensorT<T> d_gpatch({s, s, std::max(cfg.guide_channels, 1)});
    TensorT<T> d_up({r, r, cls});
    for (int i = 0; i < gh; ++i) {
        for (int j = 0; j < gw; ++j) {
            const TensorT<T>* gp = nullptr;
            if (cfg.guide_channels > 0) {
                for (int a = 0; a < s; ++a)
                    for (int b = 0; b < s; ++b) {
                        const T* src = &guidance->at(i * s + a, j * s + b, 0);
                        T* dst = &gpatch.at(a, b, 0);
                        for (int ch = 0; ch < cfg.guide_channels; ++ch) dst[ch] = src[ch];
                    }
                gp = &gpatch;
            }
            for (int a = 0; a < r; ++a)
                for (int b = 0; b < r; ++b) {
                    const T* src = &d_logits.at(i * r + a, j * r + b, 0);
                    T* dst = &d_up.at(a, b, 0);
                    for (int ch = 0; ch < cls; ++ch) dst[ch] = src[ch];
                }
            TensorT<T> d_g = bilinear_resize_backward(d_up, s, s);
            d_gpatch.fill(T(0));
            eval_repr_network_backward(&theta_map.at(i, j, 0), lay, cfg, coord_ptr, gp, d_g,
                                       &grads.d_theta_map.at(i, j, 0),
                                       cfg.guide_channels > 0 ? &d_gpatch : nullptr);
            if (cfg.guide_channels > 0) {
                for (int a = 0; a < s; ++a)
                    for (int b = 0; b < s; ++b) {
                        const T* src = &d_gpatch.at(a, b, 0);
                        T* dst = &grads.d_guidance.at(i * s + a, j * s + b, 0);
                        for (int ch = 0; ch < cfg.guide_channels; ++ch) dst[ch] += src[ch];
                    }
            }
        }
    }
    return grads;
}

} // namespace nrd
