#pragma once

#include <algorithm>
#include <cmath>

#include "nrd/tensor.h"

namespace nrd {

// Spatial tensors are [H, W, C] row-major; conv weights are [Cout, Cin, k, k].
// Every op is a pure function; per-output accumulation order is fixed
// (ky, kx, ic ascending), so results are bit-reproducible.

struct ConvSpec {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 1; // 1 or 3
    int stride = 1; // 1 or 2

    int padding() const { return (kernel - 1) / 2; }

    void validate() const {
        check_contract(in_channels > 0 && out_channels > 0, "conv channels must be positive");
        check_contract(kernel == 1 || kernel == 3, "conv kernel must be 1 or 3");
        check_contract(stride == 1 || stride == 2, "conv stride must be 1 or 2");
    }
};

inline int conv_out_extent(int in, int kernel, int stride) {
    int pad = (kernel - 1) / 2;
    return (in + 2 * pad - kernel) / stride + 1;
}

template <typename T>
struct ConvGrads {
    TensorT<T> d_input;
    TensorT<T> d_weights;
    TensorT<T> d_bias;
};

namespace detail {

// Repacks [Cout, Cin, k, k] into [Cout, k, k, Cin] so the reduction over input
// channels runs over contiguous memory on both sides.
template <typename T>
std::vector<T> pack_weights(const TensorT<T>& w, const ConvSpec& spec) {
    const int co = spec.out_channels, ci = spec.in_channels, k = spec.kernel;
    std::vector<T> packed(static_cast<std::size_t>(co) * k * k * ci);
    for (int o = 0; o < co; ++o)
        for (int i = 0; i < ci; ++i)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx)
                    packed[((static_cast<std::size_t>(o) * k + ky) * k + kx) * ci + i] = w.at(o, i, ky, kx);
    return packed;
}

} // namespace detail

template <typename T>
void check_conv_args(const TensorT<T>& input, const ConvSpec& spec, const TensorT<T>& weights,
                     const TensorT<T>& bias) {
    spec.validate();
    check_contract(input.ndim() == 3, "conv input must be [H,W,C], got " + shape_str(input.shape));
    check_contract(input.dim(2) == spec.in_channels, "conv input channels mismatch");
    check_contract(weights.shape == Shape{spec.out_channels, spec.in_channels, spec.kernel, spec.kernel},
                   "conv weight shape mismatch: " + shape_str(weights.shape));
    check_contract(bias.shape == Shape{spec.out_channels}, "conv bias shape mismatch");
}

template <typename T>
TensorT<T> conv2d(const TensorT<T>& input, const ConvSpec& spec, const TensorT<T>& weights,
                  const TensorT<T>& bias) {
    check_conv_args(input, spec, weights, bias);
    const int h = input.dim(0), w = input.dim(1), ci = spec.in_channels;
    const int k = spec.kernel, stride = spec.stride, pad = spec.padding();
    const int oh = conv_out_extent(h, k, stride), ow = conv_out_extent(w, k, stride);
    const int co = spec.out_channels;

    std::vector<T> packed = detail::pack_weights(weights, spec);
    TensorT<T> out({oh, ow, co});
    const T* in = input.data.data();
    T* dst = out.data.data();
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            T* opx = dst + (static_cast<std::size_t>(oy) * ow + ox) * co;
            for (int oc = 0; oc < co; ++oc) {
                T acc = bias.data[static_cast<std::size_t>(oc)];
                const T* wb = packed.data() + static_cast<std::size_t>(oc) * k * k * ci;
                for (int ky = 0; ky < k; ++ky) {
                    int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        int ix = ox * stride + kx - pad;
                        if (ix < 0 || ix >= w) continue;
                        const T* ipx = in + (static_cast<std::size_t>(iy) * w + ix) * ci;
                        const T* wp = wb + (static_cast<std::size_t>(ky) * k + kx) * ci;
                        T sum = T(0);
                        for (int ic = 0; ic < ci; ++ic) sum += ipx[ic] * wp[ic];
                        acc += sum;
                    }
                }
                opx[oc] = acc;
            }
        }
    }
    return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const TensorT<T>& input, const ConvSpec& spec, const TensorT<T>& weights,
                             const TensorT<T>& d_out) {
    spec.validate();
    const int h = input.dim(0), w = input.dim(1), ci = spec.in_channels;
    const int k = spec.kernel, stride = spec.stride, pad = spec.padding();
    const int oh = conv_out_extent(h, k, stride), ow = conv_out_extent(w, k, stride);
    const int co = spec.out_channels;
    check_contract(d_out.shape == Shape{oh, ow, co},
                   "conv upstream gradient shape mismatch: " + shape_str(d_out.shape));

    std::vector<T> packed = detail::pack_weights(weights, spec);
    std::vector<T> d_packed(packed.size(), T(0));

    ConvGrads<T> g;
    g.d_input = TensorT<T>({h, w, ci});
    g.d_weights = TensorT<T>({co, ci, k, k});
    g.d_bias = TensorT<T>({co});

    const T* in = input.data.data();
    T* din = g.d_input.data.data();
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            const T* gpx = d_out.data.data() + (static_cast<std::size_t>(oy) * ow + ox) * co;
            for (int oc = 0; oc < co; ++oc) {
                T gv = gpx[oc];
                g.d_bias.data[static_cast<std::size_t>(oc)] += gv;
                const T* wb = packed.data() + static_cast<std::size_t>(oc) * k * k * ci;
                T* dwb = d_packed.data() + static_cast<std::size_t>(oc) * k * k * ci;
                for (int ky = 0; ky < k; ++ky) {
                    int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        int ix = ox * stride + kx - pad;
                        if (ix < 0 || ix >= w) continue;
                        const std::size_t off = (static_cast<std::size_t>(iy) * w + ix) * ci;
                        const std::size_t woff = (static_cast<std::size_t>(ky) * k + kx) * ci;
                        const T* ipx = in + off;
                        T* dpx = din + off;
                        const T* wp = wb + woff;
                        T* dwp = dwb + woff;
                        for (int ic = 0; ic < ci; ++ic) {
                            dpx[ic] += gv * wp[ic];
                            dwp[ic] += gv * ipx[ic];
                        }
                    }
                }
            }
        }
    }
    for (int o = 0; o < co; ++o)
        for (int i = 0; i < ci; ++i)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx)
                    g.d_weights.at(o, i, ky, kx) =
                        d_packed[((static_cast<std::size_t>(o) * k + ky) * k + kx) * ci + i];
    return g;
}

template <typename T>
TensorT<T> relu(const TensorT<T>& x) {
    TensorT<T> out = x;
    for (auto& v : out.data) v = std::max(v, T(0));
    return out;
}

// Subgradient at 0 is 0: the gradient passes only where x > 0.
template <typename T>
TensorT<T> relu_backward(const TensorT<T>& x, const TensorT<T>& d_out) {
    check_contract(x.same_shape(d_out), "relu gradient shape mismatch");
    TensorT<T> d = d_out;
    for (std::int64_t i = 0; i < d.numel(); ++i)
        if (x[i] <= T(0)) d[i] = T(0);
    return d;
}

namespace detail {

// Half-pixel source mapping with edge clamp: src = (dst + 0.5) * in/out - 0.5.
inline void bilinear_axis(int out_extent, int in_extent, std::vector<int>& lo, std::vector<int>& hi,
                          std::vector<double>& frac) {
    lo.resize(static_cast<std::size_t>(out_extent));
    hi.resize(static_cast<std::size_t>(out_extent));
    frac.resize(static_cast<std::size_t>(out_extent));
    double scale = static_cast<double>(in_extent) / out_extent;
    for (int d = 0; d < out_extent; ++d) {
        double src = (d + 0.5) * scale - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in_extent - 1));
        int i0 = static_cast<int>(std::floor(src));
        lo[static_cast<std::size_t>(d)] = i0;
        hi[static_cast<std::size_t>(d)] = std::min(i0 + 1, in_extent - 1);
        frac[static_cast<std::size_t>(d)] = src - i0;
    }
}

} // namespace detail

template <typename T>
TensorT<T> bilinear_resize(const TensorT<T>& input, int out_h, int out_w) {
    check_contract(input.ndim() == 3, "bilinear input must be [H,W,C]");
    check_contract(out_h >= 1 && out_w >= 1, "bilinear output extents must be >= 1");
    const int h = input.dim(0), w = input.dim(1), c = input.dim(2);
    std::vector<int> y0, y1, x0, x1;
    std::vector<double> fy, fx;
    detail::bilinear_axis(out_h, h, y0, y1, fy);
    detail::bilinear_axis(out_w, w, x0, x1, fx);

    TensorT<T> out({out_h, out_w, c});
    for (int oy = 0; oy < out_h; ++oy) {
        const T wy = static_cast<T>(fy[static_cast<std::size_t>(oy)]);
        const T* row0 = input.data.data() + static_cast<std::size_t>(y0[static_cast<std::size_t>(oy)]) * w * c;
        const T* row1 = input.data.data() + static_cast<std::size_t>(y1[static_cast<std::size_t>(oy)]) * w * c;
        for (int ox = 0; ox < out_w; ++ox) {
            const T wx = static_cast<T>(fx[static_cast<std::size_t>(ox)]);
            const T* p00 = row0 + static_cast<std::size_t>(x0[static_cast<std::size_t>(ox)]) * c;
            const T* p01 = row0 + static_cast<std::size_t>(x1[static_cast<std::size_t>(ox)]) * c;
            const T* p10 = row1 + static_cast<std::size_t>(x0[static_cast<std::size_t>(ox)]) * c;
            const T* p11 = row1 + static_cast<std::size_t>(x1[static_cast<std::size_t>(ox)]) * c;
            T* dst = out.data.data() + (static_cast<std::size_t>(oy) * out_w + ox) * c;
            for (int ch = 0; ch < c; ++ch) {
                T top = (T(1) - wx) * p00[ch] + wx * p01[ch];
                T bot = (T(1) - wx) * p10[ch] + wx * p11[ch];
                dst[ch] = (T(1) - wy) * top + wy * bot;
            }
        }
    }
    return out;
}

// The resize is linear in its input, so the backward pass only scatters the
// interpolation weights; it does not depend on the input values.
template <typename T>
TensorT<T> bilinear_resize_backward(const TensorT<T>& d_out, int in_h, int in_w) {
    check_contract(d_out.ndim() == 3, "bilinear gradient must be [H,W,C]");
    const int oh = d_out.dim(0), ow = d_out.dim(1), c = d_out.dim(2);
    std::vector<int> y0, y1, x0, x1;
    std::vector<double> fy, fx;
    detail::bilinear_axis(oh, in_h, y0, y1, fy);
    detail::bilinear_axis(ow, in_w, x0, x1, fx);

    TensorT<T> d_in({in_h, in_w, c});
    for (int oy = 0; oy < oh; ++oy) {
        const T wy = static_cast<T>(fy[static_cast<std::size_t>(oy)]);
        for (int ox = 0; ox < ow; ++ox) {
            const T wx = static_cast<T>(fx[static_cast<std::size_t>(ox)]);
            const T* gpx = d_out.data.data() + (static_cast<std::size_t>(oy) * ow + ox) * c;
            T* p00 = d_in.data.data() + (static_cast<std::size_t>(y0[oy]) * in_w + x0[ox]) * c;
            T* p01 = d_in.data.data() + (static_cast<std::size_t>(y0[oy]) * in_w + x1[ox]) * c;
            T* p10 = d_in.data.data() + (static_cast<std::size_t>(y1[oy]) * in_w + x0[ox]) * c;
            T* p11 = d_in.data.data() + (static_cast<std::size_t>(y1[oy]) * in_w + x1[ox]) * c;
            for (int ch = 0; ch < c; ++ch) {
                T g = gpx[ch];
                p00[ch] += (T(1) - wy) * (T(1) - wx) * g;
                p01[ch] += (T(1) - wy) * wx * g;
                p10[ch] += wy * (T(1) - wx) * g;
                p11[ch] += wy * wx * g;
            }
        }
    }
    return d_in;
}

// Channel block (a*f + b) of cell (i, j) lands at spatial (i*f + a, j*f + b).
template <typename T>
TensorT<T> depth_to_space(const TensorT<T>& input, int f) {
    check_contract(input.ndim() == 3, "depth_to_space input must be [H,W,C]");
    check_contract(f >= 1, "depth_to_space factor must be >= 1");
    const int h = input.dim(0), w = input.dim(1), ctot = input.dim(2);
    check_contract(ctot % (f * f) == 0, "channel count not divisible by f^2");
    const int c = ctot / (f * f);
    TensorT<T> out({h * f, w * f, c});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int a = 0; a < f; ++a)
                for (int b = 0; b < f; ++b) {
                    const T* src = &input.at(i, j, (a * f + b) * c);
                    T* dst = &out.at(i * f + a, j * f + b, 0);
                    for (int ch = 0; ch < c; ++ch) dst[ch] = src[ch];
                }
    return out;
}

template <typename T>
TensorT<T> space_to_depth(const TensorT<T>& input, int f) {
    check_contract(input.ndim() == 3, "space_to_depth input must be [H,W,C]");
    check_contract(f >= 1, "space_to_depth factor must be >= 1");
    const int hf = input.dim(0), wf = input.dim(1), c = input.dim(2);
    check_contract(hf % f == 0 && wf % f == 0, "extents not divisible by f");
    const int h = hf / f, w = wf / f;
    TensorT<T> out({h, w, c * f * f});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int a = 0; a < f; ++a)
                for (int b = 0; b < f; ++b) {
                    const T* src = &input.at(i * f + a, j * f + b, 0);
                    T* dst = &out.at(i, j, (a * f + b) * c);
                    for (int ch = 0; ch < c; ++ch) dst[ch] = src[ch];
                }
    return out;
}

template <typename T>
struct CeResult {
    double loss = 0.0;
    TensorT<T> d_logits;
    std::int64_t valid_pixels = 0; // 0 flags the all-ignored case
};

// Mean over non-ignored pixels of -log softmax(logits)[label], log-sum-exp
// stabilized; gradient is (softmax - onehot) / N_valid at valid pixels.
template <typename T>
CeResult<T> softmax_cross_entropy(const TensorT<T>& logits, const LabelMap& labels,
                                  std::uint8_t ignore = kIgnoreLabel) {
    check_contract(logits.ndim() == 3, "logits must be [H,W,C]");
    const int h = logits.dim(0), w = logits.dim(1), c = logits.dim(2);
    check_contract(h == labels.height && w == labels.width, "logits/label extent mismatch");

    CeResult<T> res;
    res.d_logits = TensorT<T>({h, w, c});
    std::int64_t valid = 0;
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            if (labels.at(i, j) != ignore) ++valid;
    res.valid_pixels = valid;
    if (valid == 0) return res;

    const double inv_n = 1.0 / static_cast<double>(valid);
    double loss = 0.0;
    std::vector<double> probs(static_cast<std::size_t>(c));
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            std::uint8_t label = labels.at(i, j);
            if (label == ignore) continue;
            check_contract(label < c, "label id out of range");
            const T* px = &logits.at(i, j, 0);
            double maxv = px[0];
            for (int ch = 1; ch < c; ++ch) maxv = std::max(maxv, static_cast<double>(px[ch]));
            double sum = 0.0;
            for (int ch = 0; ch < c; ++ch) {
                probs[static_cast<std::size_t>(ch)] = std::exp(static_cast<double>(px[ch]) - maxv);
                sum += probs[static_cast<std::size_t>(ch)];
            }
            // Keep the label logit in shifted space: maxv - px[label] is well
            // conditioned, while (log(sum) + maxv) - px[label] cancels badly
            // for large logits.
            loss += std::log(sum) + (maxv - static_cast<double>(px[label]));
            T* gpx = &res.d_logits.at(i, j, 0);
            for (int ch = 0; ch < c; ++ch)
                gpx[ch] = static_cast<T>(probs[static_cast<std::size_t>(ch)] / sum * inv_n);
            gpx[label] -= static_cast<T>(inv_n);
        }
    }
    res.loss = loss * inv_n;
    return res;
}

} // namespace nrd
