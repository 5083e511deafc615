#include "nrd/datagen.h"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "nrd/rng.h"

namespace nrd {

namespace {

struct ShapeDraw {
    int kind = 0; // 0 circle, 1 rect, 2 triangle
    int cls = 0;
    double p[6] = {0}; // circle: cx, cy, r; rect: cx, cy, hx, hy; tri: 3 vertices
    float color[3] = {0};

    bool contains(double x, double y) const {
        switch (kind) {
            case 0: {
                double dx = x - p[0], dy = y - p[1];
                return dx * dx + dy * dy <= p[2] * p[2];
            }
            case 1:
                return std::abs(x - p[0]) <= p[2] && std::abs(y - p[1]) <= p[3];
            default: {
                auto side = [&](double ax, double ay, double bx, double by) {
                    return (bx - ax) * (y - ay) - (by - ay) * (x - ax);
                };
                double d0 = side(p[0], p[1], p[2], p[3]);
                double d1 = side(p[2], p[3], p[4], p[5]);
                double d2 = side(p[4], p[5], p[0], p[1]);
                bool has_neg = d0 < 0 || d1 < 0 || d2 < 0;
                bool has_pos = d0 > 0 || d1 > 0 || d2 > 0;
                return !(has_neg && has_pos);
            }
        }
    }
};

std::string index_name(const char* prefix, int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%06d", prefix, i);
    return buf;
}

} // namespace

NamedTensorBundle gen_synthetic(const SynthSpec& spec) {
    spec.validate();
    const int h = spec.height, w = spec.width;
    const auto& palette = class_palette();
    Pcg32 rng = named_stream(spec.seed, "datagen");

    NamedTensorBundle bundle;
    for (int n = 0; n < spec.count; ++n) {
        int count = spec.min_shapes +
                    static_cast<int>(rng.next_below(
                        static_cast<std::uint32_t>(spec.max_shapes - spec.min_shapes + 1)));
        std::vector<ShapeDraw> shapes(static_cast<std::size_t>(count));
        const double smin = 0.08 * std::min(h, w), smax = 0.3 * std::min(h, w);
        for (auto& sh : shapes) {
            sh.kind = static_cast<int>(rng.next_below(3));
            sh.cls = 1 + static_cast<int>(
                             rng.next_below(static_cast<std::uint32_t>(spec.num_classes - 1)));
            switch (sh.kind) {
                case 0:
                    sh.p[0] = rng.next_double() * w;
                    sh.p[1] = rng.next_double() * h;
                    sh.p[2] = smin + rng.next_double() * (smax - smin);
                    break;
                case 1:
                    sh.p[0] = rng.next_double() * w;
                    sh.p[1] = rng.next_double() * h;
                    sh.p[2] = smin + rng.next_double() * (smax - smin);
                    sh.p[3] = smin + rng.next_double() * (smax - smin);
                    break;
                default:
                    for (int v = 0; v < 3; ++v) {
                        sh.p[2 * v] = rng.next_double() * w;
                        sh.p[2 * v + 1] = rng.next_double() * h;
                    }
                    break;
            }
            const Rgb& base = palette[static_cast<std::size_t>(sh.cls)];
            for (int c = 0; c < 3; ++c) {
                double jitter = rng.next_double() * 0.2 - 0.1;
                sh.color[c] = static_cast<float>(
                    std::clamp(base[static_cast<std::size_t>(c)] / 255.0 + jitter, 0.0, 1.0));
            }
        }

        TensorF img({h, w, 3});
        TensorF lbl({h, w});
        const Rgb& bg = palette[0];
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                for (int c = 0; c < 3; ++c)
                    img.at(i, j, c) = static_cast<float>(bg[static_cast<std::size_t>(c)] / 255.0);
        // back-to-front: later shapes occlude earlier ones
        for (const auto& sh : shapes) {
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) {
                    if (!sh.contains(j + 0.5, i + 0.5)) continue;
                    lbl.at(i, j) = static_cast<float>(sh.cls);
                    for (int c = 0; c < 3; ++c) img.at(i, j, c) = sh.color[c];
                }
        }
        if (spec.noise_std > 0) {
            TensorF noise = rand_normal<float>(rng, {h, w, 3}, 0.0, spec.noise_std);
            for (std::int64_t i = 0; i < img.numel(); ++i)
                img[i] = static_cast<float>(
                    std::clamp(static_cast<double>(img[i]) + noise[i], 0.0, 1.0));
        }
        bundle.add(index_name("img/", n), AnyTensor(std::move(img)));
        bundle.add(index_name("lbl/", n), AnyTensor(std::move(lbl)));
    }

    // split by parity of a seeded shuffle
    std::vector<int> order(static_cast<std::size_t>(spec.count));
    for (int i = 0; i < spec.count; ++i) order[static_cast<std::size_t>(i)] = i;
    Pcg32 split_rng = named_stream(spec.seed, "split");
    for (int i = spec.count - 1; i > 0; --i) {
        int j = static_cast<int>(split_rng.next_below(static_cast<std::uint32_t>(i + 1)));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    std::vector<float> train_idx, val_idx;
    for (int pos = 0; pos < spec.count; ++pos)
        (pos % 2 == 0 ? train_idx : val_idx).push_back(static_cast<float>(order[static_cast<std::size_t>(pos)]));
    auto idx_tensor = [](std::vector<float> v) {
        int n = static_cast<int>(v.size());
        return AnyTensor(TensorF({std::max(n, 1)}, n ? std::move(v) : std::vector<float>{-1.0f}));
    };
    bundle.add("split/train", idx_tensor(std::move(train_idx)));
    bundle.add("split/val", idx_tensor(std::move(val_idx)));
    return bundle;
}

LabelMap label_map_from_tensor(const TensorF& t) {
    check_valid(t.ndim() == 2, "label tensor must be [H,W], got " + shape_str(t.shape));
    LabelMap lm(t.dim(0), t.dim(1));
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        float v = t[i];
        check_valid(v == std::floor(v) && v >= 0 && v <= 255, "label value not an id in [0,255]");
        lm.values[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v);
    }
    return lm;
}

TensorF tensor_from_label_map(const LabelMap& labels) {
    TensorF t({labels.height, labels.width});
    for (std::int64_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<float>(labels.values[static_cast<std::size_t>(i)]);
    return t;
}

Dataset dataset_from_bundle(const NamedTensorBundle& bundle, Split split) {
    int count = 0;
    while (bundle.has(index_name("img/", count))) ++count;

    std::vector<int> indices;
    if (split == Split::All) {
        for (int i = 0; i < count; ++i) indices.push_back(i);
    } else {
        const char* key = split == Split::Train ? "split/train" : "split/val";
        check_valid(bundle.has(key), std::string("dataset bundle lacks ") + key);
        const TensorF& t = bundle.get(key).f32();
        for (std::int64_t i = 0; i < t.numel(); ++i) {
            if (t[i] < 0) continue; // empty-split sentinel
            int idx = static_cast<int>(t[i]);
            check_valid(idx >= 0 && idx < count, "split index out of range");
            indices.push_back(idx);
        }
    }

    Dataset ds;
    for (int idx : indices) {
        const TensorF& img = bundle.get(index_name("img/", idx)).f32();
        check_valid(img.ndim() == 3 && img.dim(2) == 3, "dataset image must be [H,W,3]");
        const TensorF& lbl = bundle.get(index_name("lbl/", idx)).f32();
        check_valid(lbl.ndim() == 2 && lbl.dim(0) == img.dim(0) && lbl.dim(1) == img.dim(1),
                    "dataset label extents must match image");
        ds.images.push_back(img);
        ds.labels.push_back(label_map_from_tensor(lbl));
    }
    return ds;
}

Dataset load_dataset(const std::string& path, Split split) {
    return dataset_from_bundle(read_bundle(path), split);
}

} // namespace nrd
