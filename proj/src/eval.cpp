#include "nrd/eval.h"

#include <cstdio>

namespace nrd {

namespace {

void check_extents(const LabelMap& pred, const LabelMap& gt) {
    check_valid(pred.height == gt.height && pred.width == gt.width,
                "prediction/ground-truth extent mismatch");
}

} // namespace

ConfusionMatrix accumulate_confusion(const LabelMap& pred, const LabelMap& gt, int classes) {
    check_extents(pred, gt);
    ConfusionMatrix cm(classes);
    for (std::int64_t i = 0; i < gt.pixels(); ++i) {
        std::uint8_t g = gt.values[static_cast<std::size_t>(i)];
        if (g == kIgnoreLabel) continue;
        std::uint8_t p = pred.values[static_cast<std::size_t>(i)];
        check_valid(g < classes && p < classes, "label id outside class range");
        ++cm.at(g, p);
    }
    return cm;
}

ConfusionMatrix accumulate_confusion_masked(const LabelMap& pred, const LabelMap& gt, int classes,
                                            const std::vector<std::uint8_t>& mask) {
    check_extents(pred, gt);
    check_valid(static_cast<std::int64_t>(mask.size()) == gt.pixels(), "mask extent mismatch");
    ConfusionMatrix cm(classes);
    for (std::int64_t i = 0; i < gt.pixels(); ++i) {
        if (!mask[static_cast<std::size_t>(i)]) continue;
        std::uint8_t g = gt.values[static_cast<std::size_t>(i)];
        if (g == kIgnoreLabel) continue;
        std::uint8_t p = pred.values[static_cast<std::size_t>(i)];
        check_valid(g < classes && p < classes, "label id outside class range");
        ++cm.at(g, p);
    }
    return cm;
}

MiouResult compute_miou(const ConfusionMatrix& cm) {
    const int c = cm.classes;
    MiouResult res;
    res.iou.assign(static_cast<std::size_t>(c), 0.0);
    res.present.assign(static_cast<std::size_t>(c), false);
    double sum = 0.0;
    int n_present = 0;
    for (int k = 0; k < c; ++k) {
        std::uint64_t row = 0, col = 0;
        for (int j = 0; j < c; ++j) {
            row += cm.at(k, j);
            col += cm.at(j, k);
        }
        std::uint64_t diag = cm.at(k, k);
        std::uint64_t uni = row + col - diag;
        if (uni > 0)
            res.iou[static_cast<std::size_t>(k)] =
                static_cast<double>(diag) / static_cast<double>(uni);
        if (row > 0) {
            res.present[static_cast<std::size_t>(k)] = true;
            sum += res.iou[static_cast<std::size_t>(k)];
            ++n_present;
        }
    }
    if (n_present > 0) {
        res.defined = true;
        res.miou = sum / n_present;
    }
    return res;
}

std::vector<std::uint8_t> trimap_mask(const LabelMap& gt, int width) {
    check_valid(width >= 1, "trimap width must be >= 1");
    const int h = gt.height, w = gt.width;
    std::vector<std::uint8_t> band(static_cast<std::size_t>(h) * w, 0);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            std::uint8_t c = gt.at(i, j);
            if (c == kIgnoreLabel) continue;
            const int di[4] = {-1, 1, 0, 0}, dj[4] = {0, 0, -1, 1};
            for (int n = 0; n < 4; ++n) {
                int ni = i + di[n], nj = j + dj[n];
                if (ni < 0 || ni >= h || nj < 0 || nj >= w) continue;
                std::uint8_t nc = gt.at(ni, nj);
                if (nc != kIgnoreLabel && nc != c) {
                    band[static_cast<std::size_t>(i) * w + j] = 1;
                    break;
                }
            }
        }
    // Chebyshev distance < width == (width - 1) dilations with a 3x3 element
    std::vector<std::uint8_t> next(band.size());
    for (int step = 1; step < width; ++step) {
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                std::uint8_t v = 0;
                for (int di = -1; di <= 1 && !v; ++di)
                    for (int dj = -1; dj <= 1 && !v; ++dj) {
                        int ni = i + di, nj = j + dj;
                        if (ni < 0 || ni >= h || nj < 0 || nj >= w) continue;
                        v = band[static_cast<std::size_t>(ni) * w + nj];
                    }
                next[static_cast<std::size_t>(i) * w + j] = v;
            }
        band.swap(next);
    }
    return band;
}

EvalResult evaluate_dataset(const ParamMap<float>& params, const ModelConfig& cfg,
                            const Dataset& ds, int trimap_width) {
    const int classes = cfg.nrd.classes;
    ConfusionMatrix full(classes), tri(classes);
    ForwardCache<float> cache;
    for (std::size_t n = 0; n < ds.size(); ++n) {
        model_forward(ds.images[n], params, cfg, cache);
        LabelMap pred = argmax_labels(cache.logits);
        full.merge(accumulate_confusion(pred, ds.labels[n], classes));
        tri.merge(accumulate_confusion_masked(pred, ds.labels[n], classes,
                                              trimap_mask(ds.labels[n], trimap_width)));
    }
    EvalResult res;
    res.full = compute_miou(full);
    res.trimap = compute_miou(tri);
    res.samples = static_cast<int>(ds.size());
    return res;
}

namespace {

std::int64_t conv_macs(std::int64_t out_h, std::int64_t out_w, std::int64_t cout, std::int64_t cin,
                       std::int64_t k) {
    return out_h * out_w * cout * cin * k * k;
}

} // namespace

CostReport count_macs(const ModelConfig& cfg, int input_h, int input_w) {
    cfg.validate();
    check_valid(input_h % kEncoderStride == 0 && input_w % kEncoderStride == 0,
                "extents must be divisible by 32");
    CostReport r;
    r.decoder = cfg.decoder;
    r.height = input_h;
    r.width = input_w;

    std::int64_t h = input_h, w = input_w, prev = 3;
    for (int stage = 0; stage < kEncoderStages; ++stage) {
        std::int64_t width = cfg.enc.widths[static_cast<std::size_t>(stage)];
        h /= 2;
        w /= 2;
        r.encoder += conv_macs(h, w, width, prev, 3); // stride-2 conv
        r.encoder += conv_macs(h, w, width, width, 3);
        prev = width;
    }
    const std::int64_t d = cfg.enc.feature_channels();
    if (cfg.enc.use_neck) r.encoder += conv_macs(h, w, d, d, 1);

    const std::int64_t gh = h, gw = w; // coarse grid H', W'
    const std::int64_t classes = cfg.nrd.classes;
    switch (cfg.decoder) {
        case DecoderKind::Nrd: {
            ParamLayout lay = build_param_layout(cfg.nrd);
            if (cfg.nrd.guide_channels > 0) {
                const std::int64_t cl = cfg.enc.low_level_channels();
                const std::int64_t lh = static_cast<std::int64_t>(r.height) / kLowLevelStride;
                const std::int64_t lw = static_cast<std::int64_t>(r.width) / kLowLevelStride;
                r.guidance_head += conv_macs(lh, lw, cl, cl, 3);
                r.guidance_head += conv_macs(lh, lw, cfg.nrd.guide_channels, cl, 3);
            }
            r.controller += conv_macs(gh, gw, cfg.enc.controller_hidden, d, 3);
            r.controller += conv_macs(gh, gw, lay.total, cfg.enc.controller_hidden, 1);
            r.repr = gh * gw * static_cast<std::int64_t>(cfg.nrd.s) * cfg.nrd.s * lay.weight_count;
            const std::int64_t rr = cfg.nrd.patch();
            r.upsample = gh * gw * rr * rr * classes * 4;
            r.merge = 0;
            break;
        }
        case DecoderKind::Bilinear:
            r.controller = conv_macs(gh, gw, classes, d, 1);
            r.upsample = static_cast<std::int64_t>(r.height) * r.width * classes * 4;
            break;
        case DecoderKind::Duc:
            r.controller = conv_macs(
                gh, gw, static_cast<std::int64_t>(kEncoderStride) * kEncoderStride * classes, d, 1);
            r.upsample = 0; // depth-to-space is a data movement
            break;
    }
    return r;
}

std::string cost_report_text(const CostReport& r) {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "decoder=%s input=%dx%d\n"
                  "  encoder       %12lld MACs\n"
                  "  guidance head %12lld MACs\n"
                  "  controller    %12lld MACs\n"
                  "  g_theta       %12lld MACs\n"
                  "  upsample      %12lld MACs\n"
                  "  merge         %12lld MACs\n"
                  "  decoder total %12lld MACs\n"
                  "  grand total   %12lld MACs\n",
                  decoder_name(r.decoder), r.height, r.width,
                  static_cast<long long>(r.encoder), static_cast<long long>(r.guidance_head),
                  static_cast<long long>(r.controller), static_cast<long long>(r.repr),
                  static_cast<long long>(r.upsample), static_cast<long long>(r.merge),
                  static_cast<long long>(r.decoder_macs()), static_cast<long long>(r.total_macs()));
    return buf;
}

std::string cost_report_csv(const CostReport& r) {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "decoder,height,width,encoder_macs,guidance_macs,controller_macs,repr_macs,"
                  "upsample_macs,merge_macs,decoder_macs,total_macs\n"
                  "%s,%d,%d,%lld,%lld,%lld,%lld,%lld,%lld,%lld,%lld\n",
                  decoder_name(r.decoder), r.height, r.width, static_cast<long long>(r.encoder),
                  static_cast<long long>(r.guidance_head), static_cast<long long>(r.controller),
                  static_cast<long long>(r.repr), static_cast<long long>(r.upsample),
                  static_cast<long long>(r.merge), static_cast<long long>(r.decoder_macs()),
                  static_cast<long long>(r.total_macs()));
    return buf;
}

} // namespace nrd
