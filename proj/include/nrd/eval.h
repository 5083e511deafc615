#pragma once

#include <string>
#include <vector>

#include "nrd/datagen.h"
#include "nrd/model.h"
#include "nrd/tensor.h"

namespace nrd {

// Row g, column p: pixels with ground truth g predicted as p. Ground-truth
// IGNORE pixels are never counted.
struct ConfusionMatrix {
    int classes = 0;
    std::vector<std::uint64_t> counts;

    explicit ConfusionMatrix(int c) : classes(c), counts(static_cast<std::size_t>(c) * c, 0) {
        check_valid(c >= 1, "confusion matrix needs at least one class");
    }

    std::uint64_t& at(int g, int p) { return counts[static_cast<std::size_t>(g) * classes + p]; }
    std::uint64_t at(int g, int p) const { return counts[static_cast<std::size_t>(g) * classes + p]; }

    void merge(const ConfusionMatrix& o) {
        check_valid(o.classes == classes, "confusion matrix class count mismatch");
        for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += o.counts[i];
    }

    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (auto v : counts) t += v;
        return t;
    }
};

ConfusionMatrix accumulate_confusion(const LabelMap& pred, const LabelMap& gt, int classes);

// mask value 0 drops the pixel; any other value keeps it.
ConfusionMatrix accumulate_confusion_masked(const LabelMap& pred, const LabelMap& gt, int classes,
                                            const std::vector<std::uint8_t>& mask);

struct MiouResult {
    bool defined = false; // false when no class is present in ground truth
    double miou = 0.0;
    std::vector<double> iou;   // per class; meaningful only where evaluable
    std::vector<bool> present; // ground-truth row sum > 0
};

// IoU_c = diag / (row + col - diag); mean over classes present in ground truth.
MiouResult compute_miou(const ConfusionMatrix& cm);

// In-band = Chebyshev distance < width from a semantic boundary pixel (a
// non-IGNORE pixel with a 4-neighbor of a different non-IGNORE class).
std::vector<std::uint8_t> trimap_mask(const LabelMap& gt, int width);

// Ties resolve to the lowest class index.
template <typename T>
LabelMap argmax_labels(const TensorT<T>& logits) {
    check_contract(logits.ndim() == 3, "logits must be [H,W,C]");
    const int h = logits.dim(0), w = logits.dim(1), c = logits.dim(2);
    LabelMap out(h, w);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const T* px = &logits.at(i, j, 0);
            int best = 0;
            for (int ch = 1; ch < c; ++ch)
                if (px[ch] > px[best]) best = ch;
            out.at(i, j) = static_cast<std::uint8_t>(best);
        }
    return out;
}

struct EvalResult {
    MiouResult full;
    MiouResult trimap;
    int samples = 0;
};

EvalResult evaluate_dataset(const ParamMap<float>& params, const ModelConfig& cfg,
                            const Dataset& ds, int trimap_width);

// Symbolic MAC counts; conv = Hout*Wout*Cout*Cin*k^2, g_theta = grid*s^2*sum
// of per-layer in*out, bilinear = 4 per output cell per channel, merge and
// depth-to-space are free. MACs are reported 1:1 as FLOPs.
struct CostReport {
    DecoderKind decoder = DecoderKind::Nrd;
    int height = 0, width = 0;
    std::int64_t encoder = 0;
    std::int64_t guidance_head = 0;
    std::int64_t controller = 0; // baseline 1x1 heads are reported here
    std::int64_t repr = 0;       // g_theta evaluations
    std::int64_t upsample = 0;
    std::int64_t merge = 0;

    std::int64_t decoder_macs() const {
        return guidance_head + controller + repr + upsample + merge;
    }
    std::int64_t total_macs() const { return encoder + decoder_macs(); }
};

CostReport count_macs(const ModelConfig& cfg, int input_h, int input_w);

std::string cost_report_text(const CostReport& r);
std::string cost_report_csv(const CostReport& r);

} // namespace nrd
