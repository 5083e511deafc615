#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nrd/datagen.h"
#include "nrd/eval.h"
#include "nrd/rng.h"

using namespace nrd;

namespace {

// Independent trimap route: mark boundary pixels straight from the
// definition, then scan all pairs for Chebyshev distance < width. O(N^2) and
// proud of it.
std::vector<std::uint8_t> trimap_reference(const LabelMap& gt, int width) {
    const int h = gt.height, w = gt.width;
    std::vector<std::uint8_t> boundary(static_cast<std::size_t>(h) * w, 0);
    const int di[4] = {-1, 1, 0, 0}, dj[4] = {0, 0, -1, 1};
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            if (gt.at(i, j) == kIgnoreLabel) continue;
            for (int k = 0; k < 4; ++k) {
                int ni = i + di[k], nj = j + dj[k];
                if (ni < 0 || ni >= h || nj < 0 || nj >= w) continue;
                if (gt.at(ni, nj) == kIgnoreLabel) continue;
                if (gt.at(ni, nj) != gt.at(i, j)) boundary[i * w + j] = 1;
            }
        }
    std::vector<std::uint8_t> band(static_cast<std::size_t>(h) * w, 0);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int bi = 0; bi < h && !band[i * w + j]; ++bi)
                for (int bj = 0; bj < w; ++bj) {
                    if (!boundary[bi * w + bj]) continue;
                    if (std::max(std::abs(i - bi), std::abs(j - bj)) < width) {
                        band[i * w + j] = 1;
                        break;
                    }
                }
    return band;
}

LabelMap random_labels(Pcg32& rng, int h, int w, int classes, bool with_ignore) {
    LabelMap m(h, w);
    for (auto& v : m.values) {
        if (with_ignore && rng.next_below(8) == 0) {
            v = kIgnoreLabel;
        } else {
            v = static_cast<std::uint8_t>(rng.next_below(static_cast<std::uint32_t>(classes)));
        }
    }
    return m;
}

} // namespace

TEST_CASE("confusion counts by hand") {
    LabelMap gt(2, 3), pred(2, 3);
    // gt:   0 1 1      pred: 0 1 0
    //       2 IG 0           2 2 1
    gt.at(0, 0) = 0; gt.at(0, 1) = 1; gt.at(0, 2) = 1;
    gt.at(1, 0) = 2; gt.at(1, 1) = kIgnoreLabel; gt.at(1, 2) = 0;
    pred.at(0, 0) = 0; pred.at(0, 1) = 1; pred.at(0, 2) = 0;
    pred.at(1, 0) = 2; pred.at(1, 1) = 2; pred.at(1, 2) = 1;

    ConfusionMatrix cm = accumulate_confusion(pred, gt, 3);
    CHECK(cm.total() == 5); // the IGNORE pixel is gone
    CHECK(cm.at(0, 0) == 1);
    CHECK(cm.at(0, 1) == 1); // gt 0 predicted 1 at (1,2)
    CHECK(cm.at(1, 1) == 1);
    CHECK(cm.at(1, 0) == 1);
    CHECK(cm.at(2, 2) == 1);
    CHECK(cm.at(2, 0) == 0);

    // Prediction equal to IGNORE's value would be a caller bug upstream; the
    // matrix only sees [0, classes) predictions.
    LabelMap bad = pred;
    bad.at(0, 0) = 3;
    CHECK_THROWS_AS(accumulate_confusion(bad, gt, 3), ValidationError);
}

TEST_CASE("miou hand value 0.25") {
    // gt half class 0, half class 1; prediction all class 0.
    // IoU0 = 4/8 = 0.5, IoU1 = 0, mean = 0.25.
    ConfusionMatrix cm(2);
    cm.at(0, 0) = 4;
    cm.at(1, 0) = 4;
    MiouResult r = compute_miou(cm);
    REQUIRE(r.defined);
    CHECK(r.miou == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(r.iou[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.iou[1] == 0.0);
    CHECK(r.present[0]);
    CHECK(r.present[1]);
}

TEST_CASE("classes absent from ground truth are excluded from the mean") {
    ConfusionMatrix cm(3);
    cm.at(0, 0) = 10;       // class 0 perfect
    cm.at(1, 2) = 5;        // class 1 all missed into class 2
    // class 2 never in gt but receives predictions
    MiouResult r = compute_miou(cm);
    REQUIRE(r.defined);
    CHECK_FALSE(r.present[2]);
    // IoU0 = 10/10 = 1, IoU1 = 0/(5+5-0)... row1=5, col1=0, diag=0 -> 0.
    CHECK(r.miou == doctest::Approx(0.5).epsilon(1e-12));

    ConfusionMatrix empty(4);
    CHECK_FALSE(compute_miou(empty).defined);
}

TEST_CASE("perfect prediction gives miou 1") {
    Pcg32 rng(12, 1);
    LabelMap gt = random_labels(rng, 9, 11, 5, true);
    ConfusionMatrix cm = accumulate_confusion(gt, gt, 5);
    MiouResult r = compute_miou(cm);
    REQUIRE(r.defined);
    CHECK(r.miou == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("confusion merge equals accumulation over concatenated data") {
    Pcg32 rng(13, 2);
    LabelMap gt1 = random_labels(rng, 6, 6, 4, true);
    LabelMap pr1 = random_labels(rng, 6, 6, 4, false);
    LabelMap gt2 = random_labels(rng, 6, 6, 4, true);
    LabelMap pr2 = random_labels(rng, 6, 6, 4, false);
    ConfusionMatrix a = accumulate_confusion(pr1, gt1, 4);
    ConfusionMatrix b = accumulate_confusion(pr2, gt2, 4);
    ConfusionMatrix merged = a;
    merged.merge(b);
    for (int g = 0; g < 4; ++g)
        for (int p = 0; p < 4; ++p) CHECK(merged.at(g, p) == a.at(g, p) + b.at(g, p));
    CHECK(merged.total() == a.total() + b.total());

    ConfusionMatrix other(5);
    CHECK_THROWS_AS(merged.merge(other), ValidationError);
}

TEST_CASE("miou is invariant under class relabeling") {
    Pcg32 rng(14, 3);
    LabelMap gt = random_labels(rng, 8, 8, 3, false);
    LabelMap pred = random_labels(rng, 8, 8, 3, false);
    // Swap classes 0 and 2 in both maps: per-class IoUs permute, mean stays.
    auto swap02 = [](LabelMap m) {
        for (auto& v : m.values) {
            if (v == 0) v = 2;
            else if (v == 2) v = 0;
        }
        return m;
    };
    MiouResult r1 = compute_miou(accumulate_confusion(pred, gt, 3));
    MiouResult r2 = compute_miou(accumulate_confusion(swap02(pred), swap02(gt), 3));
    REQUIRE(r1.defined);
    REQUIRE(r2.defined);
    CHECK(r1.miou == doctest::Approx(r2.miou).epsilon(1e-12));
    CHECK(r1.iou[0] == doctest::Approx(r2.iou[2]).epsilon(1e-12));
    CHECK(r1.iou[2] == doctest::Approx(r2.iou[0]).epsilon(1e-12));
}

TEST_CASE("argmax ties resolve to the lowest class") {
    TensorF logits({1, 2, 3});
    logits.at(0, 0, 0) = 1.0f;
    logits.at(0, 0, 1) = 1.0f; // tie with class 0
    logits.at(0, 0, 2) = 0.5f;
    logits.at(0, 1, 0) = -1.0f;
    logits.at(0, 1, 1) = 2.0f;
    logits.at(0, 1, 2) = 2.0f; // tie between 1 and 2
    LabelMap m = argmax_labels(logits);
    CHECK(m.at(0, 0) == 0);
    CHECK(m.at(0, 1) == 1);
}

TEST_CASE("trimap mask equals the brute-force oracle") {
    Pcg32 rng(15, 4);
    for (int trial = 0; trial < 4; ++trial) {
        LabelMap gt = random_labels(rng, 10, 13, 3, trial % 2 == 1);
        for (int width : {1, 2, 3, 5}) {
            std::vector<std::uint8_t> fast = trimap_mask(gt, width);
            std::vector<std::uint8_t> slow = trimap_reference(gt, width);
            REQUIRE(fast.size() == slow.size());
            for (std::size_t i = 0; i < fast.size(); ++i) {
                CAPTURE(trial);
                CAPTURE(width);
                CAPTURE(i);
                CHECK((fast[i] != 0) == (slow[i] != 0));
            }
        }
    }
}

TEST_CASE("trimap of a uniform map is empty and width grows the band") {
    LabelMap uniform(6, 6);
    for (auto& v : uniform.values) v = 2;
    std::vector<std::uint8_t> mask = trimap_mask(uniform, 3);
    for (auto v : mask) CHECK(v == 0);

    // A vertical two-class split: width 1 marks the two boundary columns.
    LabelMap split(4, 6);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 6; ++j) split.at(i, j) = j < 3 ? 0 : 1;
    std::vector<std::uint8_t> w1 = trimap_mask(split, 1);
    std::vector<std::uint8_t> w2 = trimap_mask(split, 2);
    int n1 = 0, n2 = 0;
    for (auto v : w1) n1 += v != 0;
    for (auto v : w2) n2 += v != 0;
    CHECK(n1 == 8);  // columns 2 and 3
    CHECK(n2 == 16); // columns 1..4
    for (int i = 0; i < 4; ++i) {
        CHECK(w1[i * 6 + 2] != 0);
        CHECK(w1[i * 6 + 3] != 0);
        CHECK(w1[i * 6 + 0] == 0);
    }
}

TEST_CASE("masked confusion keeps only in-band pixels") {
    LabelMap gt(2, 2), pred(2, 2);
    gt.at(0, 0) = 0; gt.at(0, 1) = 1; gt.at(1, 0) = 0; gt.at(1, 1) = 1;
    pred.at(0, 0) = 1; pred.at(0, 1) = 1; pred.at(1, 0) = 0; pred.at(1, 1) = 0;
    std::vector<std::uint8_t> mask = {1, 0, 0, 1};
    ConfusionMatrix cm = accumulate_confusion_masked(pred, gt, 2, mask);
    CHECK(cm.total() == 2);
    CHECK(cm.at(0, 1) == 1); // (0,0)
    CHECK(cm.at(1, 0) == 1); // (1,1)
}

TEST_CASE("cost model closed-form values at 1024x2048") {
    // Every number below re-derived by hand:
    // encoder = 226492416 + 5*1207959552 + 4*603979776 = 8682209280.
    // bilinear decoder: head 32*64*19*256 = 9961472, upsample 4*1024*2048*19
    //   = 159383552, total 169345024.
    // NRD coords-only (hidden 64): ctrl1 32*64*64*256*9 = 301989888,
    //   ctrl2 32*64*643*64 = 84279296, repr 32*64*64*592 = 77594624,
    //   upsample 159383552, total 623247360.
    // NRD guidance: guide 256*512*32*32*9 + 256*512*16*32*9 = 1811939328,
    //   ctrl2 at 899 = 117833728, repr at 848 = 111149056, total 2502295552.
    ModelConfig cfg;
    cfg.enc.controller_hidden = 64;
    cfg.nrd.classes = 19;

    cfg.decoder = DecoderKind::Bilinear;
    CostReport bil = count_macs(cfg, 1024, 2048);
    CHECK(bil.encoder == 8682209280LL);
    CHECK(bil.controller == 9961472LL);
    CHECK(bil.upsample == 159383552LL);
    CHECK(bil.guidance_head == 0);
    CHECK(bil.repr == 0);
    CHECK(bil.merge == 0);
    CHECK(bil.decoder_macs() == 169345024LL);

    cfg.decoder = DecoderKind::Nrd;
    cfg.nrd.guide_channels = 0;
    CostReport coords = count_macs(cfg, 1024, 2048);
    CHECK(coords.controller == 301989888LL + 84279296LL);
    CHECK(coords.repr == 77594624LL);
    CHECK(coords.upsample == 159383552LL);
    CHECK(coords.decoder_macs() == 623247360LL);
    CHECK(coords.total_macs() == 8682209280LL + 623247360LL);

    cfg.nrd.guide_channels = 16;
    CostReport guided = count_macs(cfg, 1024, 2048);
    CHECK(guided.guidance_head == 1811939328LL);
    CHECK(guided.controller == 301989888LL + 117833728LL);
    CHECK(guided.repr == 111149056LL);
    CHECK(guided.decoder_macs() == 2502295552LL);

    cfg.decoder = DecoderKind::Duc;
    CostReport duc = count_macs(cfg, 1024, 2048);
    CHECK(duc.controller == 2048LL * 32 * 32 * 19 * 256); // 1x1 head
    CHECK(duc.upsample == 0);                             // depth_to_space is free
    CHECK(duc.decoder_macs() == 10200547328LL);

    // Ordering and band, the Table 1 shape.
    CHECK(bil.decoder_macs() < coords.decoder_macs());
    CHECK(coords.decoder_macs() < guided.decoder_macs());
    double ratio = static_cast<double>(coords.decoder_macs()) / bil.decoder_macs();
    CHECK(ratio > 1.2);
    CHECK(ratio < 5.0);
}

TEST_CASE("cost model scales linearly in pixel count") {
    ModelConfig cfg;
    cfg.enc.controller_hidden = 64;
    cfg.decoder = DecoderKind::Nrd;
    cfg.nrd.guide_channels = 16;
    CostReport a = count_macs(cfg, 512, 512);
    CostReport b = count_macs(cfg, 1024, 512);
    CHECK(b.encoder == 2 * a.encoder);
    CHECK(b.guidance_head == 2 * a.guidance_head);
    CHECK(b.controller == 2 * a.controller);
    CHECK(b.repr == 2 * a.repr);
    CHECK(b.upsample == 2 * a.upsample);

    CHECK_THROWS_AS(count_macs(cfg, 100, 512), ValidationError); // not /32
}

TEST_CASE("cost report text and csv carry the same numbers") {
    ModelConfig cfg;
    cfg.decoder = DecoderKind::Bilinear;
    CostReport r = count_macs(cfg, 64, 64);
    std::string text = cost_report_text(r);
    std::string csv = cost_report_csv(r);
    CHECK(text.find("bilinear") != std::string::npos);
    CHECK(csv.find("decoder,height,width") == 0);
    CHECK(csv.find("bilinear,64,64,") != std::string::npos);
    CHECK(csv.find(std::to_string(r.total_macs())) != std::string::npos);
}

TEST_CASE("evaluate_dataset runs end to end on a tiny model") {
    SynthSpec spec;
    spec.seed = 5;
    spec.count = 4;
    spec.height = 32;
    spec.width = 32;
    spec.num_classes = 3;
    spec.min_shapes = 1;
    spec.max_shapes = 2;
    Dataset ds = dataset_from_bundle(gen_synthetic(spec), Split::All);

    ModelConfig cfg;
    cfg.enc.widths = {4, 6, 8, 10, 12};
    cfg.enc.controller_hidden = 8;
    cfg.nrd.classes = 3;
    cfg.decoder = DecoderKind::Bilinear;
    ParamMap<float> params = init_params<float>(cfg, 1);

    EvalResult r = evaluate_dataset(params, cfg, ds, 3);
    CHECK(r.samples == 4);
    REQUIRE(r.full.defined);
    CHECK(r.full.miou >= 0.0);
    CHECK(r.full.miou <= 1.0);
    REQUIRE(r.trimap.defined); // shapes guarantee boundaries somewhere
    CHECK(r.trimap.miou >= 0.0);
    CHECK(r.trimap.miou <= 1.0);
}
