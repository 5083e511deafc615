#include "nrd/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <functional>

#include "nrd/model.h"
#include "nrd/nn_ops.h"
#include "nrd/nrd_core.h"
#include "nrd/rng.h"

namespace nrd {

namespace {

constexpr double kStep = 1e-5;
constexpr int kTrials = 20;
constexpr std::uint64_t kSuiteSeed = 2024;

double rel_err(double analytic, double numeric) {
    double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-4});
    return std::abs(analytic - numeric) / denom;
}

double project(const TensorD& t, const TensorD& w) {
    double s = 0;
    for (std::int64_t i = 0; i < t.numel(); ++i) s += t[i] * w[i];
    return s;
}

// Central differences on n random coordinates of target; eval() must see the
// mutation (target is captured by the caller's lambda by reference).
double probe(TensorD& target, const TensorD& analytic, const std::function<double()>& eval,
             Pcg32& rng, int n) {
    double worst = 0;
    for (int p = 0; p < n; ++p) {
        std::int64_t i = rng.next_below(static_cast<std::uint32_t>(target.numel()));
        double v = target[i];
        target[i] = v + kStep;
        double fp = eval();
        target[i] = v - kStep;
        double fm = eval();
        target[i] = v;
        double numeric = (fp - fm) / (2 * kStep);
        worst = std::max(worst, rel_err(analytic[i], numeric));
    }
    return worst;
}

double check_conv(Pcg32& rng, int k, int stride) {
    double worst = 0;
    for (int t = 0; t < kTrials; ++t) {
        int ci = 1 + static_cast<int>(rng.next_below(3));
        int co = 1 + static_cast<int>(rng.next_below(3));
        int h = 2 + static_cast<int>(rng.next_below(4));
        int w = 2 + static_cast<int>(rng.next_below(4));
        ConvSpec spec{ci, co, k, stride};
        TensorD x = rand_normal<double>(rng, {h, w, ci}, 0, 1);
        TensorD wt = rand_normal<double>(rng, {co, ci, k, k}, 0, 1);
        TensorD b = rand_normal<double>(rng, {co}, 0, 1);
        TensorD proj = rand_normal<double>(rng, conv2d(x, spec, wt, b).shape, 0, 1);
        ConvGrads<double> g = conv2d_backward(x, spec, wt, proj);
        auto eval = [&] { return project(conv2d(x, spec, wt, b), proj); };
        worst = std::max(worst, probe(x, g.d_input, eval, rng, 4));
        worst = std::max(worst, probe(wt, g.d_weights, eval, rng, 4));
        worst = std::max(worst, probe(b, g.d_bias, eval, rng, 2));
    }
    return worst;
}

double check_relu(Pcg32& rng) {
    double worst = 0;
    for (int t = 0; t < kTrials; ++t) {
        TensorD x = rand_normal<double>(rng, {3, 4, 2}, 0, 1);
        // keep every input a safe distance from the kink
        for (auto& v : x.data)
            if (std::abs(v) < 0.05) v = std::copysign(0.1, v == 0 ? 1.0 : v);
        TensorD proj = rand_normal<double>(rng, x.shape, 0, 1);
        TensorD analytic = relu_backward(x, proj);
        auto eval = [&] { return project(relu(x), proj); };
        worst = std::max(worst, probe(x, analytic, eval, rng, 6));
    }
    return worst;
}

double check_bilinear(Pcg32& rng) {
    double worst = 0;
    for (int t = 0; t < kTrials; ++t) {
        int h = 1 + static_cast<int>(rng.next_below(4));
        int w = 1 + static_cast<int>(rng.next_below(4));
        int c = 1 + static_cast<int>(rng.next_below(3));
        int oh = 1 + static_cast<int>(rng.next_below(8));
        int ow = 1 + static_cast<int>(rng.next_below(8));
        TensorD x = rand_normal<double>(rng, {h, w, c}, 0, 1);
        TensorD proj = rand_normal<double>(rng, {oh, ow, c}, 0, 1);
        TensorD analytic = bilinear_resize_backward(proj, h, w);
        auto eval = [&] { return project(bilinear_resize(x, oh, ow), proj); };
        worst = std::max(worst, probe(x, analytic, eval, rng, 6));
    }
    return worst;
}

double check_depth_to_space(Pcg32& rng) {
    double worst = 0;
    for (int t = 0; t < kTrials; ++t) {
        int f = 1 + static_cast<int>(rng.next_below(3));
        int c = 1 + static_cast<int>(rng.next_below(3));
        int h = 1 + static_cast<int>(rng.next_below(3));
        int w = 1 + static_cast<int>(rng.next_below(3));
        TensorD x = rand_normal<double>(rng, {h, w, f * f * c}, 0, 1);
        TensorD proj = rand_normal<double>(rng, {h * f, w * f, c}, 0, 1);
        TensorD analytic = space_to_depth(proj, f);
        auto eval = [&] { return project(depth_to_space(x, f), proj); };
        worst = std::max(worst, probe(x, analytic, eval, rng, 6));
    }
    return worst;
}

LabelMap random_labels(Pcg32& rng, int h, int w, int classes, bool with_ignore) {
    LabelMap lm(h, w);
    for (auto& v : lm.values) {
        if (with_ignore && rng.next_below(8) == 0)
            v = kIgnoreLabel;
        else
            v = static_cast<std::uint8_t>(rng.next_below(static_cast<std::uint32_t>(classes)));
    }
    return lm;
}

double check_softmax_ce(Pcg32& rng) {
    double worst = 0;
    for (int t = 0; t < kTrials; ++t) {
        int h = 2 + static_cast<int>(rng.next_below(3));
        int w = 2 + static_cast<int>(rng.next_below(3));
        int c = 2 + static_cast<int>(rng.next_below(4));
        TensorD logits = rand_normal<double>(rng, {h, w, c}, 0, 2);
        LabelMap labels = random_labels(rng, h, w, c, true);
        TensorD analytic = softmax_cross_entropy(logits, labels).d_logits;
        auto eval = [&] { return softmax_cross_entropy(logits, labels).loss; };
        worst = std::max(worst, probe(logits, analytic, eval, rng, 6));
    }
    return worst;
}

double check_repr_network(Pcg32& rng) {
    double worst = 0;
    for (int t = 0; t < kTrials; ++t) {
        NrdConfig cfg;
        cfg.s = 1 + static_cast<int>(rng.next_below(4));
        cfg.use_coords = rng.next_below(2) != 0;
        cfg.guide_channels = cfg.use_coords ? static_cast<int>(rng.next_below(4))
                                            : 1 + static_cast<int>(rng.next_below(3));
        cfg.hidden = 2 + static_cast<int>(rng.next_below(3));
        cfg.classes = 2 + static_cast<int>(rng.next_below(4));
        ParamLayout lay = build_param_layout(cfg);
        TensorD theta = rand_normal<double>(rng, {lay.total}, 0, 1);
        TensorD coord = make_coordinate_map<double>(cfg.s);
        TensorD guidance({cfg.s, cfg.s, std::max(cfg.guide_channels, 1)});
        if (cfg.guide_channels > 0)
            guidance = rand_normal<double>(rng, guidance.shape, 0, 1);
        const TensorD* cp = cfg.use_coords ? &coord : nullptr;
        const TensorD* gp = cfg.guide_channels > 0 ? &guidance : nullptr;
        TensorD proj =
            rand_normal<double>(rng, {cfg.s, cfg.s, cfg.classes}, 0, 1);

        TensorD d_theta({lay.total});
        TensorD d_guidance({cfg.s, cfg.s, std::max(cfg.guide_channels, 1)});
        eval_repr_network_backward(theta.data.data(), lay, cfg, cp, gp, proj,
                                   d_theta.data.data(),
                                   cfg.guide_channels > 0 ? &d_guidance : nullptr);
        auto eval = [&] {
            return project(eval_repr_network(theta.data.data(), lay, cfg, cp, gp), proj);
        };
        worst = std::max(worst, probe(theta, d_theta, eval, rng, 5));
        if (cfg.guide_channels > 0)
            worst = std::max(worst, probe(guidance, d_guidance, eval, rng, 3));
    }
    return worst;
}

double check_nrd_decode(Pcg32& rng) {
    double worst = 0;
    for (int t = 0; t < kTrials; ++t) {
        NrdConfig cfg;
        cfg.s = 2;
        cfg.use_coords = true;
        cfg.guide_channels = 1 + static_cast<int>(rng.next_below(3));
        cfg.hidden = 2 + static_cast<int>(rng.next_below(2));
        cfg.classes = 2 + static_cast<int>(rng.next_below(2));
        ParamLayout lay = build_param_layout(cfg);
        int gh = 1 + static_cast<int>(rng.next_below(2));
        int gw = 1 + static_cast<int>(rng.next_below(2));
        TensorD theta = rand_normal<double>(rng, {gh, gw, lay.total}, 0, 1);
        TensorD guidance =
            rand_normal<double>(rng, {gh * cfg.s, gw * cfg.s, cfg.guide_channels}, 0, 1);
        TensorD proj = rand_normal<double>(
            rng, {gh * cfg.patch(), gw * cfg.patch(), cfg.classes}, 0, 1);
        NrdDecodeGrads<double> g = nrd_decode_backward(theta, &guidance, cfg, lay, proj);
        auto eval = [&] { return project(nrd_decode(theta, &guidance, cfg, lay), proj); };
        worst = std::max(worst, probe(theta, g.d_theta_map, eval, rng, 5));
        worst = std::max(worst, probe(guidance, g.d_guidance, eval, rng, 3));
    }
    return worst;
}

double check_model(Pcg32& rng, DecoderKind kind) {
    ModelConfig cfg;
    cfg.enc.widths = {2, 2, 3, 3, 4};
    cfg.enc.controller_hidden = 4;
    cfg.enc.use_neck = false;
    cfg.nrd.s = 8;
    cfg.nrd.use_coords = true;
    cfg.nrd.guide_channels = kind == DecoderKind::Nrd ? 2 : 0;
    cfg.nrd.hidden = 2;
    cfg.nrd.classes = 3;
    cfg.decoder = kind;

    double worst = 0;
    for (int t = 0; t < kTrials; ++t) {
        ParamMap<double> params;
        for (const ParamSpec& spec : param_schema(cfg))
            params.emplace(spec.name, rand_normal<double>(rng, spec.shape, 0, 0.4));
        TensorD image = rand_normal<double>(rng, {32, 32, 3}, 0, 1);
        LabelMap labels = random_labels(rng, 32, 32, cfg.nrd.classes, true);

        ForwardCache<double> cache;
        model_forward(image, params, cfg, cache);
        CeResult<double> ce = softmax_cross_entropy(cache.logits, labels);
        ParamMap<double> grads = model_backward(cache, params, cfg, ce.d_logits);

        std::vector<std::string> keys;
        for (const auto& [name, p] : params) keys.push_back(name);
        auto eval = [&] {
            ForwardCache<double> c2;
            model_forward(image, params, cfg, c2);
            return softmax_cross_entropy(c2.logits, labels).loss;
        };
        for (int p = 0; p < 6; ++p) {
            const std::string& name =
                keys[rng.next_below(static_cast<std::uint32_t>(keys.size()))];
            worst = std::max(worst, probe(params.at(name), grads.at(name), eval, rng, 1));
        }
    }
    return worst;
}

struct Op {
    const char* name;
    double tolerance;
    std::function<double(Pcg32&)> run;
};

const std::vector<Op>& ops() {
    static const std::vector<Op> table = {
        {"conv1x1", 1e-4, [](Pcg32& r) { return check_conv(r, 1, 1); }},
        {"conv3x3", 1e-4, [](Pcg32& r) { return check_conv(r, 3, 1); }},
        {"conv3x3s2", 1e-4, [](Pcg32& r) { return check_conv(r, 3, 2); }},
        {"relu", 1e-6, check_relu},
        {"bilinear", 1e-4, check_bilinear},
        {"depth_to_space", 1e-4, check_depth_to_space},
        {"softmax_ce", 1e-4, check_softmax_ce},
        {"repr_network", 1e-4, check_repr_network},
        {"nrd_decode", 1e-4, check_nrd_decode},
        {"model_nrd", 1e-4, [](Pcg32& r) { return check_model(r, DecoderKind::Nrd); }},
        {"model_bilinear", 1e-4,
         [](Pcg32& r) { return check_model(r, DecoderKind::Bilinear); }},
        {"model_duc", 1e-4, [](Pcg32& r) { return check_model(r, DecoderKind::Duc); }},
    };
    return table;
}

} // namespace

std::vector<std::string> gradcheck_op_names() {
    std::vector<std::string> names;
    for (const Op& op : ops()) names.push_back(op.name);
    return names;
}

std::vector<GradCheckResult> run_gradcheck(const std::string& which) {
    std::vector<GradCheckResult> results;
    bool matched = false;
    for (const Op& op : ops()) {
        if (which != "all" && which != op.name) continue;
        matched = true;
        Pcg32 rng = named_stream(kSuiteSeed, std::string("gradcheck.") + op.name);
        GradCheckResult res;
        res.op = op.name;
        res.trials = kTrials;
        res.tolerance = op.tolerance;
        res.max_rel_err = op.run(rng);
        res.pass = res.max_rel_err < op.tolerance;
        results.push_back(std::move(res));
    }
    check_valid(matched, "unknown gradcheck op: " + which);
    return results;
}

bool gradcheck_passed(const std::vector<GradCheckResult>& results) {
    for (const auto& r : results)
        if (!r.pass) return false;
    return !results.empty();
}

} // namespace nrd
