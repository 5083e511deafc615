#include "nrd/train.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "nrd/eval.h"
#include "nrd/io.h"
#include "nrd/rng.h"

namespace nrd {

OptState make_opt_state(const ParamMap<float>& params) {
    OptState state;
    for (const auto& [name, p] : params) state.momentum.emplace(name, TensorF(p.shape));
    return state;
}

void sgd_step(ParamMap<float>& params, const ParamMap<float>& grads, OptState& state, double lr,
              double momentum, double weight_decay) {
    check_valid(params.size() == grads.size() && params.size() == state.momentum.size(),
                "optimizer bundles are not aligned");
    auto pit = params.begin();
    auto git = grads.begin();
    auto vit = state.momentum.begin();
    for (; pit != params.end(); ++pit, ++git, ++vit) {
        check_valid(pit->first == git->first && pit->first == vit->first,
                    "optimizer bundle name mismatch at " + pit->first);
        TensorF& p = pit->second;
        const TensorF& g = git->second;
        TensorF& v = vit->second;
        check_valid(p.same_shape(g) && p.same_shape(v),
                    "optimizer shape mismatch at " + pit->first);
        const bool decay = weight_decay > 0 && pit->first.size() >= 2 &&
                           pit->first.compare(pit->first.size() - 2, 2, ".w") == 0;
        const float lrf = static_cast<float>(lr);
        const float mom = static_cast<float>(momentum);
        const float wd = static_cast<float>(weight_decay);
        for (std::int64_t i = 0; i < p.numel(); ++i) {
            float gi = decay ? g[i] + wd * p[i] : g[i];
            v[i] = mom * v[i] + gi;
            p[i] -= lrf * v[i];
        }
    }
    ++state.iter;
}

void save_checkpoint(const std::string& path, const ParamMap<float>& params, const OptState& state,
                     const std::string& cfg_text) {
    NamedTensorBundle bundle;
    TensorF text({static_cast<int>(cfg_text.size()) + 1});
    for (std::size_t i = 0; i < cfg_text.size(); ++i)
        text[static_cast<std::int64_t>(i)] = static_cast<float>(
            static_cast<unsigned char>(cfg_text[i]));
    bundle.add("cfg/text", AnyTensor(std::move(text)));
    bundle.add("iter", AnyTensor(TensorD({1}, {static_cast<double>(state.iter)})));
    for (const auto& [name, p] : params) bundle.add("param/" + name, AnyTensor(p));
    for (const auto& [name, v] : state.momentum) bundle.add("mom/" + name, AnyTensor(v));
    write_bundle(bundle, path);
}

Checkpoint load_checkpoint(const std::string& path) {
    NamedTensorBundle bundle = read_bundle(path);
    Checkpoint ck;
    check_valid(bundle.has("cfg/text") && bundle.has("iter"), "not a checkpoint bundle");
    const TensorF& text = bundle.get("cfg/text").f32();
    for (std::int64_t i = 0; i + 1 < text.numel(); ++i)
        ck.cfg_text.push_back(static_cast<char>(static_cast<unsigned char>(text[i])));
    ck.state.iter = static_cast<std::int64_t>(bundle.get("iter").f64()[0]);
    for (std::size_t i = 0; i < bundle.size(); ++i) {
        const auto& [name, tensor] = bundle.entry(i);
        if (name.rfind("param/", 0) == 0)
            ck.params.emplace(name.substr(6), tensor.f32());
        else if (name.rfind("mom/", 0) == 0)
            ck.state.momentum.emplace(name.substr(4), tensor.f32());
    }
    check_valid(ck.params.size() == ck.state.momentum.size() && !ck.params.empty(),
                "checkpoint parameter/momentum sets are not aligned");
    return ck;
}

namespace {

struct SampleDraw {
    int idx = 0;
    bool flip = false;
    int oy = 0, ox = 0;
};

// One batch worth of sampling decisions; consumed identically during resume
// fast-forward, so the streams line up with an uninterrupted run.
std::vector<SampleDraw> draw_batch(const TrainConfig& cfg, const Dataset& ds, Pcg32& data_rng,
                                   Pcg32& aug_rng) {
    std::vector<SampleDraw> draws(static_cast<std::size_t>(cfg.batch_size));
    for (auto& d : draws) {
        d.idx = static_cast<int>(data_rng.next_below(static_cast<std::uint32_t>(ds.size())));
        d.flip = aug_rng.next_below(2) != 0;
        const TensorF& img = ds.images[static_cast<std::size_t>(d.idx)];
        check_valid(img.dim(0) >= cfg.crop && img.dim(1) >= cfg.crop,
                    "crop larger than image");
        d.oy = static_cast<int>(
            aug_rng.next_below(static_cast<std::uint32_t>(img.dim(0) - cfg.crop + 1)));
        d.ox = static_cast<int>(
            aug_rng.next_below(static_cast<std::uint32_t>(img.dim(1) - cfg.crop + 1)));
    }
    return draws;
}

void apply_augment(const TensorF& img, const LabelMap& lbl, const SampleDraw& d, int crop,
                   TensorF& out_img, LabelMap& out_lbl) {
    out_img = TensorF({crop, crop, 3});
    out_lbl = LabelMap(crop, crop);
    for (int i = 0; i < crop; ++i)
        for (int j = 0; j < crop; ++j) {
            int sj = d.flip ? d.ox + crop - 1 - j : d.ox + j;
            for (int c = 0; c < 3; ++c) out_img.at(i, j, c) = img.at(d.oy + i, sj, c);
            out_lbl.at(i, j) = lbl.at(d.oy + i, sj);
        }
}

void dump_batch(const std::string& out_dir, const std::vector<TensorF>& imgs,
                const std::vector<LabelMap>& lbls) {
    if (out_dir.empty()) return;
    NamedTensorBundle bundle;
    char name[32];
    for (std::size_t i = 0; i < imgs.size(); ++i) {
        std::snprintf(name, sizeof name, "img/%06zu", i);
        bundle.add(name, AnyTensor(imgs[i]));
        std::snprintf(name, sizeof name, "lbl/%06zu", i);
        bundle.add(name, AnyTensor(tensor_from_label_map(lbls[i])));
    }
    write_bundle(bundle, out_dir + "/diagnostic_batch.nrdb");
}

} // namespace

TrainResult train_loop(const TrainConfig& cfg, const Dataset& train_ds, const Dataset* val_ds,
                       const std::string& out_dir, const std::string& cfg_text,
                       const std::string& resume_from, bool quiet) {
    cfg.validate();
    check_valid(!train_ds.images.empty(), "training dataset is empty");
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

    TrainResult res;
    if (resume_from.empty()) {
        res.params = init_params<float>(cfg.model, cfg.seed);
        res.state = make_opt_state(res.params);
    } else {
        Checkpoint ck = load_checkpoint(resume_from);
        res.params = std::move(ck.params);
        res.state = std::move(ck.state);
        check_valid(res.state.iter <= cfg.max_iters,
                    "checkpoint iteration is beyond max_iters");
    }

    Pcg32 data_rng = named_stream(cfg.seed, "data");
    Pcg32 aug_rng = named_stream(cfg.seed, "augment");
    for (std::int64_t it = 0; it < res.state.iter; ++it)
        draw_batch(cfg, train_ds, data_rng, aug_rng);

    std::ofstream metrics;
    std::string header = "iter,lr,loss,val_miou\n";
    if (!out_dir.empty()) {
        metrics.open(out_dir + "/metrics.csv",
                     resume_from.empty() ? std::ios::trunc : std::ios::app);
        check_valid(metrics.good(), "cannot open metrics.csv for writing");
    }
    if (resume_from.empty()) {
        res.metrics_csv += header;
        if (metrics.is_open()) metrics << header;
    }

    std::vector<TensorF> batch_imgs(static_cast<std::size_t>(cfg.batch_size));
    std::vector<LabelMap> batch_lbls(static_cast<std::size_t>(cfg.batch_size));
    ForwardCache<float> cache;
    char row[192];

    for (std::int64_t it = res.state.iter; it < cfg.max_iters; ++it) {
        const double lr = poly_lr(it, cfg.max_iters, cfg.base_lr, cfg.poly_power);
        std::vector<SampleDraw> draws = draw_batch(cfg, train_ds, data_rng, aug_rng);

        ParamMap<float> grad_sum;
        double loss_sum = 0.0;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const SampleDraw& d = draws[static_cast<std::size_t>(b)];
            apply_augment(train_ds.images[static_cast<std::size_t>(d.idx)],
                          train_ds.labels[static_cast<std::size_t>(d.idx)], d, cfg.crop,
                          batch_imgs[static_cast<std::size_t>(b)],
                          batch_lbls[static_cast<std::size_t>(b)]);
            model_forward(batch_imgs[static_cast<std::size_t>(b)], res.params, cfg.model, cache);
            CeResult<float> ce =
                softmax_cross_entropy(cache.logits, batch_lbls[static_cast<std::size_t>(b)]);
            loss_sum += ce.loss;
            ParamMap<float> g = model_backward(cache, res.params, cfg.model, ce.d_logits);
            if (grad_sum.empty()) {
                grad_sum = std::move(g);
            } else {
                auto sit = grad_sum.begin();
                for (auto git = g.begin(); git != g.end(); ++git, ++sit)
                    for (std::int64_t k = 0; k < git->second.numel(); ++k)
                        sit->second[k] += git->second[k];
            }
        }
        const float inv_batch = 1.0f / static_cast<float>(cfg.batch_size);
        for (auto& [name, g] : grad_sum)
            for (std::int64_t k = 0; k < g.numel(); ++k) g[k] *= inv_batch;
        const double loss = loss_sum / cfg.batch_size;

        if (!std::isfinite(loss)) {
            dump_batch(out_dir, batch_imgs, batch_lbls);
            throw ValidationError("non-finite loss at iteration " + std::to_string(it + 1) +
                                  (out_dir.empty() ? "" : "; offending batch dumped to " +
                                                              out_dir + "/diagnostic_batch.nrdb"));
        }

        sgd_step(res.params, grad_sum, res.state, lr, cfg.momentum, cfg.weight_decay);
        res.final_loss = loss;

        const std::int64_t done = res.state.iter;
        const bool do_val =
            val_ds != nullptr && (done % cfg.val_interval == 0 || done == cfg.max_iters);
        if (do_val) {
            EvalResult ev = evaluate_dataset(res.params, cfg.model, *val_ds, 3);
            res.last_val_miou = ev.full.defined ? ev.full.miou : 0.0;
            std::snprintf(row, sizeof row, "%lld,%.17g,%.17g,%.17g\n",
                          static_cast<long long>(done), lr, loss, res.last_val_miou);
        } else {
            std::snprintf(row, sizeof row, "%lld,%.17g,%.17g,\n", static_cast<long long>(done),
                          lr, loss);
        }
        res.metrics_csv += row;
        if (metrics.is_open()) metrics << row;
        if (!quiet && (done % 100 == 0 || done == cfg.max_iters))
            std::fprintf(stderr, "iter %lld/%d lr %.5f loss %.5f%s\n",
                         static_cast<long long>(done), cfg.max_iters, lr, loss,
                         do_val ? (" val_miou " + std::to_string(res.last_val_miou)).c_str() : "");

        if (!out_dir.empty() && done % cfg.checkpoint_interval == 0 && done != cfg.max_iters) {
            std::snprintf(row, sizeof row, "%s/ckpt_%06lld.nrdb", out_dir.c_str(),
                          static_cast<long long>(done));
            save_checkpoint(row, res.params, res.state, cfg_text);
        }
    }
    if (metrics.is_open()) metrics.flush();
    if (!out_dir.empty())
        save_checkpoint(out_dir + "/ckpt_final.nrdb", res.params, res.state, cfg_text);
    return res;
}

FitPatchResult fit_patch(const LabelMap& patch, const NrdConfig& cfg, int steps, double lr,
                         std::uint64_t seed, const TensorF* guidance_patch) {
    cfg.validate();
    const int r = cfg.patch();
    check_valid(patch.height == r && patch.width == r,
                "patch extents must equal the decoded patch size");
    check_valid(steps >= 1, "steps must be >= 1");
    for (std::uint8_t v : patch.values)
        check_valid(v == kIgnoreLabel || v < cfg.classes, "patch label outside class range");

    const ParamLayout lay = build_param_layout(cfg);
    Pcg32 rng = named_stream(seed, "fitpatch.init");
    TensorF theta_map = rand_normal<float>(rng, {1, 1, lay.total}, 0.0, 0.3);

    TensorF guidance;
    const TensorF* gptr = nullptr;
    if (cfg.guide_channels > 0) {
        if (guidance_patch) {
            check_valid(guidance_patch->shape == Shape{cfg.s, cfg.s, cfg.guide_channels},
                        "guidance patch shape mismatch");
            guidance = *guidance_patch;
        } else {
            guidance = TensorF({cfg.s, cfg.s, cfg.guide_channels});
        }
        gptr = &guidance;
    }

    constexpr double kFitMomentum = 0.9;
    std::vector<float> vel(static_cast<std::size_t>(lay.total), 0.0f);
    FitPatchResult res;
    std::int64_t labeled = 0;
    for (std::uint8_t v : patch.values)
        if (v != kIgnoreLabel) ++labeled;
    check_valid(labeled > 0, "patch has no labeled pixels");

    for (int step = 0; step < steps; ++step) {
        TensorF logits = nrd_decode(theta_map, gptr, cfg, lay);
        CeResult<float> ce = softmax_cross_entropy(logits, patch);
        NrdDecodeGrads<float> g = nrd_decode_backward(theta_map, gptr, cfg, lay, ce.d_logits);
        for (std::int64_t i = 0; i < lay.total; ++i) {
            float& v = vel[static_cast<std::size_t>(i)];
            v = static_cast<float>(kFitMomentum) * v + g.d_theta_map[i];
            theta_map[i] -= static_cast<float>(lr) * v;
        }

        TensorF fitted = nrd_decode(theta_map, gptr, cfg, lay);
        LabelMap pred = argmax_labels(fitted);
        std::int64_t correct = 0;
        for (std::int64_t i = 0; i < patch.pixels(); ++i) {
            std::uint8_t gt = patch.values[static_cast<std::size_t>(i)];
            if (gt != kIgnoreLabel && pred.values[static_cast<std::size_t>(i)] == gt) ++correct;
        }
        res.loss_curve.push_back(ce.loss);
        res.accuracy_curve.push_back(static_cast<double>(correct) /
                                     static_cast<double>(labeled));
    }
    res.theta = theta_map.data;
    res.final_accuracy = res.accuracy_curve.back();
    return res;
}

} // namespace nrd
