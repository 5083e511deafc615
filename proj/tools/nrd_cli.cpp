#include <cstdio>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "nrd/config.h"
#include "nrd/datagen.h"
#include "nrd/eval.h"
#include "nrd/gradcheck.h"
#include "nrd/io.h"
#include "nrd/model.h"
#include "nrd/train.h"

namespace {

using namespace nrd;

void cmd_gen_data(const std::string& spec_path, const std::string& out_path) {
    SynthSpec spec = load_synth_spec(spec_path);
    NamedTensorBundle bundle = gen_synthetic(spec);
    write_bundle(bundle, out_path);
    std::printf("wrote %d samples to %s\n", spec.count, out_path.c_str());
}

void cmd_train(const std::string& config_path, const std::string& data_path,
               const std::string& val_data_path, const std::string& out_dir,
               const std::string& resume, bool quiet) {
    RunConfig cfg = RunConfig::load(config_path);
    if (!data_path.empty()) cfg.data = data_path;
    if (!val_data_path.empty()) cfg.val_data = val_data_path;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    check_valid(!cfg.data.empty(), "no dataset given (flag --data or config key data)");
    check_valid(!cfg.out_dir.empty(), "no output directory given (--out-dir or out_dir)");

    // With a separate validation bundle both files are used whole; otherwise
    // the single bundle's recorded parity split applies.
    Dataset train_ds, val_ds;
    if (cfg.val_data.empty()) {
        train_ds = load_dataset(cfg.data, Split::Train);
        val_ds = load_dataset(cfg.data, Split::Val);
    } else {
        train_ds = load_dataset(cfg.data, Split::All);
        val_ds = load_dataset(cfg.val_data, Split::All);
    }
    TrainResult res = train_loop(cfg.train_config(), train_ds, val_ds.size() ? &val_ds : nullptr,
                                 cfg.out_dir, cfg.serialize(), resume, quiet);
    std::printf("trained %lld iterations, final loss %.17g, val mIoU %.17g\n",
                static_cast<long long>(res.state.iter), res.final_loss, res.last_val_miou);
    std::printf("checkpoint %s/ckpt_final.nrdb\n", cfg.out_dir.c_str());
}

ModelConfig model_config_from_checkpoint(const Checkpoint& ck) {
    check_valid(!ck.cfg_text.empty(), "checkpoint lacks a config echo");
    return RunConfig::parse_text(ck.cfg_text).model_config();
}

void cmd_eval(const std::string& ckpt_path, const std::string& data_path, int trimap_width,
              const std::string& split_name, const std::string& out_csv) {
    Checkpoint ck = load_checkpoint(ckpt_path);
    ModelConfig cfg = model_config_from_checkpoint(ck);
    Split split = Split::All;
    if (split_name == "train") split = Split::Train;
    else if (split_name == "val") split = Split::Val;
    else check_valid(split_name == "all", "--split must be all, train, or val");
    Dataset ds = load_dataset(data_path, split);
    check_valid(ds.size() > 0, "evaluation dataset is empty");

    EvalResult res = evaluate_dataset(ck.params, cfg, ds, trimap_width);
    CostReport cost = count_macs(cfg, ds.images[0].dim(0), ds.images[0].dim(1));
    char buf[256];
    std::snprintf(buf, sizeof buf, "decoder,miou,trimap_miou,decoder_macs,total_macs\n%s,%.17g,%.17g,%lld,%lld\n",
                  decoder_name(cfg.decoder), res.full.defined ? res.full.miou : -1.0,
                  res.trimap.defined ? res.trimap.miou : -1.0,
                  static_cast<long long>(cost.decoder_macs()),
                  static_cast<long long>(cost.total_macs()));
    if (!out_csv.empty()) write_text_file(out_csv, buf);
    std::fputs(buf, stdout);
}

void cmd_infer(const std::string& ckpt_path, const std::string& image_path,
               const std::string& out_label, const std::string& out_color) {
    Checkpoint ck = load_checkpoint(ckpt_path);
    ModelConfig cfg = model_config_from_checkpoint(ck);
    AnyTensor image = read_tensor(image_path);
    check_valid(image.is_f32(), "input image must be a real32 tensor");
    ForwardCache<float> cache;
    model_forward(image.f32(), ck.params, cfg, cache);
    LabelMap pred = argmax_labels(cache.logits);
    if (!out_label.empty()) write_pgm(pred, out_label);
    if (!out_color.empty()) write_ppm(pred, out_color);
    std::printf("predicted %dx%d label map\n", pred.height, pred.width);
}

void cmd_fit_patch(const std::string& patch_path, int steps, double lr, std::uint64_t seed,
                   const NrdConfig& cfg, const std::string& out_csv) {
    LabelMap patch = read_pgm(patch_path);
    FitPatchResult res = fit_patch(patch, cfg, steps, lr, seed);
    std::string csv = "step,loss,accuracy\n";
    char row[96];
    for (std::size_t i = 0; i < res.accuracy_curve.size(); ++i) {
        std::snprintf(row, sizeof row, "%zu,%.17g,%.17g\n", i + 1, res.loss_curve[i],
                      res.accuracy_curve[i]);
        csv += row;
    }
    if (!out_csv.empty()) write_text_file(out_csv, csv);
    std::printf("fit %d steps, final accuracy %.4f\n", steps, res.final_accuracy);
}

void cmd_count_flops(const std::string& config_path, const std::string& hw,
                     const std::string& out_csv) {
    RunConfig cfg = RunConfig::load(config_path);
    int h = 0, w = 0;
    check_valid(std::sscanf(hw.c_str(), "%dx%d", &h, &w) == 2 && h > 0 && w > 0,
                "--hw must look like 1024x2048");
    CostReport report = count_macs(cfg.model_config(), h, w);
    if (!out_csv.empty()) write_text_file(out_csv, cost_report_csv(report));
    std::fputs(cost_report_text(report).c_str(), stdout);
}

int cmd_gradcheck(const std::string& op) {
    std::vector<GradCheckResult> results = run_gradcheck(op);
    for (const auto& r : results)
        std::printf("%-16s trials=%d max_rel_err=%.3e tol=%.0e %s\n", r.op.c_str(), r.trials,
                    r.max_rel_err, r.tolerance, r.pass ? "PASS" : "FAIL");
    return gradcheck_passed(results) ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dynamic neural representational decoder toolkit"};
    app.require_subcommand(1);
    int exit_code = 0;

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic shape dataset");
    std::string gen_spec, gen_out;
    gen->add_option("--spec", gen_spec, "key=value spec file")->required();
    gen->add_option("--out", gen_out, "output dataset bundle (.nrdb)")->required();
    gen->callback([&] { cmd_gen_data(gen_spec, gen_out); });

    auto* train = app.add_subcommand("train", "Train a model");
    std::string tr_config, tr_data, tr_val_data, tr_out, tr_resume;
    bool tr_quiet = false;
    train->add_option("--config", tr_config, "run config file")->required();
    train->add_option("--data", tr_data, "training dataset bundle");
    train->add_option("--val-data", tr_val_data, "separate validation bundle");
    train->add_option("--out-dir", tr_out, "output directory for checkpoints and metrics");
    train->add_option("--resume", tr_resume, "checkpoint to resume from");
    train->add_flag("--quiet", tr_quiet, "suppress progress lines");
    train->callback([&] { cmd_train(tr_config, tr_data, tr_val_data, tr_out, tr_resume, tr_quiet); });

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
    std::string ev_ckpt, ev_data, ev_out, ev_split = "all";
    int ev_trimap = 3;
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint bundle")->required();
    ev->add_option("--data", ev_data, "dataset bundle")->required();
    ev->add_option("--trimap-width", ev_trimap, "trimap band width in pixels (default 3)");
    ev->add_option("--split", ev_split, "dataset split: all, train, or val (default all)");
    ev->add_option("--out", ev_out, "output CSV path");
    ev->callback([&] { cmd_eval(ev_ckpt, ev_data, ev_trimap, ev_split, ev_out); });

    auto* inf = app.add_subcommand("infer", "Predict labels for one image tensor");
    std::string in_ckpt, in_image, in_label, in_color;
    inf->add_option("--checkpoint", in_ckpt, "checkpoint bundle")->required();
    inf->add_option("--image", in_image, "input image tensor (.nrdt, [H,W,3] real32)")->required();
    inf->add_option("--out-label", in_label, "output label map (.pgm)");
    inf->add_option("--out-color", in_color, "output color visualization (.ppm)");
    inf->callback([&] { cmd_infer(in_ckpt, in_image, in_label, in_color); });

    auto* fit = app.add_subcommand("fit-patch", "Fit one representational network to a patch");
    std::string fp_patch, fp_out;
    int fp_steps = 500;
    double fp_lr = 0.2;
    std::uint64_t fp_seed = 1;
    NrdConfig fp_cfg; // default layout: s=8, C_m=16, C_r=16, 19 classes
    fit->add_option("--patch", fp_patch, "label patch (.pgm, r x r)")->required();
    fit->add_option("--steps", fp_steps, "gradient steps (default 500)");
    fit->add_option("--lr", fp_lr, "learning rate (default 0.2)");
    fit->add_option("--seed", fp_seed, "init seed (default 1)");
    fit->add_option("--s", fp_cfg.s, "representation grid extent (default 8)");
    fit->add_option("--hidden", fp_cfg.hidden, "hidden width C_r (default 16)");
    fit->add_option("--classes", fp_cfg.classes, "class count (default 19)");
    fit->add_option("--guide-channels", fp_cfg.guide_channels,
                    "guidance channels, zeros are fed (default 16)");
    fit->add_option("--out", fp_out, "output CSV (step,loss,accuracy)");
    fit->callback([&] { cmd_fit_patch(fp_patch, fp_steps, fp_lr, fp_seed, fp_cfg, fp_out); });

    auto* flops = app.add_subcommand("count-flops", "Symbolic decoder cost model");
    std::string cf_config, cf_hw = "1024x2048", cf_out;
    flops->add_option("--config", cf_config, "run config file")->required();
    flops->add_option("--hw", cf_hw, "input extents HxW (default 1024x2048)");
    flops->add_option("--out", cf_out, "output CSV path");
    flops->callback([&] { cmd_count_flops(cf_config, cf_hw, cf_out); });

    auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
    std::string gc_op = "all";
    gc->add_option("--op", gc_op, "op name or all (default all)");
    gc->callback([&] { exit_code = cmd_gradcheck(gc_op); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const nrd::ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const nrd::ContractError& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 2;
    }
    return exit_code;
}
