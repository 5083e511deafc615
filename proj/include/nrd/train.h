#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nrd/datagen.h"
#include "nrd/model.h"

namespace nrd {

struct TrainConfig {
    ModelConfig model;
    double base_lr = 0.01;
    double poly_power = 0.9;
    double weight_decay = 5e-4;
    double momentum = 0.9;
    int max_iters = 2000;
    int batch_size = 8;
    int crop = 64;
    std::uint64_t seed = 1;
    int checkpoint_interval = 1000;
    int val_interval = 200;

    void validate() const {
        model.validate();
        check_valid(base_lr > 0, "base_lr must be > 0");
        check_valid(momentum >= 0 && momentum < 1, "momentum must be in [0, 1)");
        check_valid(weight_decay >= 0, "weight_decay must be >= 0");
        check_valid(max_iters >= 1, "max_iters must be >= 1");
        check_valid(batch_size >= 1, "batch_size must be >= 1");
        check_valid(crop > 0 && crop % 32 == 0, "crop must be positive and divisible by 32");
        check_valid(checkpoint_interval >= 1 && val_interval >= 1,
                    "intervals must be >= 1");
    }
};

inline double poly_lr(std::int64_t iter, std::int64_t max_iters, double base_lr, double power) {
    check_contract(iter >= 0 && iter <= max_iters, "poly_lr iter out of range");
    return base_lr * std::pow(1.0 - static_cast<double>(iter) / static_cast<double>(max_iters),
                              power);
}

struct OptState {
    ParamMap<float> momentum; // one buffer per parameter, same keys
    std::int64_t iter = 0;
};

OptState make_opt_state(const ParamMap<float>& params);

// g' = g + wd*p (weights only, names ending ".w"); v = m*v + g'; p -= lr*v.
void sgd_step(ParamMap<float>& params, const ParamMap<float>& grads, OptState& state, double lr,
              double momentum, double weight_decay);

// Checkpoint bundle: param/<name>, mom/<name>, "iter" (real64 scalar),
// "cfg/text" (config echo as real32 character codes).
struct Checkpoint {
    ParamMap<float> params;
    OptState state;
    std::string cfg_text;
};

void save_checkpoint(const std::string& path, const ParamMap<float>& params, const OptState& state,
                     const std::string& cfg_text);
Checkpoint load_checkpoint(const std::string& path);

struct TrainResult {
    ParamMap<float> params;
    OptState state;
    std::string metrics_csv;       // header + one row per iteration
    double final_loss = 0.0;
    double last_val_miou = -1.0;   // < 0 when never evaluated
};

// Deterministic given cfg.seed: init, sample order, and augmentation all come
// from named PCG streams. out_dir may be empty (no files written); resume_from
// may name a checkpoint whose iteration counter the loop continues from.
TrainResult train_loop(const TrainConfig& cfg, const Dataset& train_ds, const Dataset* val_ds,
                       const std::string& out_dir, const std::string& cfg_text,
                       const std::string& resume_from = "", bool quiet = false);

struct FitPatchResult {
    std::vector<float> theta;
    std::vector<double> loss_curve;
    std::vector<double> accuracy_curve; // after each step
    double final_accuracy = 0.0;
};

// Optimizes one flat theta directly (no controller) against an r x r label
// patch; guidance defaults to zeros when the config enables guidance channels
// but no patch is supplied.
FitPatchResult fit_patch(const LabelMap& patch, const NrdConfig& cfg, int steps, double lr,
                         std::uint64_t seed, const TensorF* guidance_patch = nullptr);

} // namespace nrd
