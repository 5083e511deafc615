#pragma once

#include <array>
#include <string>

#include "nrd/datagen.h"
#include "nrd/train.h"

namespace nrd {

// Flat key=value run configuration ('#' starts a comment). Every key has a
// default; unknown keys are rejected; parse(serialize(cfg)) == cfg.
struct RunConfig {
    std::uint64_t seed = 1;
    std::string decoder = "nrd";

    std::array<int, 5> enc_widths = {16, 32, 64, 128, 256};
    int controller_hidden = 512;
    bool use_neck = false;

    int nrd_s = 8;
    bool nrd_use_coords = true;
    int nrd_guide_channels = 16;
    int nrd_hidden = 16;
    int nrd_classes = 19;

    double base_lr = 0.01;
    double poly_power = 0.9;
    double weight_decay = 0.0005;
    double momentum = 0.9;
    int max_iters = 2000;
    int batch_size = 8;
    int crop = 64;
    int checkpoint_interval = 1000;
    int val_interval = 200;

    int trimap_width = 3;

    std::string data;
    std::string val_data;
    std::string out_dir;

    bool operator==(const RunConfig&) const = default;

    ModelConfig model_config() const;
    TrainConfig train_config() const;
    std::string serialize() const;

    static RunConfig parse_text(const std::string& text);
    static RunConfig load(const std::string& path);
};

// gen-data spec files reuse the same key=value syntax.
SynthSpec parse_synth_spec(const std::string& text);
SynthSpec load_synth_spec(const std::string& path);
std::string serialize_synth_spec(const SynthSpec& spec);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

} // namespace nrd
