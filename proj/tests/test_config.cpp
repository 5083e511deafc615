#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "nrd/config.h"

using namespace nrd;

TEST_CASE("serialize then parse is the identity") {
    RunConfig cfg;
    cfg.seed = 99;
    cfg.decoder = "duc";
    cfg.enc_widths = {8, 16, 24, 32, 40};
    cfg.controller_hidden = 64;
    cfg.use_neck = true;
    cfg.nrd_s = 8;
    cfg.nrd_use_coords = false;
    cfg.nrd_guide_channels = 4;
    cfg.nrd_hidden = 12;
    cfg.nrd_classes = 7;
    cfg.base_lr = 0.0375;
    cfg.poly_power = 0.85;
    cfg.weight_decay = 1e-5;
    cfg.momentum = 0.95;
    cfg.max_iters = 1234;
    cfg.batch_size = 3;
    cfg.crop = 96;
    cfg.checkpoint_interval = 17;
    cfg.val_interval = 29;
    cfg.trimap_width = 5;
    cfg.data = "a/b.nrdb";
    cfg.val_data = "c d.nrdb"; // paths may contain spaces
    cfg.out_dir = "out";

    RunConfig back = RunConfig::parse_text(cfg.serialize());
    CHECK(back == cfg);

    // Defaults survive an empty document.
    CHECK(RunConfig::parse_text("") == RunConfig{});
    CHECK(RunConfig::parse_text("# only a comment\n\n") == RunConfig{});
}

TEST_CASE("parse accepts comments, blanks, and spacing variants") {
    RunConfig cfg = RunConfig::parse_text(
        "# run configuration\n"
        "seed=5\n"
        "decoder   =   bilinear\n"
        "\n"
        "train.base_lr = 0.5 # inline comments are stripped too\n");
    CHECK(cfg.seed == 5);
    CHECK(cfg.decoder == "bilinear");
    CHECK(cfg.base_lr == 0.5);
}

TEST_CASE("unknown keys and malformed values are rejected") {
    CHECK_THROWS_AS(RunConfig::parse_text("sneed = 1\n"), ValidationError);
    CHECK_THROWS_AS(RunConfig::parse_text("seed = twelve\n"), ValidationError);
    CHECK_THROWS_AS(RunConfig::parse_text("train.max_iters = 1.5\n"), ValidationError);
    CHECK_THROWS_AS(RunConfig::parse_text("train.base_lr = \n"), ValidationError);
    CHECK_THROWS_AS(RunConfig::parse_text("enc.widths = 1,2,3\n"), ValidationError);
    CHECK_THROWS_AS(RunConfig::parse_text("decoder = resnet\n"), ValidationError);
    CHECK_THROWS_AS(RunConfig::parse_text("enc.use_neck = maybe\n"), ValidationError);
    CHECK_THROWS_AS(RunConfig::parse_text("seed 5\n"), ValidationError); // no '='
}

TEST_CASE("derived model and train configs") {
    RunConfig cfg;
    cfg.decoder = "nrd";
    cfg.enc_widths = {4, 6, 8, 10, 12};
    cfg.controller_hidden = 32;
    cfg.nrd_guide_channels = 0;
    cfg.nrd_classes = 4;
    cfg.base_lr = 0.07;
    cfg.max_iters = 55;

    ModelConfig mc = cfg.model_config();
    CHECK(mc.decoder == DecoderKind::Nrd);
    CHECK(mc.enc.widths[4] == 12);
    CHECK(mc.enc.controller_hidden == 32);
    CHECK(mc.nrd.guide_channels == 0);
    CHECK(mc.nrd.classes == 4);

    TrainConfig tc = cfg.train_config();
    CHECK(tc.base_lr == 0.07);
    CHECK(tc.max_iters == 55);
    CHECK(tc.model.decoder == DecoderKind::Nrd);

    cfg.decoder = "bilinear";
    CHECK(cfg.model_config().decoder == DecoderKind::Bilinear);
    cfg.decoder = "duc";
    CHECK(cfg.model_config().decoder == DecoderKind::Duc);
}

TEST_CASE("double values survive a round trip at full precision") {
    RunConfig cfg;
    cfg.base_lr = 0.1 + 0.2;         // 0.30000000000000004
    cfg.weight_decay = 1.0 / 3.0;
    RunConfig back = RunConfig::parse_text(cfg.serialize());
    CHECK(back.base_lr == cfg.base_lr);
    CHECK(back.weight_decay == cfg.weight_decay);
}

TEST_CASE("config file io") {
    auto dir = std::filesystem::temp_directory_path() / "nrd_test_config";
    std::filesystem::create_directories(dir);
    std::string path = (dir / "run.cfg").string();
    RunConfig cfg;
    cfg.seed = 31;
    cfg.out_dir = "somewhere";
    write_text_file(path, cfg.serialize());
    CHECK(RunConfig::load(path) == cfg);
    CHECK_THROWS_AS(RunConfig::load((dir / "missing.cfg").string()), ValidationError);
}

TEST_CASE("synth spec round trip and validation") {
    SynthSpec spec;
    spec.seed = 404;
    spec.count = 33;
    spec.height = 64;
    spec.width = 96;
    spec.num_classes = 6;
    spec.min_shapes = 0;
    spec.max_shapes = 9;
    spec.noise_std = 0.125;
    SynthSpec back = parse_synth_spec(serialize_synth_spec(spec));
    CHECK(back.seed == spec.seed);
    CHECK(back.count == spec.count);
    CHECK(back.height == spec.height);
    CHECK(back.width == spec.width);
    CHECK(back.num_classes == spec.num_classes);
    CHECK(back.min_shapes == spec.min_shapes);
    CHECK(back.max_shapes == spec.max_shapes);
    CHECK(back.noise_std == spec.noise_std);

    CHECK_THROWS_AS(parse_synth_spec("volume = 11\n"), ValidationError);
    CHECK_THROWS_AS(parse_synth_spec("height = 31\n"), ValidationError);
}
