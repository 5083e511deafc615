#include "nrd/config.h"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace nrd {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    errno = 0;
    char* end = nullptr;
    unsigned long long x = std::strtoull(v.c_str(), &end, 10);
    check_valid(errno == 0 && end && *end == '\0' && !v.empty(),
                "bad unsigned integer for key '" + key + "': " + v);
    return x;
}

int parse_int(const std::string& key, const std::string& v) {
    errno = 0;
    char* end = nullptr;
    long x = std::strtol(v.c_str(), &end, 10);
    check_valid(errno == 0 && end && *end == '\0' && !v.empty(),
                "bad integer for key '" + key + "': " + v);
    check_valid(x >= -2147483647L && x <= 2147483647L, "integer out of range for key '" + key + "'");
    return static_cast<int>(x);
}

double parse_double(const std::string& key, const std::string& v) {
    errno = 0;
    char* end = nullptr;
    double x = std::strtod(v.c_str(), &end);
    check_valid(errno == 0 && end && *end == '\0' && !v.empty(),
                "bad number for key '" + key + "': " + v);
    return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "0" || v == "false") return false;
    if (v == "1" || v == "true") return true;
    throw ValidationError("bad boolean for key '" + key + "': " + v + " (use 0/1/true/false)");
}

std::string fmt_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

struct Handler {
    const char* key;
    std::function<void(RunConfig&, const std::string&)> parse;
    std::function<std::string(const RunConfig&)> print;
};

const std::vector<Handler>& handlers() {
    static const std::vector<Handler> table = {
        {"seed", [](RunConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); },
         [](const RunConfig& c) { return std::to_string(c.seed); }},
        {"decoder",
         [](RunConfig& c, const std::string& v) {
             check_valid(v == "nrd" || v == "bilinear" || v == "duc",
                         "decoder must be nrd, bilinear, or duc");
             c.decoder = v;
         },
         [](const RunConfig& c) { return c.decoder; }},
        {"enc.widths",
         [](RunConfig& c, const std::string& v) {
             std::array<int, 5> widths{};
             std::stringstream ss(v);
             std::string part;
             int n = 0;
             while (std::getline(ss, part, ',')) {
                 check_valid(n < 5, "enc.widths needs exactly 5 values");
                 widths[static_cast<std::size_t>(n++)] = parse_int("enc.widths", trim(part));
             }
             check_valid(n == 5, "enc.widths needs exactly 5 values");
             c.enc_widths = widths;
         },
         [](const RunConfig& c) {
             std::string out;
             for (int i = 0; i < 5; ++i) {
                 if (i) out += ",";
                 out += std::to_string(c.enc_widths[static_cast<std::size_t>(i)]);
             }
             return out;
         }},
        {"enc.controller_hidden",
         [](RunConfig& c, const std::string& v) {
             c.controller_hidden = parse_int("enc.controller_hidden", v);
         },
         [](const RunConfig& c) { return std::to_string(c.controller_hidden); }},
        {"enc.use_neck",
         [](RunConfig& c, const std::string& v) { c.use_neck = parse_bool("enc.use_neck", v); },
         [](const RunConfig& c) { return std::string(c.use_neck ? "1" : "0"); }},
        {"nrd.s", [](RunConfig& c, const std::string& v) { c.nrd_s = parse_int("nrd.s", v); },
         [](const RunConfig& c) { return std::to_string(c.nrd_s); }},
        {"nrd.use_coords",
         [](RunConfig& c, const std::string& v) {
             c.nrd_use_coords = parse_bool("nrd.use_coords", v);
         },
         [](const RunConfig& c) { return std::string(c.nrd_use_coords ? "1" : "0"); }},
        {"nrd.guide_channels",
         [](RunConfig& c, const std::string& v) {
             c.nrd_guide_channels = parse_int("nrd.guide_channels", v);
         },
         [](const RunConfig& c) { return std::to_string(c.nrd_guide_channels); }},
        {"nrd.hidden",
         [](RunConfig& c, const std::string& v) { c.nrd_hidden = parse_int("nrd.hidden", v); },
         [](const RunConfig& c) { return std::to_string(c.nrd_hidden); }},
        {"nrd.classes",
         [](RunConfig& c, const std::string& v) { c.nrd_classes = parse_int("nrd.classes", v); },
         [](const RunConfig& c) { return std::to_string(c.nrd_classes); }},
        {"train.base_lr",
         [](RunConfig& c, const std::string& v) { c.base_lr = parse_double("train.base_lr", v); },
         [](const RunConfig& c) { return fmt_double(c.base_lr); }},
        {"train.poly_power",
         [](RunConfig& c, const std::string& v) {
             c.poly_power = parse_double("train.poly_power", v);
         },
         [](const RunConfig& c) { return fmt_double(c.poly_power); }},
        {"train.weight_decay",
         [](RunConfig& c, const std::string& v) {
             c.weight_decay = parse_double("train.weight_decay", v);
         },
         [](const RunConfig& c) { return fmt_double(c.weight_decay); }},
        {"train.momentum",
         [](RunConfig& c, const std::string& v) { c.momentum = parse_double("train.momentum", v); },
         [](const RunConfig& c) { return fmt_double(c.momentum); }},
        {"train.max_iters",
         [](RunConfig& c, const std::string& v) { c.max_iters = parse_int("train.max_iters", v); },
         [](const RunConfig& c) { return std::to_string(c.max_iters); }},
        {"train.batch_size",
         [](RunConfig& c, const std::string& v) {
             c.batch_size = parse_int("train.batch_size", v);
         },
         [](const RunConfig& c) { return std::to_string(c.batch_size); }},
        {"train.crop",
         [](RunConfig& c, const std::string& v) { c.crop = parse_int("train.crop", v); },
         [](const RunConfig& c) { return std::to_string(c.crop); }},
        {"train.checkpoint_interval",
         [](RunConfig& c, const std::string& v) {
             c.checkpoint_interval = parse_int("train.checkpoint_interval", v);
         },
         [](const RunConfig& c) { return std::to_string(c.checkpoint_interval); }},
        {"train.val_interval",
         [](RunConfig& c, const std::string& v) {
             c.val_interval = parse_int("train.val_interval", v);
         },
         [](const RunConfig& c) { return std::to_string(c.val_interval); }},
        {"eval.trimap_width",
         [](RunConfig& c, const std::string& v) {
             c.trimap_width = parse_int("eval.trimap_width", v);
         },
         [](const RunConfig& c) { return std::to_string(c.trimap_width); }},
        {"data", [](RunConfig& c, const std::string& v) { c.data = v; },
         [](const RunConfig& c) { return c.data; }},
        {"val_data", [](RunConfig& c, const std::string& v) { c.val_data = v; },
         [](const RunConfig& c) { return c.val_data; }},
        {"out_dir", [](RunConfig& c, const std::string& v) { c.out_dir = v; },
         [](const RunConfig& c) { return c.out_dir; }},
    };
    return table;
}

// Shared line scanner for both config flavors.
void scan_lines(const std::string& text,
                const std::function<void(const std::string&, const std::string&)>& on_kv) {
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        check_valid(eq != std::string::npos,
                    "line " + std::to_string(lineno) + " is not key=value: " + line);
        on_kv(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

} // namespace

ModelConfig RunConfig::model_config() const {
    ModelConfig cfg;
    cfg.enc.widths = enc_widths;
    cfg.enc.controller_hidden = controller_hidden;
    cfg.enc.use_neck = use_neck;
    cfg.nrd.s = nrd_s;
    cfg.nrd.use_coords = nrd_use_coords;
    cfg.nrd.guide_channels = nrd_guide_channels;
    cfg.nrd.hidden = nrd_hidden;
    cfg.nrd.classes = nrd_classes;
    if (decoder == "nrd") cfg.decoder = DecoderKind::Nrd;
    else if (decoder == "bilinear") cfg.decoder = DecoderKind::Bilinear;
    else if (decoder == "duc") cfg.decoder = DecoderKind::Duc;
    else throw ValidationError("decoder must be nrd, bilinear, or duc");
    cfg.validate();
    return cfg;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig cfg;
    cfg.model = model_config();
    cfg.base_lr = base_lr;
    cfg.poly_power = poly_power;
    cfg.weight_decay = weight_decay;
    cfg.momentum = momentum;
    cfg.max_iters = max_iters;
    cfg.batch_size = batch_size;
    cfg.crop = crop;
    cfg.seed = seed;
    cfg.checkpoint_interval = checkpoint_interval;
    cfg.val_interval = val_interval;
    cfg.validate();
    return cfg;
}

std::string RunConfig::serialize() const {
    std::string out;
    for (const Handler& h : handlers()) {
        out += h.key;
        out += " = ";
        out += h.print(*this);
        out += "\n";
    }
    return out;
}

RunConfig RunConfig::parse_text(const std::string& text) {
    RunConfig cfg;
    scan_lines(text, [&cfg](const std::string& key, const std::string& value) {
        for (const Handler& h : handlers()) {
            if (key == h.key) {
                h.parse(cfg, value);
                return;
            }
        }
        throw ValidationError("unknown config key: " + key);
    });
    return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
    return parse_text(read_text_file(path));
}

SynthSpec parse_synth_spec(const std::string& text) {
    SynthSpec spec;
    scan_lines(text, [&spec](const std::string& key, const std::string& value) {
        if (key == "seed") spec.seed = parse_u64(key, value);
        else if (key == "count") spec.count = parse_int(key, value);
        else if (key == "height") spec.height = parse_int(key, value);
        else if (key == "width") spec.width = parse_int(key, value);
        else if (key == "num_classes") spec.num_classes = parse_int(key, value);
        else if (key == "min_shapes") spec.min_shapes = parse_int(key, value);
        else if (key == "max_shapes") spec.max_shapes = parse_int(key, value);
        else if (key == "noise_std") spec.noise_std = parse_double(key, value);
        else throw ValidationError("unknown spec key: " + key);
    });
    spec.validate();
    return spec;
}

SynthSpec load_synth_spec(const std::string& path) {
    return parse_synth_spec(read_text_file(path));
}

std::string serialize_synth_spec(const SynthSpec& spec) {
    std::string out;
    out += "seed = " + std::to_string(spec.seed) + "\n";
    out += "count = " + std::to_string(spec.count) + "\n";
    out += "height = " + std::to_string(spec.height) + "\n";
    out += "width = " + std::to_string(spec.width) + "\n";
    out += "num_classes = " + std::to_string(spec.num_classes) + "\n";
    out += "min_shapes = " + std::to_string(spec.min_shapes) + "\n";
    out += "max_shapes = " + std::to_string(spec.max_shapes) + "\n";
    out += "noise_std = " + fmt_double(spec.noise_std) + "\n";
    return out;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check_valid(in.good(), "cannot open file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    check_valid(out.good(), "cannot open file for writing: " + path);
    out << text;
    check_valid(out.good(), "write failed: " + path);
}

} // namespace nrd
