#pragma once

#include <string>
#include <vector>

#include "nrd/io.h"
#include "nrd/tensor.h"

namespace nrd {

// Synthetic shape-segmentation data: class 0 background, classes 1..N-1 are
// circles, axis-aligned rectangles, and triangles, analytically rasterized
// (no anti-aliasing) so labels are pixel-exact.

struct SynthSpec {
    std::uint64_t seed = 0;
    int count = 100;
    int height = 64;
    int width = 64;
    int num_classes = 4;
    int min_shapes = 2;
    int max_shapes = 5;
    double noise_std = 0.05;

    void validate() const {
        check_valid(count >= 0, "count must be >= 0");
        check_valid(height % 32 == 0 && width % 32 == 0 && height > 0 && width > 0,
                    "extents must be positive and divisible by 32");
        check_valid(num_classes >= 2 && num_classes <= 20, "num_classes must be in [2, 20]");
        check_valid(min_shapes >= 0 && max_shapes >= min_shapes, "bad shapes-per-image range");
        check_valid(noise_std >= 0.0, "noise_std must be >= 0");
    }
};

// Bundle layout: img/%06d [H,W,3] real32 in [0,1], lbl/%06d [H,W] real32
// class ids, split/train and split/val holding sample indices.
NamedTensorBundle gen_synthetic(const SynthSpec& spec);

struct Dataset {
    std::vector<TensorF> images;
    std::vector<LabelMap> labels;

    std::size_t size() const { return images.size(); }
};

enum class Split { All, Train, Val };

Dataset dataset_from_bundle(const NamedTensorBundle& bundle, Split split);
Dataset load_dataset(const std::string& path, Split split);

LabelMap label_map_from_tensor(const TensorF& t);
TensorF tensor_from_label_map(const LabelMap& labels);

} // namespace nrd
