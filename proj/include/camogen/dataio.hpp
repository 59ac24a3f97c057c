#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "camogen/tensor.hpp"

namespace camogen::dataio {

enum class ClassTag { camouflage, normal };
enum class Split { train, test };

// One dataset item. image is RGB (3,H,W) in [-1,1]; mask is (1,H,W) with
// values exactly 0 or 1. Immutable after construction.
struct Sample {
    Tensor image;
    Tensor mask;
    std::string name;
    ClassTag class_tag = ClassTag::camouflage;
};

// Foreground kept verbatim, background replaced by seeded unit Gaussian noise.
struct CompositeInput {
    Tensor data;  // (3,H,W)
    uint64_t seed = 0;
    std::string source_name;
};

struct DatasetManifest {
    std::filesystem::path root;
    std::vector<std::pair<std::filesystem::path, std::filesystem::path>> pairs;  // (image, mask)
    Split split = Split::train;

    void save(const std::filesystem::path& file) const;
    static DatasetManifest load(const std::filesystem::path& file);
};

// Scans <root>/Image/*.{jpg,jpeg,png} and <root>/GT/*.png, pairs by basename
// and sorts lexicographically. Throws on a missing directory, an unpaired
// file on either side, or zero pairs.
DatasetManifest load_dataset(const std::filesystem::path& root, Split split);

// Decodes and resizes one image/mask pair: bilinear for the image (then
// mapped linearly to [-1,1]), nearest for the mask (then thresholded at 0.5).
// target_size must be divisible by downsample_factor.
Sample preprocess(const std::filesystem::path& image_file, const std::filesystem::path& mask_file,
                  int target_size, int downsample_factor = 8,
                  ClassTag tag = ClassTag::camouflage);

// fg = image*mask, bg = image*(1-mask); fg + bg reconstructs image exactly.
std::pair<Tensor, Tensor> split_foreground(const Sample& s);

// data = image*mask + z*(1-mask) with z ~ N(0,1) i.i.d., drawn in (c,h,w)
// row-major order from Rng(seed). Same seed gives bit-identical output.
CompositeInput add_noise(const Sample& s, uint64_t seed);

// true if the mask has no foreground or no background pixels
bool degenerate_mask(const Tensor& mask);

}  // namespace camogen::dataio
