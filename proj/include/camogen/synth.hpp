#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "camogen/dataio.hpp"
#include "camogen/netarch.hpp"
#include "camogen/rng.hpp"

namespace camogen::synth {

struct SynthesisEntry {
    std::string source_name;
    uint64_t seed = 0;
    std::string output_image_path;
    std::string output_mask_path;
    std::string checkpoint_hash;
};

struct SynthesisManifest {
    std::vector<SynthesisEntry> entries;  // ordered by (source_name, replicate)
    std::string created_at;               // ISO-8601 UTC
    nlohmann::json generator_config;
    uint64_t base_seed = 0;
    int per_sample = 0;

    void save(const std::filesystem::path& file) const;
    static SynthesisManifest load(const std::filesystem::path& file);
};

// Seed for replicate k of a source, derived from the base seed with the
// documented splitmix64/FNV chain so it does not depend on iteration order:
//   splitmix64(splitmix64(base ^ fnv1a64(source_name)) ^ k)
inline uint64_t entry_seed(uint64_t base_seed, const std::string& source_name, int replicate) {
    return splitmix64(splitmix64(base_seed ^ fnv1a64(source_name)) ^
                      static_cast<uint64_t>(replicate));
}

// Runs the generator on the noise composite and hard-composites the source
// foreground back over the output, so the mask stays exactly valid. Returns
// (image, mask); the mask is the input mask unchanged.
std::pair<Tensor, Tensor> synthesize_sample(const nn::Parameters& gen,
                                            const nn::GeneratorSpec& spec,
                                            const dataio::Sample& s, uint64_t seed);

// Writes |data| * per_sample synthesized pairs under out/Image and out/GT as
// <source>_syn<k>.png plus out/manifest.json. `out` must be absent or empty;
// partial outputs are removed on failure. Rerunning with the same base seed
// reproduces byte-identical image and mask files.
SynthesisManifest expand_dataset(const nn::Parameters& gen, const nn::GeneratorSpec& spec,
                                 const dataio::DatasetManifest& data, int per_sample,
                                 uint64_t base_seed, const std::filesystem::path& out,
                                 int image_size, const std::string& checkpoint_hash = "");

}  // namespace camogen::synth
