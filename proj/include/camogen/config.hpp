#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "camogen/losses.hpp"
#include "camogen/netarch.hpp"
#include "camogen/trainloop.hpp"

namespace camogen::config {

// Effective run configuration: training hyperparameters, loss weights and the
// architecture presets derived from them. desk_mode swaps in the small CPU
// presets before the explicit keys are applied.
struct RunConfig {
    train::TrainConfig train;
    losses::LossWeights weights;
    nn::GeneratorSpec generator;
    nn::DiscriminatorSpec discriminator;
    nn::ClassifierSpec classifier;
    nn::ExtractorSpec extractor;
    int per_sample = 1;

    nlohmann::json to_json() const;
    bool operator==(const RunConfig&) const = default;

    // hash of the canonical JSON dump
    std::string hash() const;
};

// Accepted config-file keys (also the override keys):
//   image_size, batch_size, lr, total_epochs, constant_epochs, seed,
//   lambda_fm, lambda_vgg, lambda_cam, lambda_g, n_scales, base_width,
//   n_res_blocks, per_sample, desk_mode, adam_beta1, adam_beta2
// Unknown keys and ill-typed values are rejected.
RunConfig load_config(const std::filesystem::path& file,
                      const std::vector<std::string>& overrides);

// Same resolution order (defaults, then file keys, then overrides) from an
// already-parsed object; `file` variant reads JSON from disk. An empty path
// applies defaults + overrides only.
RunConfig resolve_config(const nlohmann::json& file_values,
                         const std::vector<std::string>& overrides);

// Writes the complete effective configuration; reloading the echo with no
// overrides reproduces the RunConfig exactly.
void write_config_echo(const std::filesystem::path& file, const RunConfig& cfg);

}  // namespace camogen::config
