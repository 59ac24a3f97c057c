#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "camogen/autodiff.hpp"
#include "camogen/tensor.hpp"

namespace camogen::nn {

// Encoder/res-bottleneck/decoder image-to-image generator:
//   reflect-pad + 7x7 conv to base_width, n_downsample stride-2 3x3 convs
//   (width doubling), n_res_blocks residual blocks, a mirrored stack of
//   stride-2 transposed 3x3 convs, reflect-pad + 7x7 conv to out_channels,
//   tanh. Instance norm + ReLU throughout. Output spatial size equals input;
//   input must be divisible by 2^n_downsample.
struct GeneratorSpec {
    int base_width = 64;
    int n_downsample = 3;
    int n_res_blocks = 9;
    int in_channels = 3;
    int out_channels = 3;

    static GeneratorSpec desk() { return {16, 3, 4, 3, 3}; }
    int downsample_factor() const { return 1 << n_downsample; }
    void validate() const;
    bool operator==(const GeneratorSpec&) const = default;
};

// Patch discriminator applied to an average-pooled pyramid. Each scale is an
// independent trunk of layers_per_scale 4x4 convs (stride 2 except the last,
// widths base_width*{1,2,4,8,...} capped at 8x) with leaky ReLU 0.2 and
// instance norm after every block but the first, then a 4x4 stride-1 logit
// conv. The per-scale feature taps are the outputs of every conv block plus
// the logit map: T = layers_per_scale + 1.
struct DiscriminatorSpec {
    int n_scales = 3;
    int layers_per_scale = 4;
    int base_width = 64;
    int in_channels = 6;

    static DiscriminatorSpec desk() { return {2, 4, 16, 6}; }
    int taps_per_scale() const { return layers_per_scale + 1; }
    void validate() const;
    bool operator==(const DiscriminatorSpec&) const = default;
};

// Same trunk family as the discriminator, but consuming a plain image and
// ending in global average pooling + a 2-way linear head per scale; the
// per-scale logits are averaged before softmax. Class 0 is "camouflage".
struct ClassifierSpec {
    int n_scales = 2;
    int layers_per_scale = 4;
    int base_width = 64;
    int in_channels = 3;

    static ClassifierSpec desk() { return {2, 4, 16, 3}; }
    void validate() const;
    bool operator==(const ClassifierSpec&) const = default;
};

// Frozen feature network for the perceptual distance: stages of 3x3 convs
// (ReLU) followed by 2x2 max pooling, widths doubling per stage. Feature
// taps are the pool outputs, indexed from 0.
struct ExtractorSpec {
    int base_width = 64;
    std::vector<int> convs_per_stage = {2, 2, 3, 3};
    int in_channels = 3;

    static ExtractorSpec desk() { return {8, {1, 1, 2, 2}, 3}; }
    int n_stages() const { return static_cast<int>(convs_per_stage.size()); }
    void validate() const;
    bool operator==(const ExtractorSpec&) const = default;
};

void to_json(nlohmann::json& j, const GeneratorSpec& s);
void from_json(const nlohmann::json& j, GeneratorSpec& s);
void to_json(nlohmann::json& j, const DiscriminatorSpec& s);
void from_json(const nlohmann::json& j, DiscriminatorSpec& s);
void to_json(nlohmann::json& j, const ClassifierSpec& s);
void from_json(const nlohmann::json& j, ClassifierSpec& s);
void to_json(nlohmann::json& j, const ExtractorSpec& s);
void from_json(const nlohmann::json& j, ExtractorSpec& s);

// Named parameter set. Iteration order is lexicographic by name, which fixes
// the serialized layout.
class Parameters {
public:
    Tensor& add(const std::string& name, Tensor t);
    const Tensor& get(const std::string& name) const;
    Tensor& get(const std::string& name);
    bool has(const std::string& name) const { return tensors_.count(name) != 0; }
    size_t size() const { return tensors_.size(); }
    int64_t total_count() const;
    Parameters clone() const;
    bool equals(const Parameters& o) const;

    auto begin() { return tensors_.begin(); }
    auto end() { return tensors_.end(); }
    auto begin() const { return tensors_.begin(); }
    auto end() const { return tensors_.end(); }

private:
    std::map<std::string, Tensor> tensors_;
};

Parameters build_generator(const GeneratorSpec& spec, uint64_t seed);
Parameters build_discriminator(const DiscriminatorSpec& spec, uint64_t seed);
Parameters build_classifier(const ClassifierSpec& spec, uint64_t seed);
Parameters build_extractor(const ExtractorSpec& spec, uint64_t seed);

// Parameters bound into a graph, trainable or frozen.
struct BoundParams {
    std::map<std::string, ad::Var> vars;

    static BoundParams bind(ad::Graph& g, const Parameters& p, bool trainable);
    const ad::Var& at(const std::string& name) const;
    // gradient per parameter; zero tensors where nothing accumulated
    std::map<std::string, Tensor> grads() const;
};

ad::Var generator_forward(ad::Graph& g, const BoundParams& p, const GeneratorSpec& spec,
                          ad::Var x);

struct ScaleOutput {
    ad::Var logit;
    std::vector<ad::Var> features;  // shallow -> deep, logit map last
};

std::vector<ScaleOutput> discriminator_forward(ad::Graph& g, const BoundParams& p,
                                               const DiscriminatorSpec& spec, ad::Var fg,
                                               ad::Var candidate);

ad::Var classifier_logits(ad::Graph& g, const BoundParams& p, const ClassifierSpec& spec,
                          ad::Var image);

std::vector<ad::Var> extractor_features(ad::Graph& g, const BoundParams& p,
                                        const ExtractorSpec& spec, ad::Var x,
                                        const std::vector<int>& layer_set);

// --- value-level conveniences (no-grad forwards) ------------------------

Tensor generator_forward(const Parameters& p, const GeneratorSpec& spec, const Tensor& x);

struct ScaleOutputValues {
    Tensor logit;
    std::vector<Tensor> features;
};
std::vector<ScaleOutputValues> discriminator_forward(const Parameters& p,
                                                     const DiscriminatorSpec& spec,
                                                     const Tensor& fg, const Tensor& candidate);

// (p_camouflage, p_normal), softmax over scale-averaged logits
std::array<real, 2> classifier_forward(const Parameters& p, const ClassifierSpec& spec,
                                       const Tensor& image);

std::array<real, 2> softmax2(real z0, real z1);

// --- serialization -------------------------------------------------------
//
// Parameter blob layout (little-endian):
//   magic "CGPB", u32 version = 1, u64 tensor count, then per tensor in
//   lexicographic name order: u32 name length, name bytes, u8 dtype (0 =
//   float64), u32 rank, u64 dims[rank], raw float64 data.

std::vector<unsigned char> serialize_parameters(const Parameters& p);
Parameters deserialize_parameters(const std::vector<unsigned char>& bytes);
void save_parameter_blob(const std::filesystem::path& file, const Parameters& p);
Parameters load_parameter_blob(const std::filesystem::path& file);

// 64-bit FNV-1a of the serialized blob, as 16 hex digits
std::string content_hash_hex(const Parameters& p);

// --- checkpoints ----------------------------------------------------------
//
// A checkpoint is a directory holding meta.json plus one .bin parameter blob
// per named part. meta.json carries format version, kind, the architecture
// specs, epoch, seed, config hash, a metric snapshot and per-blob content
// hashes. Writes go to a temp directory that is renamed into place.

struct CheckpointMeta {
    int format_version = 1;
    std::string kind;
    nlohmann::json specs = nlohmann::json::object();
    int epoch = 0;
    uint64_t seed = 0;
    std::string config_hash;
    nlohmann::json metrics = nlohmann::json::object();
    std::map<std::string, std::string> content_hashes;

    nlohmann::json to_json() const;
    static CheckpointMeta from_json(const nlohmann::json& j);
};

void save_checkpoint(const std::filesystem::path& dir,
                     const std::map<std::string, Parameters>& parts, CheckpointMeta meta);

std::pair<std::map<std::string, Parameters>, CheckpointMeta> load_checkpoint(
    const std::filesystem::path& dir);

}  // namespace camogen::nn
