#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "camogen/dataio.hpp"
#include "camogen/losses.hpp"
#include "camogen/netarch.hpp"
#include "camogen/rng.hpp"
#include "camogen/tensor.hpp"

namespace camogen::train {

struct TrainConfig {
    real lr = 2e-4;
    int total_epochs = 400;
    int constant_epochs = 100;
    int batch_size = 16;
    int image_size = 512;
    uint64_t seed = 0;
    real adam_beta1 = 0.5;
    real adam_beta2 = 0.999;
    bool desk_mode = false;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

// Constant for the first constant_epochs, then linear to exactly zero at
// total_epochs. Throws if epoch is outside [0, total_epochs].
real lr_schedule(int epoch, const TrainConfig& cfg);

// Adam with bias correction. State (first/second moments and the step
// counter) serializes through a Parameters set for checkpointing.
class Adam {
public:
    Adam(real beta1, real beta2, real eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(nn::Parameters& params, const std::map<std::string, Tensor>& grads, real lr);

    nn::Parameters state() const;
    static Adam from_state(const nn::Parameters& state, real beta1, real beta2,
                           real eps = 1e-8);
    int steps_taken() const { return t_; }

private:
    real beta1_, beta2_, eps_;
    int t_ = 0;
    std::map<std::string, Tensor> m_, v_;
};

// Per-sample noise seed for a training step, derived from the run seed via
// the documented splitmix64 chain.
inline uint64_t noise_seed(uint64_t run_seed, int step, int sample_index) {
    uint64_t s = splitmix64(run_seed ^ static_cast<uint64_t>(step));
    return splitmix64(s ^ static_cast<uint64_t>(sample_index));
}

// --- classifier pretraining -----------------------------------------------

struct ClassifierTrainOptions {
    std::filesystem::path out_dir;  // empty: no checkpoint/log output
    int max_steps = -1;
    int patience = 20;  // epochs without accuracy improvement before stopping
};

struct ClassifierTrainResult {
    nn::Parameters best_params;
    real best_accuracy = 0;
    int steps_run = 0;
    std::vector<real> epoch_accuracy;
    std::filesystem::path checkpoint_dir;
};

// Balanced-batch cross-entropy training of the camouflage/normal classifier.
// Keeps the best-accuracy snapshot; deterministic given cfg.seed.
ClassifierTrainResult train_classifier(const dataio::DatasetManifest& camo,
                                       const dataio::DatasetManifest& normal,
                                       const nn::ClassifierSpec& spec, const TrainConfig& cfg,
                                       const ClassifierTrainOptions& opt = {});

// in-memory variant used by tests and the desk experiment
ClassifierTrainResult train_classifier_samples(const std::vector<dataio::Sample>& camo,
                                               const std::vector<dataio::Sample>& normal,
                                               const nn::ClassifierSpec& spec,
                                               const TrainConfig& cfg,
                                               const ClassifierTrainOptions& opt = {});

// --- adversarial training ----------------------------------------------------

struct FrozenNets {
    nn::Parameters classifier;
    nn::ClassifierSpec classifier_spec;
    nn::Parameters extractor;
    nn::ExtractorSpec extractor_spec;
    std::vector<int> perceptual_layers = {0, 1, 2, 3};
};

struct StepRecord {
    int step = 0;
    int epoch = 0;
    real lr = 0;
    losses::LossBundle bundle;
    real recon_bg_l1 = 0;  // masked-background L1 between raw output and source
};

struct GanTrainOptions {
    std::filesystem::path out_dir;  // run dir; checkpoints/ and logs/ created below
    int max_steps = -1;
    int checkpoint_every = 1;  // epochs
    std::filesystem::path resume_from;
    std::string config_hash;
    std::function<void(const StepRecord&)> on_step;
};

struct GanTrainResult {
    nn::Parameters generator;
    nn::Parameters discriminator;
    int last_epoch = -1;
    std::vector<StepRecord> records;
    std::filesystem::path last_checkpoint;
};

// Alternating optimization: per step the discriminator updates on
// (foreground, source) vs (foreground, hard-composited output), then the
// generator updates on the weighted objective with the classifier and
// extractor frozen. Losses stream to logs/steps.jsonl; a checkpoint lands
// under checkpoints/ every checkpoint_every epochs. A non-finite loss aborts
// after dumping a diagnostic checkpoint.
GanTrainResult train_gan(const dataio::DatasetManifest& data, const FrozenNets& frozen,
                         const nn::GeneratorSpec& gen_spec,
                         const nn::DiscriminatorSpec& dis_spec, const TrainConfig& cfg,
                         const losses::LossWeights& weights, const GanTrainOptions& opt);

// in-memory variant; samples must already match cfg.image_size
GanTrainResult train_gan_samples(const std::vector<dataio::Sample>& samples,
                                 const FrozenNets& frozen, const nn::GeneratorSpec& gen_spec,
                                 const nn::DiscriminatorSpec& dis_spec, const TrainConfig& cfg,
                                 const losses::LossWeights& weights,
                                 const GanTrainOptions& opt);

}  // namespace camogen::train
