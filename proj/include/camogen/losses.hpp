#pragma once

#include <vector>

#include "camogen/autodiff.hpp"
#include "camogen/netarch.hpp"
#include "camogen/tensor.hpp"

namespace camogen::losses {

struct LossWeights {
    real lambda_fm = 10.0;
    real lambda_vgg = 10.0;
    real lambda_cam = 1.0;
    real lambda_g = 1.0;

    void validate() const;
    bool operator==(const LossWeights&) const = default;
};

// Per-step loss values. total = lambda_cam*cam + lambda_g*(gan_g +
// lambda_fm*fm) + lambda_vgg*vgg; gan_d is tracked alongside but belongs to
// the discriminator objective.
struct LossBundle {
    real gan_g = 0;
    real gan_d = 0;
    real fm = 0;
    real vgg = 0;
    real cam = 0;
    real total = 0;
};

constexpr real kCamProbFloor = 1e-7;

// --- graph-level losses ----------------------------------------------------

// mean over scales and pixels of -log sigmoid(real) - log(1-sigmoid(fake)),
// evaluated in logit space
ad::Var gan_loss_d(ad::Graph& g, const std::vector<ad::Var>& real_logits,
                   const std::vector<ad::Var>& fake_logits);

// non-saturating generator loss: mean -log sigmoid(fake). The saturating
// literal form log(1-sigmoid(fake)) is kept behind a flag.
ad::Var gan_loss_g(ad::Graph& g, const std::vector<ad::Var>& fake_logits,
                   bool saturating = false);

// sum over scales and taps of the per-element mean L1 distance between real
// and fake discriminator features
ad::Var feature_matching_loss(ad::Graph& g,
                              const std::vector<std::vector<ad::Var>>& real_feats,
                              const std::vector<std::vector<ad::Var>>& fake_feats);

// sum over layer_set of the feature-volume-normalized squared distance
// between frozen extractor features of xhat and x
ad::Var perceptual_loss(ad::Graph& g, const nn::Parameters& extractor,
                        const nn::ExtractorSpec& spec, ad::Var xhat, const Tensor& x,
                        const std::vector<int>& layer_set);

// -log(max(p_camouflage(xhat), kCamProbFloor)) under a frozen classifier;
// gradients reach xhat only
ad::Var camouflage_loss(ad::Graph& g, const nn::Parameters& classifier,
                        const nn::ClassifierSpec& spec, ad::Var xhat);

// weighted generator objective as a graph node (for backward)
ad::Var total_generator_loss_var(ad::Graph& g, ad::Var gan_g, ad::Var fm, ad::Var vgg,
                                 ad::Var cam, const LossWeights& w);

// assembles and validates the bundle; throws on a non-finite component
LossBundle total_generator_loss(real gan_g, real gan_d, real fm, real vgg, real cam,
                                const LossWeights& w);

// --- value-level variants (thin wrappers over a throwaway graph) -----------

real gan_loss_d(const std::vector<Tensor>& real_logits, const std::vector<Tensor>& fake_logits);
real gan_loss_g(const std::vector<Tensor>& fake_logits, bool saturating = false);
real feature_matching_loss(const std::vector<std::vector<Tensor>>& real_feats,
                           const std::vector<std::vector<Tensor>>& fake_feats);
real perceptual_loss(const nn::Parameters& extractor, const nn::ExtractorSpec& spec,
                     const Tensor& xhat, const Tensor& x, const std::vector<int>& layer_set);
real camouflage_loss(const nn::Parameters& classifier, const nn::ClassifierSpec& spec,
                     const Tensor& xhat);

// scalar form used by both the op and the tests
real camouflage_nll(real p_cam);

}  // namespace camogen::losses
