#include "camogen/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace camogen::losses {

using ad::Graph;
using ad::Var;

void LossWeights::validate() const {
    if (lambda_fm < 0 || lambda_vgg < 0 || lambda_cam < 0 || lambda_g < 0)
        throw std::invalid_argument("LossWeights: weights must be non-negative");
}

Var gan_loss_d(Graph& g, const std::vector<Var>& real_logits,
               const std::vector<Var>& fake_logits) {
    if (real_logits.size() != fake_logits.size() || real_logits.empty())
        throw std::invalid_argument("gan_loss_d: scale count mismatch");
    std::vector<Var> terms;
    for (size_t s = 0; s < real_logits.size(); ++s) {
        terms.push_back(ad::mean_softplus_neg(g, real_logits[s]));  // -log sigmoid(r)
        terms.push_back(ad::mean_softplus(g, fake_logits[s]));      // -log(1-sigmoid(f))
    }
    std::vector<real> ws(terms.size(), 1.0 / static_cast<real>(real_logits.size()));
    return ad::weighted_sum(g, terms, ws);
}

Var gan_loss_g(Graph& g, const std::vector<Var>& fake_logits, bool saturating) {
    if (fake_logits.empty()) throw std::invalid_argument("gan_loss_g: no logit maps");
    std::vector<Var> terms;
    for (const auto& f : fake_logits)
        terms.push_back(saturating ? ad::scale(g, ad::mean_softplus(g, f), -1.0)
                                   : ad::mean_softplus_neg(g, f));
    std::vector<real> ws(terms.size(), 1.0 / static_cast<real>(terms.size()));
    return ad::weighted_sum(g, terms, ws);
}

Var feature_matching_loss(Graph& g, const std::vector<std::vector<Var>>& real_feats,
                          const std::vector<std::vector<Var>>& fake_feats) {
    if (real_feats.size() != fake_feats.size() || real_feats.empty())
        throw std::invalid_argument("feature_matching_loss: scale count mismatch");
    std::vector<Var> terms;
    for (size_t s = 0; s < real_feats.size(); ++s) {
        if (real_feats[s].size() != fake_feats[s].size())
            throw std::invalid_argument("feature_matching_loss: tap count mismatch");
        for (size_t i = 0; i < real_feats[s].size(); ++i)
            terms.push_back(ad::mean_abs_diff(g, real_feats[s][i], fake_feats[s][i]));
    }
    std::vector<real> ws(terms.size(), 1.0);
    return ad::weighted_sum(g, terms, ws);
}

Var perceptual_loss(Graph& g, const nn::Parameters& extractor, const nn::ExtractorSpec& spec,
                    Var xhat, const Tensor& x, const std::vector<int>& layer_set) {
    if (!xhat->value.same_shape(x))
        throw std::invalid_argument("perceptual_loss: shape mismatch");
    auto frozen = nn::BoundParams::bind(g, extractor, false);
    auto feats_hat = nn::extractor_features(g, frozen, spec, xhat, layer_set);
    auto feats_ref = nn::extractor_features(g, frozen, spec, g.constant(x), layer_set);
    std::vector<Var> terms;
    for (size_t j = 0; j < feats_hat.size(); ++j)
        terms.push_back(ad::mean_sq_diff(g, feats_hat[j], feats_ref[j]));
    std::vector<real> ws(terms.size(), 1.0);
    return ad::weighted_sum(g, terms, ws);
}

Var camouflage_loss(Graph& g, const nn::Parameters& classifier, const nn::ClassifierSpec& spec,
                    Var xhat) {
    auto frozen = nn::BoundParams::bind(g, classifier, false);
    Var logits = nn::classifier_logits(g, frozen, spec, xhat);
    return ad::class_nll(g, logits, 0, kCamProbFloor);
}

Var total_generator_loss_var(Graph& g, Var gan_g, Var fm, Var vgg, Var cam,
                             const LossWeights& w) {
    w.validate();
    return ad::weighted_sum(g, {cam, gan_g, fm, vgg},
                            {w.lambda_cam, w.lambda_g, w.lambda_g * w.lambda_fm, w.lambda_vgg});
}

LossBundle total_generator_loss(real gan_g, real gan_d, real fm, real vgg, real cam,
                                const LossWeights& w) {
    w.validate();
    for (real v : {gan_g, gan_d, fm, vgg, cam})
        if (!std::isfinite(v))
            throw std::domain_error("total_generator_loss: non-finite loss component");
    LossBundle b;
    b.gan_g = gan_g;
    b.gan_d = gan_d;
    b.fm = fm;
    b.vgg = vgg;
    b.cam = cam;
    b.total = w.lambda_cam * cam + w.lambda_g * (gan_g + w.lambda_fm * fm) + w.lambda_vgg * vgg;
    if (!std::isfinite(b.total))
        throw std::domain_error("total_generator_loss: non-finite total");
    return b;
}

// --- value-level wrappers ----------------------------------------------------

namespace {
std::vector<Var> as_consts(Graph& g, const std::vector<Tensor>& ts) {
    std::vector<Var> out;
    out.reserve(ts.size());
    for (const auto& t : ts) out.push_back(g.constant(t));
    return out;
}
}  // namespace

real gan_loss_d(const std::vector<Tensor>& real_logits, const std::vector<Tensor>& fake_logits) {
    Graph g(false);
    return gan_loss_d(g, as_consts(g, real_logits), as_consts(g, fake_logits))->value[0];
}

real gan_loss_g(const std::vector<Tensor>& fake_logits, bool saturating) {
    Graph g(false);
    return gan_loss_g(g, as_consts(g, fake_logits), saturating)->value[0];
}

real feature_matching_loss(const std::vector<std::vector<Tensor>>& real_feats,
                           const std::vector<std::vector<Tensor>>& fake_feats) {
    Graph g(false);
    std::vector<std::vector<Var>> r, f;
    for (const auto& s : real_feats) r.push_back(as_consts(g, s));
    for (const auto& s : fake_feats) f.push_back(as_consts(g, s));
    return feature_matching_loss(g, r, f)->value[0];
}

real perceptual_loss(const nn::Parameters& extractor, const nn::ExtractorSpec& spec,
                     const Tensor& xhat, const Tensor& x, const std::vector<int>& layer_set) {
    Graph g(false);
    return perceptual_loss(g, extractor, spec, g.constant(xhat), x, layer_set)->value[0];
}

real camouflage_loss(const nn::Parameters& classifier, const nn::ClassifierSpec& spec,
                     const Tensor& xhat) {
    Graph g(false);
    return camouflage_loss(g, classifier, spec, g.constant(xhat))->value[0];
}

real camouflage_nll(real p_cam) { return -std::log(std::max(p_cam, kCamProbFloor)); }

}  // namespace camogen::losses
