#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "camogen/losses.hpp"
#include "testutil.hpp"

using namespace camogen;
using namespace camogen::losses;
using ad::Graph;
using ad::Var;
using testutil::gradcheck;
using testutil::random_tensor;

namespace {

real sigmoid_ref(real x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("gan_loss_d closed forms and oracle") {
    SUBCASE("zero logits give 2 ln 2 for any scale count") {
        for (int scales : {1, 2, 3}) {
            std::vector<Tensor> r(scales, Tensor::zeros({1, 3, 3}));
            std::vector<Tensor> f(scales, Tensor::zeros({1, 2, 2}));
            CHECK(gan_loss_d(r, f) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-9));
        }
    }
    SUBCASE("a confident discriminator drives the loss to zero") {
        std::vector<Tensor> r = {Tensor::full({1, 2, 2}, 60.0)};
        std::vector<Tensor> f = {Tensor::full({1, 2, 2}, -60.0)};
        CHECK(gan_loss_d(r, f) < 1e-12);
        CHECK(gan_loss_d(r, f) >= 0.0);
    }
    SUBCASE("random 2x2 maps match the per-element formula") {
        Rng rng(1);
        std::vector<Tensor> r = {random_tensor(rng, {1, 2, 2}, -3, 3),
                                 random_tensor(rng, {1, 2, 2}, -3, 3)};
        std::vector<Tensor> f = {random_tensor(rng, {1, 2, 2}, -3, 3),
                                 random_tensor(rng, {1, 2, 2}, -3, 3)};
        real expect = 0;
        for (size_t s = 0; s < r.size(); ++s) {
            real tr = 0, tf = 0;
            for (int i = 0; i < 4; ++i) {
                tr += -std::log(sigmoid_ref(r[s][i]));
                tf += -std::log(1.0 - sigmoid_ref(f[s][i]));
            }
            expect += (tr / 4 + tf / 4) / static_cast<real>(r.size());
        }
        CHECK(gan_loss_d(r, f) == doctest::Approx(expect).epsilon(1e-9));
    }
    SUBCASE("scale-count mismatch is rejected") {
        std::vector<Tensor> r = {Tensor::zeros({1, 2, 2})};
        std::vector<Tensor> f;
        CHECK_THROWS_AS(gan_loss_d(r, f), std::invalid_argument);
    }
}

TEST_CASE("gan_loss_g closed forms, limit and oracle") {
    std::vector<Tensor> zero = {Tensor::zeros({1, 2, 2})};
    CHECK(gan_loss_g(zero) == doctest::Approx(std::log(2.0)).epsilon(1e-9));

    std::vector<Tensor> big = {Tensor::full({1, 2, 2}, 80.0)};
    CHECK(gan_loss_g(big) < 1e-12);
    CHECK(gan_loss_g(big) >= 0.0);

    Rng rng(2);
    std::vector<Tensor> mixed = {random_tensor(rng, {1, 3, 2}, -4, 4)};
    real expect = 0;
    for (int i = 0; i < 6; ++i) expect += -std::log(sigmoid_ref(mixed[0][i])) / 6.0;
    CHECK(gan_loss_g(mixed) == doctest::Approx(expect).epsilon(1e-9));

    SUBCASE("saturating literal form is the negated fake term") {
        real expect_sat = 0;
        for (int i = 0; i < 6; ++i) expect_sat += std::log(1.0 - sigmoid_ref(mixed[0][i])) / 6.0;
        CHECK(gan_loss_g(mixed, true) == doctest::Approx(expect_sat).epsilon(1e-9));
    }
}

TEST_CASE("feature_matching_loss identities and oracle") {
    Rng rng(3);
    std::vector<std::vector<Tensor>> feats(1);
    for (int i = 0; i < 5; ++i) feats[0].push_back(random_tensor(rng, {2, 3, 3}));

    SUBCASE("identical features give exactly zero") {
        CHECK(feature_matching_loss(feats, feats) == 0.0);
    }
    SUBCASE("shift by one gives the tap count") {
        auto shifted = feats;
        for (auto& t : shifted[0]) {
            t = t.clone();
            for (int64_t i = 0; i < t.numel(); ++i) t[i] += 1.0;
        }
        CHECK(feature_matching_loss(feats, shifted) == doctest::Approx(5.0).epsilon(1e-12));
    }
    SUBCASE("random features match the direct summation") {
        std::vector<std::vector<Tensor>> fake(1);
        for (int i = 0; i < 5; ++i) fake[0].push_back(random_tensor(rng, {2, 3, 3}));
        real expect = 0;
        for (int i = 0; i < 5; ++i) {
            real s = 0;
            for (int64_t j = 0; j < feats[0][static_cast<size_t>(i)].numel(); ++j)
                s += std::abs(feats[0][static_cast<size_t>(i)][j] -
                              fake[0][static_cast<size_t>(i)][j]);
            expect += s / static_cast<real>(feats[0][static_cast<size_t>(i)].numel());
        }
        CHECK(feature_matching_loss(feats, fake) == doctest::Approx(expect).epsilon(1e-12));
    }
    SUBCASE("tap shape mismatch is rejected") {
        auto bad = feats;
        bad[0][2] = Tensor::zeros({2, 4, 4});
        CHECK_THROWS_AS(feature_matching_loss(feats, bad), std::invalid_argument);
    }
}

TEST_CASE("perceptual_loss identities and hand-summed oracle") {
    nn::ExtractorSpec spec{4, {1, 1}, 3};
    nn::Parameters ext = nn::build_extractor(spec, 11);
    Rng rng(4);
    Tensor x = random_tensor(rng, {3, 8, 8});
    std::vector<int> layers = {0, 1};

    SUBCASE("identical inputs give zero") {
        CHECK(perceptual_loss(ext, spec, x, x, layers) == 0.0);
    }
    SUBCASE("volume normalization keeps constant per-position differences invariant") {
        // formula-level check of the 1/(C*H*W) factor
        for (int size : {4, 8}) {
            Graph g(false);
            Tensor a = Tensor::full({2, size, size}, 0.7);
            Tensor b = Tensor::full({2, size, size}, 0.2);
            Var d = ad::mean_sq_diff(g, g.constant(a), g.constant(b));
            CHECK(d->value[0] == doctest::Approx(0.25).epsilon(1e-12));
        }
    }
    SUBCASE("cached feature maps hand-sum to the same value") {
        Tensor xhat = random_tensor(rng, {3, 8, 8});
        Graph g(false);
        auto bp = nn::BoundParams::bind(g, ext, false);
        auto fh = nn::extractor_features(g, bp, spec, g.constant(xhat), layers);
        auto fr = nn::extractor_features(g, bp, spec, g.constant(x), layers);
        real expect = 0;
        for (size_t j = 0; j < fh.size(); ++j) {
            real s = 0;
            for (int64_t i = 0; i < fh[j]->value.numel(); ++i) {
                real d = fh[j]->value[i] - fr[j]->value[i];
                s += d * d;
            }
            expect += s / static_cast<real>(fh[j]->value.numel());
        }
        CHECK(perceptual_loss(ext, spec, xhat, x, layers) ==
              doctest::Approx(expect).epsilon(1e-12));
    }
    SUBCASE("layer index out of range is rejected") {
        CHECK_THROWS_AS(perceptual_loss(ext, spec, x, x, {0, 5}), std::invalid_argument);
    }
    SUBCASE("shape mismatch is rejected") {
        CHECK_THROWS_AS(perceptual_loss(ext, spec, Tensor::zeros({3, 4, 4}), x, layers),
                        std::invalid_argument);
    }
}

TEST_CASE("camouflage_loss values and clamp") {
    CHECK(camouflage_nll(1.0) == 0.0);
    CHECK(camouflage_nll(0.5) == doctest::Approx(std::log(2.0)));
    CHECK(camouflage_nll(1e-12) == doctest::Approx(-std::log(1e-7)));

    nn::ClassifierSpec spec = nn::ClassifierSpec::desk();
    nn::Parameters cls = nn::build_classifier(spec, 5);
    Rng rng(6);
    Tensor xhat = random_tensor(rng, {3, 32, 32});

    SUBCASE("matches -log p_cam from the forward pass") {
        auto pr = nn::classifier_forward(cls, spec, xhat);
        CHECK(camouflage_loss(cls, spec, xhat) == doctest::Approx(camouflage_nll(pr[0])));
    }
    SUBCASE("forced logits push the probability under the floor and zero the gradient") {
        for (int k = 0; k < spec.n_scales; ++k) {
            cls.get("s" + std::to_string(k) + ".head.w").fill(0.0);
            Tensor& b = cls.get("s" + std::to_string(k) + ".head.b");
            b[0] = -40.0;
            b[1] = 40.0;
        }
        Graph g;
        Var x = g.leaf(xhat, true);
        Var loss = camouflage_loss(g, cls, spec, x);
        CHECK(loss->value[0] == doctest::Approx(-std::log(kCamProbFloor)));
        g.backward(loss);
        bool all_zero = true;
        if (x->grad.defined())
            for (int64_t i = 0; i < x->grad.numel(); ++i)
                if (x->grad[i] != 0.0) all_zero = false;
        CHECK(all_zero);
    }
}

TEST_CASE("total_generator_loss arithmetic and error contract") {
    LossWeights w;  // defaults: fm 10, vgg 10, cam 1, g 1

    SUBCASE("documented arithmetic example") {
        auto b = total_generator_loss(0.7, 0.9, 0.2, 0.05, 0.6, w);
        CHECK(b.total == doctest::Approx(3.8).epsilon(1e-12));
        CHECK(b.gan_d == 0.9);
    }
    SUBCASE("isolation: only the adversarial term") {
        LossWeights iso{0.0, 0.0, 0.0, 1.0};
        auto b = total_generator_loss(0.7, 0.0, 0.0, 0.0, 0.0, iso);
        CHECK(b.total == doctest::Approx(0.7));
    }
    SUBCASE("bundle invariant holds") {
        auto b = total_generator_loss(0.3, 0.1, 0.2, 0.4, 0.5, w);
        real expect = w.lambda_cam * b.cam + w.lambda_g * (b.gan_g + w.lambda_fm * b.fm) +
                      w.lambda_vgg * b.vgg;
        CHECK(std::abs(b.total - expect) <= 1e-6 * std::abs(expect));
    }
    SUBCASE("linearity in each component") {
        auto base = total_generator_loss(0.3, 0.0, 0.2, 0.4, 0.5, w);
        CHECK(total_generator_loss(0.3 + 1.0, 0.0, 0.2, 0.4, 0.5, w).total - base.total ==
              doctest::Approx(w.lambda_g));
        CHECK(total_generator_loss(0.3, 0.0, 0.2 + 1.0, 0.4, 0.5, w).total - base.total ==
              doctest::Approx(w.lambda_g * w.lambda_fm));
        CHECK(total_generator_loss(0.3, 0.0, 0.2, 0.4 + 1.0, 0.5, w).total - base.total ==
              doctest::Approx(w.lambda_vgg));
        CHECK(total_generator_loss(0.3, 0.0, 0.2, 0.4, 0.5 + 1.0, w).total - base.total ==
              doctest::Approx(w.lambda_cam));
    }
    SUBCASE("non-finite components are rejected") {
        CHECK_THROWS_AS(total_generator_loss(std::nan(""), 0, 0, 0, 0, w), std::domain_error);
        CHECK_THROWS_AS(total_generator_loss(0, 0, INFINITY, 0, 0, w), std::domain_error);
    }
    SUBCASE("negative weights are rejected") {
        LossWeights bad;
        bad.lambda_fm = -1;
        CHECK_THROWS_AS(total_generator_loss(0, 0, 0, 0, 0, bad), std::invalid_argument);
    }
}

TEST_CASE("loss gradients match central differences") {
    Rng rng(7);

    SUBCASE("gan losses") {
        std::vector<std::pair<std::string, Tensor>> named = {
            {"r0", random_tensor(rng, {1, 4, 4}, -2, 2)},
            {"f0", random_tensor(rng, {1, 4, 4}, -2, 2)}};
        auto rep = gradcheck(named, [](Graph& g, std::vector<Var>& v) {
            Var d = gan_loss_d(g, {v[0]}, {v[1]});
            Var gg = gan_loss_g(g, {v[1]});
            return ad::weighted_sum(g, {d, gg}, {1.0, 1.0});
        });
        INFO(rep.worst);
        CHECK(rep.ok);
    }
    SUBCASE("feature matching") {
        std::vector<std::pair<std::string, Tensor>> named = {
            {"a", random_tensor(rng, {2, 3, 3})}, {"b", random_tensor(rng, {2, 3, 3})}};
        auto rep = gradcheck(named, [](Graph& g, std::vector<Var>& v) {
            return feature_matching_loss(g, {{v[0]}}, {{v[1]}});
        });
        INFO(rep.worst);
        CHECK(rep.ok);
    }
    SUBCASE("perceptual and camouflage") {
        nn::ExtractorSpec espec{4, {1, 1}, 3};
        nn::Parameters ext = nn::build_extractor(espec, 11);
        nn::ClassifierSpec cspec{1, 3, 4, 3};
        nn::Parameters cls = nn::build_classifier(cspec, 12);
        Tensor x = random_tensor(rng, {3, 8, 8});
        std::vector<std::pair<std::string, Tensor>> named = {
            {"xhat", random_tensor(rng, {3, 8, 8})}};
        auto rep = gradcheck(named, [&](Graph& g, std::vector<Var>& v) {
            Var vgg = perceptual_loss(g, ext, espec, v[0], x, {0, 1});
            Var cam = camouflage_loss(g, cls, cspec, v[0]);
            return ad::weighted_sum(g, {vgg, cam}, {1.0, 1.0});
        });
        INFO(rep.worst);
        CHECK(rep.ok);
    }
}
