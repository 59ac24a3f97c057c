#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "camogen/trainloop.hpp"
#include "testutil.hpp"

using namespace camogen;
using namespace camogen::train;
using testutil::TempDir;

namespace {

TrainConfig tiny_cfg() {
    TrainConfig cfg;
    cfg.lr = 2e-4;
    cfg.total_epochs = 4;
    cfg.constant_epochs = 2;
    cfg.batch_size = 2;
    cfg.image_size = 16;
    cfg.seed = 5;
    cfg.desk_mode = true;
    return cfg;
}

nn::GeneratorSpec tiny_gen() { return {4, 2, 1, 3, 3}; }
nn::DiscriminatorSpec tiny_dis() { return {2, 3, 4, 6}; }

FrozenNets tiny_frozen() {
    FrozenNets f;
    f.classifier_spec = {1, 3, 4, 3};
    f.classifier = nn::build_classifier(f.classifier_spec, 31);
    f.extractor_spec = {4, {1, 1}, 3};
    f.extractor = nn::build_extractor(f.extractor_spec, 32);
    f.perceptual_layers = {0, 1};
    return f;
}

std::vector<dataio::Sample> tiny_samples(int n, int size, uint64_t seed) {
    Rng rng(seed);
    std::vector<dataio::Sample> out;
    for (int i = 0; i < n; ++i) out.push_back(testutil::random_sample(rng, size, size, "s" + std::to_string(i)));
    return out;
}

}  // namespace

TEST_CASE("lr_schedule follows the constant-then-linear shape") {
    TrainConfig cfg;  // defaults: lr 2e-4, 400 total, 100 constant
    CHECK(lr_schedule(50, cfg) == doctest::Approx(2e-4));
    CHECK(lr_schedule(100, cfg) == doctest::Approx(2e-4));  // continuous at the knee
    CHECK(lr_schedule(250, cfg) == doctest::Approx(1e-4));
    CHECK(lr_schedule(400, cfg) == 0.0);

    SUBCASE("monotone non-increasing over the whole range") {
        real prev = lr_schedule(0, cfg);
        for (int e = 1; e <= cfg.total_epochs; ++e) {
            real cur = lr_schedule(e, cfg);
            CHECK(cur <= prev);
            prev = cur;
        }
    }
    SUBCASE("out-of-range epochs are rejected") {
        CHECK_THROWS_AS(lr_schedule(-1, cfg), std::out_of_range);
        CHECK_THROWS_AS(lr_schedule(401, cfg), std::out_of_range);
    }
    SUBCASE("degenerate all-constant schedule") {
        cfg.constant_epochs = cfg.total_epochs = 10;
        CHECK(lr_schedule(9, cfg) == doctest::Approx(2e-4));
        CHECK(lr_schedule(10, cfg) == 0.0);
    }
}

TEST_CASE("Adam state round-trips and resumes identically") {
    nn::Parameters a = nn::build_classifier({1, 2, 4, 3}, 1);
    nn::Parameters b = a.clone();

    std::map<std::string, Tensor> grads;
    Rng rng(2);
    for (const auto& [name, t] : a) grads[name] = testutil::random_tensor(rng, t.shape());

    Adam opt_a(0.5, 0.999);
    opt_a.step(a, grads, 1e-3);
    nn::Parameters saved = opt_a.state();

    Adam opt_b = Adam::from_state(saved, 0.5, 0.999);
    Adam opt_c(0.5, 0.999);
    opt_c.step(b, grads, 1e-3);
    CHECK(a.equals(b));

    // a second step from restored state matches a continuous run
    opt_b.step(a, grads, 1e-3);
    opt_c.step(b, grads, 1e-3);
    CHECK(a.equals(b));
    CHECK(opt_b.steps_taken() == 2);
}

TEST_CASE("classifier training separates the toy contrast set") {
    auto camo = testutil::make_contrast_set(16, 16, true, 71);
    auto normal = testutil::make_contrast_set(16, 16, false, 72);

    TrainConfig cfg;
    cfg.lr = 1e-3;  // the default 2e-4 needs far more than this step budget
    cfg.batch_size = 8;
    cfg.total_epochs = 30;
    cfg.constant_epochs = 30;
    cfg.image_size = 16;
    cfg.seed = 3;
    nn::ClassifierSpec spec{1, 3, 8, 3};

    ClassifierTrainOptions opt;
    opt.max_steps = 120;
    auto result = train_classifier_samples(camo, normal, spec, cfg, opt);
    CHECK(result.best_accuracy >= 0.9);
    CHECK(result.steps_run <= 120);

    SUBCASE("deterministic per seed") {
        auto again = train_classifier_samples(camo, normal, spec, cfg, opt);
        CHECK(again.best_accuracy == result.best_accuracy);
        CHECK(again.best_params.equals(result.best_params));
    }
}

TEST_CASE("classifier training rejects empty or single-class input") {
    auto camo = testutil::make_contrast_set(4, 16, true, 73);
    std::vector<dataio::Sample> empty;
    TrainConfig cfg = tiny_cfg();
    CHECK_THROWS_AS(train_classifier_samples(camo, empty, {1, 3, 4, 3}, cfg, {}),
                    std::runtime_error);
    CHECK_THROWS_AS(train_classifier_samples(empty, camo, {1, 3, 4, 3}, cfg, {}),
                    std::runtime_error);
}

TEST_CASE("classifier checkpoint reloads to identical outputs") {
    TempDir tmp("cls-ckpt");
    auto camo = testutil::make_contrast_set(6, 16, true, 74);
    auto normal = testutil::make_contrast_set(6, 16, false, 75);
    TrainConfig cfg = tiny_cfg();
    cfg.batch_size = 4;
    nn::ClassifierSpec spec{1, 3, 4, 3};
    ClassifierTrainOptions opt;
    opt.max_steps = 6;
    opt.out_dir = tmp.path;
    auto result = train_classifier_samples(camo, normal, spec, cfg, opt);

    auto [parts, meta] = nn::load_checkpoint(result.checkpoint_dir);
    auto loaded_spec = meta.specs.at("classifier").get<nn::ClassifierSpec>();
    CHECK(loaded_spec == spec);
    auto before = nn::classifier_forward(result.best_params, spec, camo[0].image);
    auto after = nn::classifier_forward(parts.at("classifier"), loaded_spec, camo[0].image);
    CHECK(before[0] == after[0]);
    CHECK(before[1] == after[1]);
}

TEST_CASE("gan training step is deterministic and keeps the classifier frozen") {
    auto samples = tiny_samples(2, 16, 80);
    FrozenNets frozen = tiny_frozen();
    std::string cls_hash_before = nn::content_hash_hex(frozen.classifier);

    TrainConfig cfg = tiny_cfg();
    GanTrainOptions opt;
    opt.max_steps = 2;

    auto run1 = train_gan_samples(samples, frozen, tiny_gen(), tiny_dis(), cfg, losses::LossWeights{}, opt);
    auto run2 = train_gan_samples(samples, frozen, tiny_gen(), tiny_dis(), cfg, losses::LossWeights{}, opt);

    REQUIRE(run1.records.size() == 2);
    CHECK(run1.records[0].bundle.total == run2.records[0].bundle.total);
    CHECK(run1.records[0].bundle.gan_d == run2.records[0].bundle.gan_d);
    CHECK(run1.generator.equals(run2.generator));
    CHECK(nn::content_hash_hex(frozen.classifier) == cls_hash_before);

    SUBCASE("every logged bundle satisfies the weighted-total invariant") {
        losses::LossWeights w;
        for (const auto& r : run1.records) {
            real expect = w.lambda_cam * r.bundle.cam +
                          w.lambda_g * (r.bundle.gan_g + w.lambda_fm * r.bundle.fm) +
                          w.lambda_vgg * r.bundle.vgg;
            CHECK(std::abs(r.bundle.total - expect) <= 1e-6 * std::max(real(1), std::abs(expect)));
        }
    }
}

TEST_CASE("gan training writes logs and resumes from a checkpoint") {
    TempDir tmp("gan-run");
    auto samples = tiny_samples(2, 16, 81);
    FrozenNets frozen = tiny_frozen();

    TrainConfig cfg = tiny_cfg();
    cfg.total_epochs = 2;
    GanTrainOptions opt;
    opt.out_dir = tmp.path;
    opt.config_hash = "cafe";
    auto first = train_gan_samples(samples, frozen, tiny_gen(), tiny_dis(), cfg, losses::LossWeights{}, opt);
    CHECK(first.last_epoch == 1);
    CHECK(std::filesystem::exists(first.last_checkpoint / "meta.json"));
    CHECK(std::filesystem::exists(tmp.path / "logs" / "steps.jsonl"));

    // one line per step in the log
    std::ifstream log(tmp.path / "logs" / "steps.jsonl");
    int lines = 0;
    for (std::string line; std::getline(log, line);) ++lines;
    CHECK(lines == static_cast<int>(first.records.size()));

    SUBCASE("resume continues at the next epoch with the scheduled lr") {
        TrainConfig longer = cfg;
        longer.total_epochs = 4;
        GanTrainOptions opt2;
        opt2.out_dir = tmp.path / "resumed";
        opt2.resume_from = first.last_checkpoint;
        auto second = train_gan_samples(samples, frozen, tiny_gen(), tiny_dis(), longer,
                                        losses::LossWeights{}, opt2);
        REQUIRE_FALSE(second.records.empty());
        CHECK(second.records.front().epoch == 2);
        CHECK(second.records.front().lr == doctest::Approx(lr_schedule(2, longer)));
    }
    SUBCASE("resume with a different architecture is rejected") {
        GanTrainOptions opt2;
        opt2.resume_from = first.last_checkpoint;
        nn::GeneratorSpec other = tiny_gen();
        other.n_res_blocks = 2;
        CHECK_THROWS_AS(train_gan_samples(samples, frozen, other, tiny_dis(), cfg,
                                          losses::LossWeights{}, opt2),
                        std::runtime_error);
    }
}

TEST_CASE("degenerate masks abort gan training up front") {
    auto samples = tiny_samples(2, 16, 82);
    samples[1].mask = Tensor::zeros({1, 16, 16});
    FrozenNets frozen = tiny_frozen();
    CHECK_THROWS_WITH_AS(train_gan_samples(samples, frozen, tiny_gen(), tiny_dis(), tiny_cfg(),
                                           losses::LossWeights{}, {}),
                         doctest::Contains("degenerate mask"), std::runtime_error);
}

TEST_CASE("a non-finite loss dumps a diagnostic checkpoint and aborts") {
    TempDir tmp("gan-nan");
    auto samples = tiny_samples(2, 16, 83);
    FrozenNets frozen = tiny_frozen();
    // poison the frozen classifier so the camouflage term is NaN at step one
    for (auto& [name, t] : frozen.classifier)
        if (name == "s0.head.b") t[0] = std::nan("");

    GanTrainOptions opt;
    opt.out_dir = tmp.path;
    opt.max_steps = 1;
    CHECK_THROWS_WITH_AS(train_gan_samples(samples, frozen, tiny_gen(), tiny_dis(), tiny_cfg(),
                                           losses::LossWeights{}, opt),
                         doctest::Contains("non-finite"), std::runtime_error);
    CHECK(std::filesystem::exists(tmp.path / "checkpoints" / "diagnostic" / "meta.json"));
}

TEST_CASE("noise seeds differ across steps and samples but reproduce exactly") {
    CHECK(noise_seed(1, 0, 0) != noise_seed(1, 0, 1));
    CHECK(noise_seed(1, 0, 0) != noise_seed(1, 1, 0));
    CHECK(noise_seed(1, 3, 2) == noise_seed(1, 3, 2));
    CHECK(noise_seed(2, 3, 2) != noise_seed(1, 3, 2));
}
