#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "camogen/netarch.hpp"
#include "testutil.hpp"

using namespace camogen;
using namespace camogen::nn;
using testutil::random_tensor;
using testutil::TempDir;

namespace {

// stride/padding arithmetic used as the shape oracle for the trunk
int conv_out(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

int64_t conv_params(int cin, int cout, int k) {
    return static_cast<int64_t>(cout) * cin * k * k + cout;
}

}  // namespace

TEST_CASE("generator preserves spatial size for divisible inputs") {
    GeneratorSpec spec = GeneratorSpec::desk();
    Parameters p = build_generator(spec, 1);
    Rng rng(5);
    for (int size : {8, 16, 24, 40, 64}) {
        Tensor x = random_tensor(rng, {3, size, size});
        Tensor y = generator_forward(p, spec, x);
        CHECK(y.shape() == std::vector<int>{3, size, size});
        for (int64_t i = 0; i < y.numel(); ++i) {
            CHECK(y[i] >= -1.0);
            CHECK(y[i] <= 1.0);
        }
    }
    // non-square divisible sizes work too
    Tensor x = random_tensor(rng, {3, 16, 40});
    CHECK(generator_forward(p, spec, x).shape() == std::vector<int>{3, 16, 40});
}

TEST_CASE("generator rejects indivisible spatial sizes") {
    GeneratorSpec spec = GeneratorSpec::desk();
    Parameters p = build_generator(spec, 1);
    Tensor x = Tensor::zeros({3, 12, 12});
    CHECK_THROWS_AS(generator_forward(p, spec, x), std::invalid_argument);
}

TEST_CASE("build is deterministic in the seed") {
    GeneratorSpec spec = GeneratorSpec::desk();
    CHECK(build_generator(spec, 42).equals(build_generator(spec, 42)));
    CHECK_FALSE(build_generator(spec, 42).equals(build_generator(spec, 43)));
    CHECK(build_discriminator(DiscriminatorSpec::desk(), 7)
              .equals(build_discriminator(DiscriminatorSpec::desk(), 7)));
    CHECK(build_classifier(ClassifierSpec::desk(), 7)
              .equals(build_classifier(ClassifierSpec::desk(), 7)));
}

TEST_CASE("desk generator parameter count matches the layer-shape arithmetic") {
    GeneratorSpec spec = GeneratorSpec::desk();
    Parameters p = build_generator(spec, 3);

    int64_t expect = 0;
    int w = spec.base_width;
    expect += conv_params(3, w, 7) + 2 * w;  // encoder conv + affine norm
    for (int i = 0; i < spec.n_downsample; ++i) {
        expect += conv_params(w, 2 * w, 3) + 2 * (2 * w);
        w *= 2;
    }
    for (int j = 0; j < spec.n_res_blocks; ++j) expect += 2 * (conv_params(w, w, 3) + 2 * w);
    for (int i = 0; i < spec.n_downsample; ++i) {
        expect += static_cast<int64_t>(w) * (w / 2) * 9 + w / 2 + 2 * (w / 2);
        w /= 2;
    }
    expect += conv_params(w, 3, 7);

    CHECK(p.total_count() == expect);
}

TEST_CASE("large paper-scale input runs through the generator") {
    GeneratorSpec spec = GeneratorSpec::desk();
    Parameters p = build_generator(spec, 1);
    Tensor x = Tensor::zeros({3, 512, 512});
    Tensor y = generator_forward(p, spec, x);
    CHECK(y.shape() == std::vector<int>{3, 512, 512});
}

TEST_CASE("discriminator produces the stride-arithmetic map sizes and T taps") {
    DiscriminatorSpec spec = DiscriminatorSpec::desk();
    Parameters p = build_discriminator(spec, 2);
    Rng rng(6);
    Tensor fg = random_tensor(rng, {3, 64, 64});
    Tensor cand = random_tensor(rng, {3, 64, 64});
    auto scales = discriminator_forward(p, spec, fg, cand);
    REQUIRE(scales.size() == 2);

    int in = 64;
    for (const auto& scale : scales) {
        CHECK(scale.features.size() == static_cast<size_t>(spec.taps_per_scale()));
        int h = in;
        std::vector<int> expected_sizes;
        for (int l = 0; l < spec.layers_per_scale; ++l) {
            h = conv_out(h, 4, l + 1 < spec.layers_per_scale ? 2 : 1, 2);
            expected_sizes.push_back(h);
        }
        expected_sizes.push_back(conv_out(h, 4, 1, 2));  // logit layer
        for (size_t i = 0; i < scale.features.size(); ++i) {
            CHECK(scale.features[i].dim(1) == expected_sizes[i]);
            CHECK(scale.features[i].dim(2) == expected_sizes[i]);
        }
        CHECK(scale.logit.dim(0) == 1);
        CHECK(scale.logit.equals(scale.features.back()));
        in = conv_out(in, 3, 2, 1);  // next pyramid level
    }

    SUBCASE("all-zero conditioning still yields finite maps") {
        auto zeros = Tensor::zeros({3, 64, 64});
        for (const auto& s : discriminator_forward(p, spec, zeros, cand))
            CHECK(s.logit.all_finite());
    }
    SUBCASE("shape mismatch is rejected") {
        ad::Graph g(false);
        auto bp = BoundParams::bind(g, p, false);
        CHECK_THROWS_AS(discriminator_forward(g, bp, spec, g.constant(fg),
                                              g.constant(Tensor::zeros({3, 32, 32}))),
                        std::invalid_argument);
    }
}

TEST_CASE("classifier probabilities are normalized and bounded") {
    ClassifierSpec spec = ClassifierSpec::desk();
    Parameters p = build_classifier(spec, 9);
    Rng rng(7);

    SUBCASE("forced equal logits give (0.5, 0.5)") {
        for (int k = 0; k < spec.n_scales; ++k) {
            p.get("s" + std::to_string(k) + ".head.w").fill(0.0);
            p.get("s" + std::to_string(k) + ".head.b").fill(0.0);
        }
        auto pr = classifier_forward(p, spec, random_tensor(rng, {3, 32, 32}));
        CHECK(pr[0] == doctest::Approx(0.5));
        CHECK(pr[1] == doctest::Approx(0.5));
    }
    SUBCASE("batch of images each sums to one") {
        for (int i = 0; i < 8; ++i) {
            auto pr = classifier_forward(p, spec, random_tensor(rng, {3, 32, 32}));
            CHECK(pr[0] > 0.0);
            CHECK(pr[0] < 1.0);
            CHECK(pr[1] > 0.0);
            CHECK(pr[1] < 1.0);
            CHECK(std::abs(pr[0] + pr[1] - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("analytic gradient of mean output matches finite differences") {
    GeneratorSpec spec;
    spec.base_width = 4;
    spec.n_downsample = 2;
    spec.n_res_blocks = 1;
    Parameters p = build_generator(spec, 10);
    Rng rng(8);
    Tensor x = random_tensor(rng, {3, 8, 8});

    // single bottleneck weight, checked against a central difference
    const std::string name = "res0.conv1.w";
    ad::Graph g;
    auto bp = BoundParams::bind(g, p, true);
    auto loss = ad::mean_all(g, generator_forward(g, bp, spec, g.constant(x)));
    g.backward(loss);
    real analytic = bp.at(name)->grad[0];

    Tensor& wt = p.get(name);
    real orig = wt[0];
    real h = 1e-6;
    auto eval = [&]() {
        ad::Graph gg(false);
        auto bb = BoundParams::bind(gg, p, false);
        auto y = generator_forward(gg, bb, spec, gg.constant(x));
        real s = 0;
        for (int64_t i = 0; i < y->value.numel(); ++i) s += y->value[i];
        return s / static_cast<real>(y->value.numel());
    };
    wt[0] = orig + h;
    real fp = eval();
    wt[0] = orig - h;
    real fm = eval();
    wt[0] = orig;
    real fd = (fp - fm) / (2 * h);
    CHECK(analytic == doctest::Approx(fd).epsilon(1e-3));
}

TEST_CASE("parameter serialization round-trips bit-exactly") {
    Parameters p = build_generator(GeneratorSpec::desk(), 77);
    auto bytes = serialize_parameters(p);
    Parameters q = deserialize_parameters(bytes);
    CHECK(p.equals(q));
    CHECK(content_hash_hex(p) == content_hash_hex(q));
}

TEST_CASE("checkpoint round-trip preserves forward outputs bit-exactly") {
    TempDir tmp("ckpt");
    GeneratorSpec spec = GeneratorSpec::desk();
    Parameters p = build_generator(spec, 123);
    Rng rng(9);
    Tensor x = random_tensor(rng, {3, 16, 16});
    Tensor before = generator_forward(p, spec, x);

    CheckpointMeta meta;
    meta.kind = "gan";
    meta.specs["generator"] = spec;
    meta.epoch = 4;
    meta.seed = 123;
    save_checkpoint(tmp.path / "ck", {{"generator", p}}, meta);

    auto [parts, loaded_meta] = load_checkpoint(tmp.path / "ck");
    CHECK(loaded_meta.epoch == 4);
    CHECK(loaded_meta.specs.at("generator").get<GeneratorSpec>() == spec);
    Tensor after = generator_forward(parts.at("generator"), spec, x);
    CHECK(before.equals(after));

    SUBCASE("load-then-save reproduces identical bytes") {
        save_checkpoint(tmp.path / "ck2", parts, loaded_meta);
        for (const char* f : {"meta.json", "generator.bin"}) {
            std::ifstream a(tmp.path / "ck" / f, std::ios::binary);
            std::ifstream b(tmp.path / "ck2" / f, std::ios::binary);
            std::string sa((std::istreambuf_iterator<char>(a)), {});
            std::string sb((std::istreambuf_iterator<char>(b)), {});
            CHECK(sa == sb);
        }
    }
    SUBCASE("corrupted blob is rejected") {
        std::fstream f(tmp.path / "ck" / "generator.bin",
                       std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(64);
        f.put('\x7f');
        f.close();
        CHECK_THROWS_WITH_AS(load_checkpoint(tmp.path / "ck"),
                             doctest::Contains("hash mismatch"), std::runtime_error);
    }
}

TEST_CASE("invalid specs are rejected") {
    GeneratorSpec g;
    g.base_width = 0;
    CHECK_THROWS_AS(build_generator(g, 1), std::invalid_argument);
    DiscriminatorSpec d;
    d.in_channels = 3;
    CHECK_THROWS_AS(build_discriminator(d, 1), std::invalid_argument);
}
