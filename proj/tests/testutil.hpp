#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "camogen/autodiff.hpp"
#include "camogen/dataio.hpp"
#include "camogen/image_io.hpp"
#include "camogen/netarch.hpp"
#include "camogen/rng.hpp"
#include "camogen/tensor.hpp"

namespace testutil {

using camogen::real;
using camogen::Rng;
using camogen::Tensor;

// ---------------------------------------------------------------- fixtures

inline Tensor random_tensor(Rng& rng, std::vector<int> shape, real lo = -1.0, real hi = 1.0) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// mask with a filled random rectangle, guaranteed mixed unless forced
inline Tensor random_mask(Rng& rng, int h, int w) {
    Tensor m({1, h, w});
    int y0 = static_cast<int>(rng.below(static_cast<uint64_t>(h / 2)));
    int x0 = static_cast<int>(rng.below(static_cast<uint64_t>(w / 2)));
    int y1 = y0 + 1 + static_cast<int>(rng.below(static_cast<uint64_t>(h - y0 - 1)));
    int x1 = x0 + 1 + static_cast<int>(rng.below(static_cast<uint64_t>(w - x0 - 1)));
    if (y1 >= h) y1 = h - 1;
    if (x1 >= w) x1 = w - 1;
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) m.at(0, y, x) = 1.0;
    return m;
}

inline camogen::dataio::Sample random_sample(Rng& rng, int h, int w, const std::string& name) {
    camogen::dataio::Sample s;
    s.image = random_tensor(rng, {3, h, w});
    s.mask = random_mask(rng, h, w);
    s.name = name;
    return s;
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("camogen-" + tag + "-" + std::to_string(std::random_device{}()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

// writes n image/mask pairs in the Image/ + GT/ layout; images are random
// textures with a rectangular foreground blob
inline void write_dataset_fixture(const std::filesystem::path& root, int n, int size,
                                  uint64_t seed) {
    namespace fs = std::filesystem;
    fs::create_directories(root / "Image");
    fs::create_directories(root / "GT");
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        auto s = random_sample(rng, size, size, "img" + std::to_string(i));
        camogen::img::save_image_png(root / "Image" / (s.name + ".png"), s.image);
        camogen::img::save_mask_png(root / "GT" / (s.name + ".png"), s.mask);
    }
}

// Two procedurally separable classes of 3x blob images: "camouflage" keeps
// the blob within contrast_lo of the background color, "normal" pushes it at
// least contrast_hi away. mean_contrast() below is the separability oracle.
inline std::vector<camogen::dataio::Sample> make_contrast_set(int n, int size, bool camouflage,
                                                              uint64_t seed) {
    using camogen::dataio::ClassTag;
    using camogen::dataio::Sample;
    std::vector<Sample> out;
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        Sample s;
        s.name = (camouflage ? "camo" : "norm") + std::to_string(i);
        s.class_tag = camouflage ? ClassTag::camouflage : ClassTag::normal;
        s.image = Tensor({3, size, size});
        s.mask = Tensor({1, size, size});
        real bg[3], fg[3];
        for (int c = 0; c < 3; ++c) {
            bg[c] = rng.uniform(-0.6, 0.6);
            if (camouflage)
                fg[c] = bg[c] + rng.uniform(-0.05, 0.05);
            else
                fg[c] = bg[c] > 0 ? bg[c] - rng.uniform(0.7, 0.9) : bg[c] + rng.uniform(0.7, 0.9);
        }
        int cy = size / 2 + static_cast<int>(rng.below(static_cast<uint64_t>(size / 4))) - size / 8;
        int cx = size / 2 + static_cast<int>(rng.below(static_cast<uint64_t>(size / 4))) - size / 8;
        int ry = size / 6 + static_cast<int>(rng.below(static_cast<uint64_t>(size / 8)));
        int rx = size / 6 + static_cast<int>(rng.below(static_cast<uint64_t>(size / 8)));
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                real dy = static_cast<real>(y - cy) / ry;
                real dx = static_cast<real>(x - cx) / rx;
                bool inside = dy * dy + dx * dx <= 1.0;
                s.mask.at(0, y, x) = inside ? 1.0 : 0.0;
                for (int c = 0; c < 3; ++c) {
                    real v = (inside ? fg[c] : bg[c]) + rng.uniform(-0.03, 0.03);
                    s.image.at(c, y, x) = std::min(real(1), std::max(real(-1), v));
                }
            }
        out.push_back(std::move(s));
    }
    return out;
}

// channel-averaged |mean(fg) - mean(bg)|; the threshold oracle for the toy set
inline real mean_contrast(const camogen::dataio::Sample& s) {
    real fg_sum[3] = {0, 0, 0}, bg_sum[3] = {0, 0, 0};
    int64_t fg_n = 0, bg_n = 0;
    const int h = s.image.dim(1), w = s.image.dim(2);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            bool in = s.mask.at(0, y, x) == 1.0;
            for (int c = 0; c < 3; ++c) (in ? fg_sum : bg_sum)[c] += s.image.at(c, y, x);
            (in ? fg_n : bg_n)++;
        }
    real d = 0;
    for (int c = 0; c < 3; ++c) d += std::abs(fg_sum[c] / fg_n - bg_sum[c] / bg_n);
    return d / 3.0;
}

// --------------------------------------------------------------- gradcheck

struct GradCheckReport {
    real max_abs_err = 0;
    real max_rel_err = 0;
    int checked = 0;
    std::string worst;
    bool ok = true;
};

// Central-difference check of d(loss)/d(tensor) for every named tensor, at
// sampled element indices. `build` must construct the scalar loss from the
// current tensor contents each time it is called.
inline GradCheckReport gradcheck(
    std::vector<std::pair<std::string, Tensor>>& named,
    const std::function<camogen::ad::Var(camogen::ad::Graph&,
                                         std::vector<camogen::ad::Var>&)>& build,
    int samples_per_tensor = 4, real rtol = 1e-3, real atol = 1e-5, uint64_t seed = 99) {
    using camogen::ad::Graph;
    using camogen::ad::Var;

    // analytic pass
    std::vector<Tensor> grads;
    {
        Graph g;
        std::vector<Var> leaves;
        for (auto& [_, t] : named) leaves.push_back(g.leaf(t, true));
        Var loss = build(g, leaves);
        g.backward(loss);
        for (auto& leaf : leaves)
            grads.push_back(leaf->grad.defined() ? leaf->grad : Tensor::zeros(leaf->value.shape()));
    }

    auto eval = [&]() {
        Graph g(false);
        std::vector<Var> leaves;
        for (auto& [_, t] : named) leaves.push_back(g.constant(t));
        return build(g, leaves)->value[0];
    };

    GradCheckReport rep;
    Rng rng(seed);
    for (size_t ti = 0; ti < named.size(); ++ti) {
        Tensor& t = named[ti].second;
        const int64_t n = t.numel();
        for (int s = 0; s < samples_per_tensor; ++s) {
            int64_t idx = static_cast<int64_t>(rng.below(static_cast<uint64_t>(n)));
            real orig = t[idx];
            real h = 1e-6 * std::max(real(1), std::abs(orig));
            t[idx] = orig + h;
            real fp = eval();
            t[idx] = orig - h;
            real fm = eval();
            t[idx] = orig;
            real fd = (fp - fm) / (2 * h);
            real an = grads[ti][idx];
            real abs_err = std::abs(fd - an);
            real rel_err = abs_err / std::max({std::abs(fd), std::abs(an), real(1e-12)});
            ++rep.checked;
            if (abs_err > rep.max_abs_err) rep.max_abs_err = abs_err;
            if (rel_err > rep.max_rel_err) rep.max_rel_err = rel_err;
            if (abs_err > atol + rtol * std::max(std::abs(fd), std::abs(an))) {
                rep.ok = false;
                rep.worst = named[ti].first + "[" + std::to_string(idx) + "] analytic " +
                            std::to_string(an) + " vs fd " + std::to_string(fd);
            }
        }
    }
    return rep;
}

// convenience wrapper: checks a network loss against all parameters plus the
// input tensor
inline GradCheckReport gradcheck_params(
    const camogen::nn::Parameters& params, const Tensor& input,
    const std::function<camogen::ad::Var(camogen::ad::Graph&, const camogen::nn::BoundParams&,
                                         camogen::ad::Var)>& build,
    int samples_per_tensor = 3, real rtol = 1e-3, real atol = 1e-5, uint64_t seed = 99) {
    using camogen::ad::Graph;
    using camogen::ad::Var;
    using camogen::nn::BoundParams;

    std::vector<std::pair<std::string, Tensor>> named;
    for (const auto& [name, t] : params) named.emplace_back(name, t);
    named.emplace_back("<input>", input);

    auto builder = [&](Graph& g, std::vector<camogen::ad::Var>& leaves) {
        BoundParams bp;
        for (size_t i = 0; i + 1 < leaves.size(); ++i) bp.vars[named[i].first] = leaves[i];
        return build(g, bp, leaves.back());
    };
    return gradcheck(named, builder, samples_per_tensor, rtol, atol, seed);
}

}  // namespace testutil
