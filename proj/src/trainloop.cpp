#include "camogen/trainloop.hpp"

#include <nlohmann/json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace camogen::train {

namespace fs = std::filesystem;
using nlohmann::json;
using ad::Graph;
using ad::Var;
using dataio::Sample;

void TrainConfig::validate() const {
    if (lr <= 0) throw std::invalid_argument("TrainConfig: lr must be positive");
    if (total_epochs < 1 || constant_epochs < 0 || constant_epochs > total_epochs)
        throw std::invalid_argument("TrainConfig: need 0 <= constant_epochs <= total_epochs");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (image_size < 8) throw std::invalid_argument("TrainConfig: image_size too small");
}

real lr_schedule(int epoch, const TrainConfig& cfg) {
    cfg.validate();
    if (epoch < 0 || epoch > cfg.total_epochs)
        throw std::out_of_range("lr_schedule: epoch out of range");
    if (epoch < cfg.constant_epochs) return cfg.lr;
    if (cfg.total_epochs == cfg.constant_epochs) return 0.0;
    return cfg.lr * static_cast<real>(cfg.total_epochs - epoch) /
           static_cast<real>(cfg.total_epochs - cfg.constant_epochs);
}

// --- Adam -------------------------------------------------------------------

void Adam::step(nn::Parameters& params, const std::map<std::string, Tensor>& grads, real lr) {
    ++t_;
    const real bc1 = 1.0 - std::pow(beta1_, t_);
    const real bc2 = 1.0 - std::pow(beta2_, t_);
    for (auto& [name, theta] : params) {
        auto git = grads.find(name);
        if (git == grads.end()) throw std::invalid_argument("Adam: missing gradient for " + name);
        const Tensor& g = git->second;
        auto& m = m_.try_emplace(name, Tensor::zeros(theta.shape())).first->second;
        auto& v = v_.try_emplace(name, Tensor::zeros(theta.shape())).first->second;
        const int64_t n = theta.numel();
        for (int64_t i = 0; i < n; ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            theta[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
        }
    }
}

nn::Parameters Adam::state() const {
    nn::Parameters s;
    for (const auto& [name, t] : m_) s.add("m/" + name, t.clone());
    for (const auto& [name, t] : v_) s.add("v/" + name, t.clone());
    s.add("t", Tensor::scalar(static_cast<real>(t_)));
    return s;
}

Adam Adam::from_state(const nn::Parameters& state, real beta1, real beta2, real eps) {
    Adam a(beta1, beta2, eps);
    a.t_ = static_cast<int>(state.get("t")[0]);
    for (const auto& [name, t] : state) {
        if (name.rfind("m/", 0) == 0) a.m_[name.substr(2)] = t.clone();
        if (name.rfind("v/", 0) == 0) a.v_[name.substr(2)] = t.clone();
    }
    return a;
}

// --- shared helpers -----------------------------------------------------------

namespace {

// Runs fn(i) for i in [0,n), possibly in parallel, then lets the caller fold
// results in index order so floating-point reductions stay deterministic.
template <typename Fn>
void parallel_indexed(int n, Fn&& fn) {
    std::exception_ptr err;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int i = 0; i < n; ++i) {
        try {
            fn(i);
        } catch (...) {
#ifdef _OPENMP
#pragma omp critical
#endif
            if (!err) err = std::current_exception();
        }
    }
    if (err) std::rethrow_exception(err);
}

void accumulate_grads(std::map<std::string, Tensor>& into,
                      const std::map<std::string, Tensor>& from, real scale) {
    if (into.empty()) {
        for (const auto& [name, t] : from) {
            Tensor acc = Tensor::zeros(t.shape());
            for (int64_t i = 0; i < t.numel(); ++i) acc[i] = t[i] * scale;
            into.emplace(name, std::move(acc));
        }
        return;
    }
    for (const auto& [name, t] : from) {
        Tensor& acc = into.at(name);
        for (int64_t i = 0; i < t.numel(); ++i) acc[i] += t[i] * scale;
    }
}

Tensor mask3(const Tensor& mask) {
    const int H = mask.dim(1), W = mask.dim(2);
    Tensor m({3, H, W});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) m.at(c, y, x) = mask.at(0, y, x);
    return m;
}

Tensor mul_value(const Tensor& a, const Tensor& b) {
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
    return out;
}

Tensor one_minus(const Tensor& a) {
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = 1.0 - a[i];
    return out;
}

real masked_bg_l1(const Tensor& xhat, const Tensor& x, const Tensor& mask) {
    const int H = mask.dim(1), W = mask.dim(2);
    real num = 0, den = 0;
    for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx) {
            if (mask.at(0, y, xx) != 0.0) continue;
            for (int c = 0; c < 3; ++c) num += std::abs(xhat.at(c, y, xx) - x.at(c, y, xx));
            den += 3;
        }
    return den > 0 ? num / den : 0.0;
}

std::vector<Sample> preprocess_manifest(const dataio::DatasetManifest& m, int image_size,
                                        dataio::ClassTag tag) {
    std::vector<Sample> out(m.pairs.size());
    parallel_indexed(static_cast<int>(m.pairs.size()), [&](int i) {
        out[static_cast<size_t>(i)] = dataio::preprocess(
            m.pairs[static_cast<size_t>(i)].first, m.pairs[static_cast<size_t>(i)].second,
            image_size, 8, tag);
    });
    return out;
}

void append_jsonl(const fs::path& file, const json& j) {
    std::ofstream os(file, std::ios::app);
    if (!os) throw std::runtime_error("cannot append to " + file.string());
    os << j.dump() << "\n";
}

}  // namespace

// --- classifier training --------------------------------------------------------

namespace {

struct ClsSampleOut {
    std::map<std::string, Tensor> grads;
    real loss = 0;
};

real classifier_accuracy(const nn::Parameters& params, const nn::ClassifierSpec& spec,
                         const std::vector<const Sample*>& samples) {
    std::vector<int> correct(samples.size(), 0);
    parallel_indexed(static_cast<int>(samples.size()), [&](int i) {
        auto pr = nn::classifier_forward(params, spec, samples[static_cast<size_t>(i)]->image);
        bool is_cam = samples[static_cast<size_t>(i)]->class_tag == dataio::ClassTag::camouflage;
        correct[static_cast<size_t>(i)] = (pr[0] >= pr[1]) == is_cam ? 1 : 0;
    });
    int n = std::accumulate(correct.begin(), correct.end(), 0);
    return static_cast<real>(n) / static_cast<real>(samples.size());
}

}  // namespace

ClassifierTrainResult train_classifier_samples(const std::vector<Sample>& camo,
                                               const std::vector<Sample>& normal,
                                               const nn::ClassifierSpec& spec,
                                               const TrainConfig& cfg,
                                               const ClassifierTrainOptions& opt) {
    cfg.validate();
    spec.validate();
    if (camo.empty() || normal.empty())
        throw std::runtime_error("train_classifier: empty manifest for one class");

    nn::Parameters params = nn::build_classifier(spec, cfg.seed);
    Adam adam(cfg.adam_beta1, cfg.adam_beta2);

    std::vector<const Sample*> all;
    for (const auto& s : camo) all.push_back(&s);
    for (const auto& s : normal) all.push_back(&s);

    const int half = std::max(1, cfg.batch_size / 2);
    const int per_epoch = std::max<int>(
        1, static_cast<int>(std::min(camo.size(), normal.size())) / half);

    ClassifierTrainResult result;
    nn::Parameters best = params.clone();
    real best_acc = -1;
    int best_epoch = 0;
    int step = 0;
    bool stop = false;

    for (int epoch = 0; epoch < cfg.total_epochs && !stop; ++epoch) {
        Rng shuffle_rng(splitmix64(cfg.seed ^ (0xC1A551F1ED000000ULL + epoch)));
        std::vector<size_t> ci(camo.size()), ni(normal.size());
        std::iota(ci.begin(), ci.end(), 0);
        std::iota(ni.begin(), ni.end(), 0);
        for (size_t i = ci.size(); i > 1; --i) std::swap(ci[i - 1], ci[shuffle_rng.below(i)]);
        for (size_t i = ni.size(); i > 1; --i) std::swap(ni[i - 1], ni[shuffle_rng.below(i)]);

        for (int b = 0; b < per_epoch && !stop; ++b) {
            std::vector<const Sample*> batch;
            std::vector<int> targets;  // class 0 = camouflage
            for (int j = 0; j < half; ++j) {
                batch.push_back(&camo[ci[(b * half + j) % ci.size()]]);
                targets.push_back(0);
                batch.push_back(&normal[ni[(b * half + j) % ni.size()]]);
                targets.push_back(1);
            }
            const int B = static_cast<int>(batch.size());
            std::vector<ClsSampleOut> outs(B);
            parallel_indexed(B, [&](int i) {
                Graph g;
                auto bp = nn::BoundParams::bind(g, params, true);
                Var logits = nn::classifier_logits(g, bp, spec, g.constant(batch[i]->image));
                Var loss = ad::class_nll(g, logits, targets[static_cast<size_t>(i)], 1e-12);
                g.backward(loss);
                outs[static_cast<size_t>(i)].grads = bp.grads();
                outs[static_cast<size_t>(i)].loss = loss->value[0];
            });
            std::map<std::string, Tensor> grads;
            for (const auto& o : outs) accumulate_grads(grads, o.grads, 1.0 / B);
            adam.step(params, grads, lr_schedule(epoch, cfg));
            ++step;
            if (opt.max_steps > 0 && step >= opt.max_steps) stop = true;
        }

        real acc = classifier_accuracy(params, spec, all);
        result.epoch_accuracy.push_back(acc);
        if (acc > best_acc) {
            best_acc = acc;
            best = params.clone();
            best_epoch = epoch;
        }
        if (acc >= 0.9999) break;
        if (epoch - best_epoch >= opt.patience) break;
    }

    result.best_params = std::move(best);
    result.best_accuracy = best_acc;
    result.steps_run = step;

    if (!opt.out_dir.empty()) {
        fs::create_directories(opt.out_dir / "checkpoints");
        nn::CheckpointMeta meta;
        meta.kind = "classifier";
        meta.specs["classifier"] = spec;
        meta.epoch = best_epoch;
        meta.seed = cfg.seed;
        meta.metrics["train_accuracy"] = best_acc;
        result.checkpoint_dir = opt.out_dir / "checkpoints" / "classifier";
        nn::save_checkpoint(result.checkpoint_dir, {{"classifier", result.best_params}}, meta);
    }
    return result;
}

ClassifierTrainResult train_classifier(const dataio::DatasetManifest& camo,
                                       const dataio::DatasetManifest& normal,
                                       const nn::ClassifierSpec& spec, const TrainConfig& cfg,
                                       const ClassifierTrainOptions& opt) {
    if (camo.pairs.empty() || normal.pairs.empty())
        throw std::runtime_error("train_classifier: empty manifest");
    auto camo_samples = preprocess_manifest(camo, cfg.image_size, dataio::ClassTag::camouflage);
    auto normal_samples = preprocess_manifest(normal, cfg.image_size, dataio::ClassTag::normal);
    return train_classifier_samples(camo_samples, normal_samples, spec, cfg, opt);
}

// --- adversarial training ---------------------------------------------------------

namespace {

struct GanSampleOut {
    std::map<std::string, Tensor> grads;
    real gan_g = 0, gan_d = 0, fm = 0, vgg = 0, cam = 0, recon = 0;
};

std::vector<Var> logits_of(const std::vector<nn::ScaleOutput>& scales) {
    std::vector<Var> out;
    for (const auto& s : scales) out.push_back(s.logit);
    return out;
}

std::vector<std::vector<Var>> features_of(const std::vector<nn::ScaleOutput>& scales) {
    std::vector<std::vector<Var>> out;
    for (const auto& s : scales) out.push_back(s.features);
    return out;
}

}  // namespace

GanTrainResult train_gan_samples(const std::vector<Sample>& samples, const FrozenNets& frozen,
                                 const nn::GeneratorSpec& gen_spec,
                                 const nn::DiscriminatorSpec& dis_spec, const TrainConfig& cfg,
                                 const losses::LossWeights& weights,
                                 const GanTrainOptions& opt) {
    cfg.validate();
    gen_spec.validate();
    dis_spec.validate();
    weights.validate();
    if (samples.empty()) throw std::runtime_error("train_gan: no samples");
    for (const auto& s : samples)
        if (dataio::degenerate_mask(s.mask))
            throw std::runtime_error("train_gan: degenerate mask in sample " + s.name);

    nn::Parameters gen = nn::build_generator(gen_spec, splitmix64(cfg.seed ^ 0x67656eULL));
    nn::Parameters dis = nn::build_discriminator(dis_spec, splitmix64(cfg.seed ^ 0x646973ULL));
    Adam adam_g(cfg.adam_beta1, cfg.adam_beta2);
    Adam adam_d(cfg.adam_beta1, cfg.adam_beta2);
    int start_epoch = 0;

    if (!opt.resume_from.empty()) {
        auto [parts, meta] = nn::load_checkpoint(opt.resume_from);
        nn::GeneratorSpec gspec = meta.specs.at("generator").get<nn::GeneratorSpec>();
        nn::DiscriminatorSpec dspec = meta.specs.at("discriminator").get<nn::DiscriminatorSpec>();
        if (!(gspec == gen_spec) || !(dspec == dis_spec))
            throw std::runtime_error("train_gan: resume checkpoint was built for another spec");
        gen = parts.at("generator").clone();
        dis = parts.at("discriminator").clone();
        adam_g = Adam::from_state(parts.at("adam_generator"), cfg.adam_beta1, cfg.adam_beta2);
        adam_d = Adam::from_state(parts.at("adam_discriminator"), cfg.adam_beta1, cfg.adam_beta2);
        start_epoch = meta.epoch + 1;
    }

    const fs::path log_dir = opt.out_dir.empty() ? fs::path() : opt.out_dir / "logs";
    const fs::path ckpt_dir = opt.out_dir.empty() ? fs::path() : opt.out_dir / "checkpoints";
    if (!opt.out_dir.empty()) {
        fs::create_directories(log_dir);
        fs::create_directories(ckpt_dir);
    }

    // classifier stays frozen for the whole run
    const nn::Parameters& cls = frozen.classifier;

    const int B = std::min<int>(cfg.batch_size, static_cast<int>(samples.size()));
    const int steps_per_epoch = std::max<int>(1, static_cast<int>(samples.size()) / B);

    GanTrainResult result;
    int step = 0;
    bool stop = false;

    auto save_ckpt = [&](const std::string& name, int epoch, const losses::LossBundle& last) {
        if (opt.out_dir.empty()) return fs::path();
        nn::CheckpointMeta meta;
        meta.kind = "gan";
        meta.specs["generator"] = gen_spec;
        meta.specs["discriminator"] = dis_spec;
        meta.epoch = epoch;
        meta.seed = cfg.seed;
        meta.config_hash = opt.config_hash;
        meta.metrics = {{"gan_g", last.gan_g}, {"gan_d", last.gan_d}, {"fm", last.fm},
                        {"vgg", last.vgg},     {"cam", last.cam},     {"total", last.total}};
        fs::path dir = ckpt_dir / name;
        nn::save_checkpoint(dir,
                            {{"generator", gen},
                             {"discriminator", dis},
                             {"adam_generator", adam_g.state()},
                             {"adam_discriminator", adam_d.state()}},
                            meta);
        return dir;
    };

    losses::LossBundle last_bundle;

    for (int epoch = start_epoch; epoch < cfg.total_epochs && !stop; ++epoch) {
        const real lr = lr_schedule(epoch, cfg);

        Rng shuffle_rng(splitmix64(cfg.seed ^ (0x9A4E000000ULL + epoch)));
        std::vector<size_t> order(samples.size());
        std::iota(order.begin(), order.end(), 0);
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        for (int b = 0; b < steps_per_epoch && !stop; ++b) {
            std::vector<const Sample*> batch;
            for (int j = 0; j < B; ++j) batch.push_back(&samples[order[(b * B + j) % order.size()]]);

            // per-sample composites, shared by both phases
            std::vector<Tensor> x_in(B), fg(B), m3(B), inv_m3(B);
            parallel_indexed(B, [&](int i) {
                const Sample& s = *batch[static_cast<size_t>(i)];
                x_in[i] = dataio::add_noise(s, noise_seed(cfg.seed, step, i)).data;
                m3[i] = mask3(s.mask);
                inv_m3[i] = one_minus(m3[i]);
                fg[i] = mul_value(s.image, m3[i]);
            });

            // discriminator phase: generator output is a constant here
            std::vector<GanSampleOut> d_outs(B);
            parallel_indexed(B, [&](int i) {
                const Sample& s = *batch[static_cast<size_t>(i)];
                Tensor xhat = nn::generator_forward(gen, gen_spec, x_in[i]);
                Tensor fake = Tensor(xhat.shape());
                for (int64_t t = 0; t < fake.numel(); ++t)
                    fake[t] = s.image[t] * m3[i][t] + xhat[t] * inv_m3[i][t];
                Graph g;
                auto bd = nn::BoundParams::bind(g, dis, true);
                auto real_scales =
                    nn::discriminator_forward(g, bd, dis_spec, g.constant(fg[i]), g.constant(s.image));
                auto fake_scales =
                    nn::discriminator_forward(g, bd, dis_spec, g.constant(fg[i]), g.constant(fake));
                Var loss =
                    losses::gan_loss_d(g, logits_of(real_scales), logits_of(fake_scales));
                g.backward(loss);
                d_outs[static_cast<size_t>(i)].grads = bd.grads();
                d_outs[static_cast<size_t>(i)].gan_d = loss->value[0];
            });
            std::map<std::string, Tensor> d_grads;
            real gan_d_mean = 0;
            for (const auto& o : d_outs) {
                accumulate_grads(d_grads, o.grads, 1.0 / B);
                gan_d_mean += o.gan_d / B;
            }
            adam_d.step(dis, d_grads, lr);

            // generator phase against the updated discriminator
            std::vector<GanSampleOut> g_outs(B);
            parallel_indexed(B, [&](int i) {
                const Sample& s = *batch[static_cast<size_t>(i)];
                Graph g;
                auto bg = nn::BoundParams::bind(g, gen, true);
                auto bd = nn::BoundParams::bind(g, dis, false);
                Var xhat = nn::generator_forward(g, bg, gen_spec, g.constant(x_in[i]));
                Var fake = ad::add(g, ad::mul(g, xhat, g.constant(inv_m3[i])),
                                   g.constant(mul_value(s.image, m3[i])));
                auto fake_scales =
                    nn::discriminator_forward(g, bd, dis_spec, g.constant(fg[i]), fake);
                auto real_scales = nn::discriminator_forward(g, bd, dis_spec, g.constant(fg[i]),
                                                             g.constant(s.image));
                Var l_gan = losses::gan_loss_g(g, logits_of(fake_scales));
                Var l_fm = losses::feature_matching_loss(g, features_of(real_scales),
                                                         features_of(fake_scales));
                Var l_vgg = losses::perceptual_loss(g, frozen.extractor, frozen.extractor_spec,
                                                    fake, s.image, frozen.perceptual_layers);
                Var l_cam = losses::camouflage_loss(g, cls, frozen.classifier_spec, fake);
                Var total = losses::total_generator_loss_var(g, l_gan, l_fm, l_vgg, l_cam, weights);
                g.backward(total);
                auto& o = g_outs[static_cast<size_t>(i)];
                o.grads = bg.grads();
                o.gan_g = l_gan->value[0];
                o.fm = l_fm->value[0];
                o.vgg = l_vgg->value[0];
                o.cam = l_cam->value[0];
                o.recon = masked_bg_l1(xhat->value, s.image, s.mask);
            });
            std::map<std::string, Tensor> g_grads;
            real gg = 0, fm = 0, vgg = 0, cam = 0, recon = 0;
            for (const auto& o : g_outs) {
                accumulate_grads(g_grads, o.grads, 1.0 / B);
                gg += o.gan_g / B;
                fm += o.fm / B;
                vgg += o.vgg / B;
                cam += o.cam / B;
                recon += o.recon / B;
            }

            losses::LossBundle bundle;
            try {
                bundle = losses::total_generator_loss(gg, gan_d_mean, fm, vgg, cam, weights);
            } catch (const std::domain_error&) {
                save_ckpt("diagnostic", epoch, last_bundle);
                throw std::runtime_error(
                    "train_gan: non-finite loss at step " + std::to_string(step) +
                    "; diagnostic checkpoint written");
            }
            adam_g.step(gen, g_grads, lr);

            StepRecord rec;
            rec.step = step;
            rec.epoch = epoch;
            rec.lr = lr;
            rec.bundle = bundle;
            rec.recon_bg_l1 = recon;
            result.records.push_back(rec);
            last_bundle = bundle;
            if (!opt.out_dir.empty())
                append_jsonl(log_dir / "steps.jsonl",
                             {{"step", rec.step},
                              {"epoch", rec.epoch},
                              {"lr", rec.lr},
                              {"gan_g", bundle.gan_g},
                              {"gan_d", bundle.gan_d},
                              {"fm", bundle.fm},
                              {"vgg", bundle.vgg},
                              {"cam", bundle.cam},
                              {"total", bundle.total},
                              {"recon_bg_l1", rec.recon_bg_l1}});
            if (opt.on_step) opt.on_step(rec);

            ++step;
            if (opt.max_steps > 0 && step >= opt.max_steps) stop = true;
        }

        result.last_epoch = epoch;
        if (!opt.out_dir.empty() &&
            ((epoch - start_epoch) % std::max(1, opt.checkpoint_every) == 0 || stop ||
             epoch + 1 == cfg.total_epochs))
            result.last_checkpoint = save_ckpt("latest", epoch, last_bundle);
    }

    result.generator = std::move(gen);
    result.discriminator = std::move(dis);
    return result;
}

GanTrainResult train_gan(const dataio::DatasetManifest& data, const FrozenNets& frozen,
                         const nn::GeneratorSpec& gen_spec,
                         const nn::DiscriminatorSpec& dis_spec, const TrainConfig& cfg,
                         const losses::LossWeights& weights, const GanTrainOptions& opt) {
    auto samples = preprocess_manifest(data, cfg.image_size, dataio::ClassTag::camouflage);
    return train_gan_samples(samples, frozen, gen_spec, dis_spec, cfg, weights, opt);
}

}  // namespace camogen::train
