#include "camogen/netarch.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "camogen/rng.hpp"

namespace camogen::nn {

namespace fs = std::filesystem;
using nlohmann::json;
using ad::Graph;
using ad::Var;

// --- specs ---------------------------------------------------------------

void GeneratorSpec::validate() const {
    if (base_width < 1 || n_downsample < 0 || n_res_blocks < 0)
        throw std::invalid_argument("GeneratorSpec: non-positive field");
    if (in_channels != 3 || out_channels != 3)
        throw std::invalid_argument("GeneratorSpec: channel counts are fixed at 3");
}

void DiscriminatorSpec::validate() const {
    if (n_scales < 1 || layers_per_scale < 2 || base_width < 1)
        throw std::invalid_argument("DiscriminatorSpec: invalid field");
    if (in_channels != 6)
        throw std::invalid_argument("DiscriminatorSpec: conditioning input has 6 channels");
}

void ClassifierSpec::validate() const {
    if (n_scales < 1 || layers_per_scale < 2 || base_width < 1 || in_channels != 3)
        throw std::invalid_argument("ClassifierSpec: invalid field");
}

void ExtractorSpec::validate() const {
    if (base_width < 1 || convs_per_stage.empty())
        throw std::invalid_argument("ExtractorSpec: invalid field");
    for (int c : convs_per_stage)
        if (c < 1) throw std::invalid_argument("ExtractorSpec: empty stage");
}

void to_json(json& j, const GeneratorSpec& s) {
    j = json{{"base_width", s.base_width},
             {"n_downsample", s.n_downsample},
             {"n_res_blocks", s.n_res_blocks},
             {"in_channels", s.in_channels},
             {"out_channels", s.out_channels}};
}
void from_json(const json& j, GeneratorSpec& s) {
    j.at("base_width").get_to(s.base_width);
    j.at("n_downsample").get_to(s.n_downsample);
    j.at("n_res_blocks").get_to(s.n_res_blocks);
    j.at("in_channels").get_to(s.in_channels);
    j.at("out_channels").get_to(s.out_channels);
}
void to_json(json& j, const DiscriminatorSpec& s) {
    j = json{{"n_scales", s.n_scales},
             {"layers_per_scale", s.layers_per_scale},
             {"base_width", s.base_width},
             {"in_channels", s.in_channels}};
}
void from_json(const json& j, DiscriminatorSpec& s) {
    j.at("n_scales").get_to(s.n_scales);
    j.at("layers_per_scale").get_to(s.layers_per_scale);
    j.at("base_width").get_to(s.base_width);
    j.at("in_channels").get_to(s.in_channels);
}
void to_json(json& j, const ClassifierSpec& s) {
    j = json{{"n_scales", s.n_scales},
             {"layers_per_scale", s.layers_per_scale},
             {"base_width", s.base_width},
             {"in_channels", s.in_channels}};
}
void from_json(const json& j, ClassifierSpec& s) {
    j.at("n_scales").get_to(s.n_scales);
    j.at("layers_per_scale").get_to(s.layers_per_scale);
    j.at("base_width").get_to(s.base_width);
    j.at("in_channels").get_to(s.in_channels);
}
void to_json(json& j, const ExtractorSpec& s) {
    j = json{{"base_width", s.base_width},
             {"convs_per_stage", s.convs_per_stage},
             {"in_channels", s.in_channels}};
}
void from_json(const json& j, ExtractorSpec& s) {
    j.at("base_width").get_to(s.base_width);
    j.at("convs_per_stage").get_to(s.convs_per_stage);
    j.at("in_channels").get_to(s.in_channels);
}

// --- Parameters ------------------------------------------------------------

Tensor& Parameters::add(const std::string& name, Tensor t) {
    auto [it, fresh] = tensors_.emplace(name, std::move(t));
    if (!fresh) throw std::invalid_argument("duplicate parameter name: " + name);
    return it->second;
}

const Tensor& Parameters::get(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw std::out_of_range("no such parameter: " + name);
    return it->second;
}

Tensor& Parameters::get(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw std::out_of_range("no such parameter: " + name);
    return it->second;
}

int64_t Parameters::total_count() const {
    int64_t n = 0;
    for (const auto& [_, t] : tensors_) n += t.numel();
    return n;
}

Parameters Parameters::clone() const {
    Parameters p;
    for (const auto& [name, t] : tensors_) p.add(name, t.clone());
    return p;
}

bool Parameters::equals(const Parameters& o) const {
    if (tensors_.size() != o.tensors_.size()) return false;
    auto a = tensors_.begin();
    auto b = o.tensors_.begin();
    for (; a != tensors_.end(); ++a, ++b)
        if (a->first != b->first || !a->second.equals(b->second)) return false;
    return true;
}

// --- initialization ---------------------------------------------------------

namespace {

Tensor normal_tensor(Rng& rng, std::vector<int> shape, real mean, real stddev) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(mean, stddev);
    return t;
}

void add_conv(Parameters& p, Rng& rng, const std::string& prefix, int cin, int cout, int k,
              real stddev = 0.02) {
    p.add(prefix + ".w", normal_tensor(rng, {cout, cin, k, k}, 0.0, stddev));
    p.add(prefix + ".b", Tensor({cout}));
}

void add_convT(Parameters& p, Rng& rng, const std::string& prefix, int cin, int cout, int k = 3) {
    p.add(prefix + ".w", normal_tensor(rng, {cin, cout, k, k}, 0.0, 0.02));
    p.add(prefix + ".b", Tensor({cout}));
}

void add_inorm(Parameters& p, Rng& rng, const std::string& prefix, int c) {
    p.add(prefix + ".g", normal_tensor(rng, {c}, 1.0, 0.02));
    p.add(prefix + ".b", Tensor({c}));
}

int trunk_width(int base, int layer) { return base * std::min(1 << layer, 8); }

// shared trunk used by the discriminator and the classifier
void add_trunk(Parameters& p, Rng& rng, const std::string& scale_prefix, int in_channels,
               int base, int layers) {
    int cin = in_channels;
    for (int l = 0; l < layers; ++l) {
        int cout = trunk_width(base, l);
        add_conv(p, rng, scale_prefix + ".b" + std::to_string(l) + ".conv", cin, cout, 4);
        if (l > 0) add_inorm(p, rng, scale_prefix + ".b" + std::to_string(l) + ".in", cout);
        cin = cout;
    }
}

}  // namespace

Parameters build_generator(const GeneratorSpec& spec, uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    Parameters p;
    int w = spec.base_width;
    add_conv(p, rng, "enc.conv", spec.in_channels, w, 7);
    add_inorm(p, rng, "enc.in", w);
    for (int i = 0; i < spec.n_downsample; ++i) {
        add_conv(p, rng, "down" + std::to_string(i) + ".conv", w, w * 2, 3);
        add_inorm(p, rng, "down" + std::to_string(i) + ".in", w * 2);
        w *= 2;
    }
    for (int j = 0; j < spec.n_res_blocks; ++j) {
        std::string rp = "res" + std::to_string(j);
        add_conv(p, rng, rp + ".conv1", w, w, 3);
        add_inorm(p, rng, rp + ".in1", w);
        add_conv(p, rng, rp + ".conv2", w, w, 3);
        add_inorm(p, rng, rp + ".in2", w);
    }
    for (int i = 0; i < spec.n_downsample; ++i) {
        add_convT(p, rng, "up" + std::to_string(i) + ".conv", w, w / 2);
        add_inorm(p, rng, "up" + std::to_string(i) + ".in", w / 2);
        w /= 2;
    }
    add_conv(p, rng, "head.conv", w, spec.out_channels, 7);
    return p;
}

Parameters build_discriminator(const DiscriminatorSpec& spec, uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    Parameters p;
    for (int k = 0; k < spec.n_scales; ++k) {
        std::string sp = "s" + std::to_string(k);
        add_trunk(p, rng, sp, spec.in_channels, spec.base_width, spec.layers_per_scale);
        int cin = trunk_width(spec.base_width, spec.layers_per_scale - 1);
        add_conv(p, rng, sp + ".logit", cin, 1, 4);
    }
    return p;
}

Parameters build_classifier(const ClassifierSpec& spec, uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    Parameters p;
    for (int k = 0; k < spec.n_scales; ++k) {
        std::string sp = "s" + std::to_string(k);
        add_trunk(p, rng, sp, spec.in_channels, spec.base_width, spec.layers_per_scale);
        int f = trunk_width(spec.base_width, spec.layers_per_scale - 1);
        p.add(sp + ".head.w", normal_tensor(rng, {2, f}, 0.0, 0.02));
        p.add(sp + ".head.b", Tensor({2}));
    }
    return p;
}

Parameters build_extractor(const ExtractorSpec& spec, uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    Parameters p;
    int cin = spec.in_channels;
    for (int s = 0; s < spec.n_stages(); ++s) {
        int cout = spec.base_width << s;
        for (int c = 0; c < spec.convs_per_stage[static_cast<size_t>(s)]; ++c) {
            std::string prefix =
                "stage" + std::to_string(s) + ".conv" + std::to_string(c);
            real stddev = std::sqrt(2.0 / (static_cast<real>(cin) * 9.0));
            p.add(prefix + ".w", normal_tensor(rng, {cout, cin, 3, 3}, 0.0, stddev));
            p.add(prefix + ".b", Tensor({cout}));
            cin = cout;
        }
    }
    return p;
}

// --- binding and forwards ---------------------------------------------------

BoundParams BoundParams::bind(Graph& g, const Parameters& p, bool trainable) {
    BoundParams b;
    for (const auto& [name, t] : p)
        b.vars.emplace(name, trainable ? g.param(t) : g.constant(t));
    return b;
}

const Var& BoundParams::at(const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) throw std::out_of_range("no bound parameter: " + name);
    return it->second;
}

std::map<std::string, Tensor> BoundParams::grads() const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, v] : vars)
        out.emplace(name, v->grad.defined() ? v->grad : Tensor::zeros(v->value.shape()));
    return out;
}

namespace {

Var conv_in_relu(Graph& g, const BoundParams& p, const std::string& prefix, Var h, int stride,
                 int pad) {
    h = ad::conv2d(g, h, p.at(prefix + ".conv.w"), p.at(prefix + ".conv.b"), stride, pad);
    h = ad::instance_norm(g, h, p.at(prefix + ".in.g"), p.at(prefix + ".in.b"));
    return ad::relu(g, h);
}

// trunk shared by discriminator and classifier; returns the taps (one per
// conv block)
std::vector<Var> trunk_forward(Graph& g, const BoundParams& p, const std::string& sp, Var h,
                               int layers) {
    std::vector<Var> taps;
    for (int l = 0; l < layers; ++l) {
        std::string bp = sp + ".b" + std::to_string(l);
        int stride = l + 1 < layers ? 2 : 1;
        h = ad::conv2d(g, h, p.at(bp + ".conv.w"), p.at(bp + ".conv.b"), stride, 2);
        if (l > 0) h = ad::instance_norm(g, h, p.at(bp + ".in.g"), p.at(bp + ".in.b"));
        h = ad::leaky_relu(g, h, 0.2);
        taps.push_back(h);
    }
    return taps;
}

}  // namespace

Var generator_forward(Graph& g, const BoundParams& p, const GeneratorSpec& spec, Var x) {
    spec.validate();
    if (x->value.rank() != 3 || x->value.dim(0) != spec.in_channels)
        throw std::invalid_argument("generator_forward: expected (3,H,W) input");
    const int H = x->value.dim(1), W = x->value.dim(2);
    const int f = spec.downsample_factor();
    if (H % f != 0 || W % f != 0)
        throw std::invalid_argument("generator_forward: spatial size " + std::to_string(H) + "x" +
                                    std::to_string(W) + " not divisible by " + std::to_string(f));

    Var h = ad::pad_reflect(g, x, 3);
    h = ad::conv2d(g, h, p.at("enc.conv.w"), p.at("enc.conv.b"), 1, 0);
    h = ad::instance_norm(g, h, p.at("enc.in.g"), p.at("enc.in.b"));
    h = ad::relu(g, h);
    for (int i = 0; i < spec.n_downsample; ++i)
        h = conv_in_relu(g, p, "down" + std::to_string(i), h, 2, 1);
    for (int j = 0; j < spec.n_res_blocks; ++j) {
        std::string rp = "res" + std::to_string(j);
        Var t = ad::pad_reflect(g, h, 1);
        t = ad::conv2d(g, t, p.at(rp + ".conv1.w"), p.at(rp + ".conv1.b"), 1, 0);
        t = ad::instance_norm(g, t, p.at(rp + ".in1.g"), p.at(rp + ".in1.b"));
        t = ad::relu(g, t);
        t = ad::pad_reflect(g, t, 1);
        t = ad::conv2d(g, t, p.at(rp + ".conv2.w"), p.at(rp + ".conv2.b"), 1, 0);
        t = ad::instance_norm(g, t, p.at(rp + ".in2.g"), p.at(rp + ".in2.b"));
        h = ad::add(g, h, t);
    }
    for (int i = 0; i < spec.n_downsample; ++i) {
        std::string up = "up" + std::to_string(i);
        h = ad::conv_transpose2d(g, h, p.at(up + ".conv.w"), p.at(up + ".conv.b"), 2, 1, 1);
        h = ad::instance_norm(g, h, p.at(up + ".in.g"), p.at(up + ".in.b"));
        h = ad::relu(g, h);
    }
    h = ad::pad_reflect(g, h, 3);
    h = ad::conv2d(g, h, p.at("head.conv.w"), p.at("head.conv.b"), 1, 0);
    return ad::tanh_act(g, h);
}

std::vector<ScaleOutput> discriminator_forward(Graph& g, const BoundParams& p,
                                               const DiscriminatorSpec& spec, Var fg,
                                               Var candidate) {
    spec.validate();
    if (!fg->value.same_shape(candidate->value) || fg->value.rank() != 3 ||
        fg->value.dim(0) != 3)
        throw std::invalid_argument("discriminator_forward: fg/candidate must both be (3,H,W)");
    Var x = ad::concat_channels(g, fg, candidate);
    std::vector<ScaleOutput> out;
    for (int k = 0; k < spec.n_scales; ++k) {
        if (k > 0) x = ad::avg_pool(g, x, 3, 2, 1);
        std::string sp = "s" + std::to_string(k);
        ScaleOutput so;
        so.features = trunk_forward(g, p, sp, x, spec.layers_per_scale);
        so.logit = ad::conv2d(g, so.features.back(), p.at(sp + ".logit.w"),
                              p.at(sp + ".logit.b"), 1, 2);
        so.features.push_back(so.logit);
        out.push_back(std::move(so));
    }
    return out;
}

Var classifier_logits(Graph& g, const BoundParams& p, const ClassifierSpec& spec, Var image) {
    spec.validate();
    if (image->value.rank() != 3 || image->value.dim(0) != spec.in_channels)
        throw std::invalid_argument("classifier_logits: expected (3,H,W) input");
    Var x = image;
    Var acc;
    for (int k = 0; k < spec.n_scales; ++k) {
        if (k > 0) x = ad::avg_pool(g, x, 3, 2, 1);
        std::string sp = "s" + std::to_string(k);
        auto taps = trunk_forward(g, p, sp, x, spec.layers_per_scale);
        Var pooled = ad::global_avg_pool(g, taps.back());
        Var logits = ad::linear(g, pooled, p.at(sp + ".head.w"), p.at(sp + ".head.b"));
        acc = acc ? ad::add(g, acc, logits) : logits;
    }
    return ad::scale(g, acc, 1.0 / spec.n_scales);
}

std::vector<Var> extractor_features(Graph& g, const BoundParams& p, const ExtractorSpec& spec,
                                    Var x, const std::vector<int>& layer_set) {
    spec.validate();
    if (layer_set.empty()) throw std::invalid_argument("extractor_features: empty layer set");
    int max_layer = 0;
    for (int j : layer_set) {
        if (j < 0 || j >= spec.n_stages())
            throw std::invalid_argument("extractor layer index out of range: " +
                                        std::to_string(j));
        max_layer = std::max(max_layer, j);
    }
    std::vector<Var> pool_taps;
    Var h = x;
    for (int s = 0; s <= max_layer; ++s) {
        for (int c = 0; c < spec.convs_per_stage[static_cast<size_t>(s)]; ++c) {
            std::string prefix = "stage" + std::to_string(s) + ".conv" + std::to_string(c);
            h = ad::conv2d(g, h, p.at(prefix + ".w"), p.at(prefix + ".b"), 1, 1);
            h = ad::relu(g, h);
        }
        if (h->value.dim(1) < 2 || h->value.dim(2) < 2)
            throw std::invalid_argument(
                "extractor layer index out of range for this input size: stage " +
                std::to_string(s));
        h = ad::max_pool(g, h, 2, 2);
        pool_taps.push_back(h);
    }
    std::vector<Var> out;
    for (int j : layer_set) out.push_back(pool_taps[static_cast<size_t>(j)]);
    return out;
}

// --- value-level wrappers ----------------------------------------------------

Tensor generator_forward(const Parameters& p, const GeneratorSpec& spec, const Tensor& x) {
    Graph g(false);
    auto bp = BoundParams::bind(g, p, false);
    return generator_forward(g, bp, spec, g.constant(x))->value;
}

std::vector<ScaleOutputValues> discriminator_forward(const Parameters& p,
                                                     const DiscriminatorSpec& spec,
                                                     const Tensor& fg, const Tensor& candidate) {
    Graph g(false);
    auto bp = BoundParams::bind(g, p, false);
    auto scales = discriminator_forward(g, bp, spec, g.constant(fg), g.constant(candidate));
    std::vector<ScaleOutputValues> out;
    for (auto& s : scales) {
        ScaleOutputValues v;
        v.logit = s.logit->value;
        for (auto& f : s.features) v.features.push_back(f->value);
        out.push_back(std::move(v));
    }
    return out;
}

std::array<real, 2> softmax2(real z0, real z1) {
    real m = std::max(z0, z1);
    real e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
    return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

std::array<real, 2> classifier_forward(const Parameters& p, const ClassifierSpec& spec,
                                       const Tensor& image) {
    Graph g(false);
    auto bp = BoundParams::bind(g, p, false);
    Var logits = classifier_logits(g, bp, spec, g.constant(image));
    return softmax2(logits->value[0], logits->value[1]);
}

// --- serialization -------------------------------------------------------------

namespace {

template <typename T>
void put(std::vector<unsigned char>& out, const T& v) {
    const auto* p = reinterpret_cast<const unsigned char*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T take(const std::vector<unsigned char>& in, size_t& at) {
    if (at + sizeof(T) > in.size()) throw std::runtime_error("parameter blob truncated");
    T v;
    std::memcpy(&v, in.data() + at, sizeof(T));
    at += sizeof(T);
    return v;
}

constexpr char kMagic[4] = {'C', 'G', 'P', 'B'};

}  // namespace

std::vector<unsigned char> serialize_parameters(const Parameters& p) {
    std::vector<unsigned char> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put<uint32_t>(out, 1);
    put<uint64_t>(out, p.size());
    for (const auto& [name, t] : p) {
        put<uint32_t>(out, static_cast<uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put<uint8_t>(out, 0);  // float64
        put<uint32_t>(out, static_cast<uint32_t>(t.rank()));
        for (int i = 0; i < t.rank(); ++i) put<uint64_t>(out, static_cast<uint64_t>(t.dim(i)));
        const auto* d = reinterpret_cast<const unsigned char*>(t.data());
        out.insert(out.end(), d, d + t.numel() * sizeof(real));
    }
    return out;
}

Parameters deserialize_parameters(const std::vector<unsigned char>& bytes) {
    size_t at = 0;
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw std::runtime_error("parameter blob: bad magic");
    at = 4;
    uint32_t version = take<uint32_t>(bytes, at);
    if (version != 1) throw std::runtime_error("parameter blob: unsupported version");
    uint64_t count = take<uint64_t>(bytes, at);
    Parameters p;
    for (uint64_t i = 0; i < count; ++i) {
        uint32_t nlen = take<uint32_t>(bytes, at);
        if (at + nlen > bytes.size()) throw std::runtime_error("parameter blob truncated");
        std::string name(reinterpret_cast<const char*>(bytes.data() + at), nlen);
        at += nlen;
        uint8_t dtype = take<uint8_t>(bytes, at);
        if (dtype != 0) throw std::runtime_error("parameter blob: unsupported dtype");
        uint32_t rank = take<uint32_t>(bytes, at);
        std::vector<int> shape(rank);
        for (auto& d : shape) d = static_cast<int>(take<uint64_t>(bytes, at));
        Tensor t(shape);
        size_t nbytes = static_cast<size_t>(t.numel()) * sizeof(real);
        if (at + nbytes > bytes.size()) throw std::runtime_error("parameter blob truncated");
        std::memcpy(t.data(), bytes.data() + at, nbytes);
        at += nbytes;
        p.add(name, std::move(t));
    }
    return p;
}

void save_parameter_blob(const fs::path& file, const Parameters& p) {
    auto bytes = serialize_parameters(p);
    std::ofstream os(file, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + file.string());
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw std::runtime_error("short write to " + file.string());
}

Parameters load_parameter_blob(const fs::path& file) {
    std::ifstream is(file, std::ios::binary | std::ios::ate);
    if (!is) throw std::runtime_error("cannot read " + file.string());
    std::vector<unsigned char> bytes(static_cast<size_t>(is.tellg()));
    is.seekg(0);
    is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!is) throw std::runtime_error("short read from " + file.string());
    return deserialize_parameters(bytes);
}

std::string content_hash_hex(const Parameters& p) {
    auto bytes = serialize_parameters(p);
    uint64_t h = fnv1a64(bytes.data(), bytes.size());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// --- checkpoints -----------------------------------------------------------------

json CheckpointMeta::to_json() const {
    json j;
    j["format_version"] = format_version;
    j["kind"] = kind;
    j["specs"] = specs;
    j["epoch"] = epoch;
    j["seed"] = seed;
    j["config_hash"] = config_hash;
    j["metrics"] = metrics;
    j["content_hashes"] = content_hashes;
    return j;
}

CheckpointMeta CheckpointMeta::from_json(const json& j) {
    CheckpointMeta m;
    j.at("format_version").get_to(m.format_version);
    j.at("kind").get_to(m.kind);
    m.specs = j.at("specs");
    j.at("epoch").get_to(m.epoch);
    j.at("seed").get_to(m.seed);
    j.at("config_hash").get_to(m.config_hash);
    m.metrics = j.at("metrics");
    j.at("content_hashes").get_to(m.content_hashes);
    return m;
}

void save_checkpoint(const fs::path& dir, const std::map<std::string, Parameters>& parts,
                     CheckpointMeta meta) {
    fs::path tmp = dir;
    tmp += ".tmp";
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    meta.content_hashes.clear();
    for (const auto& [name, p] : parts) {
        save_parameter_blob(tmp / (name + ".bin"), p);
        meta.content_hashes[name] = content_hash_hex(p);
    }
    {
        std::ofstream os(tmp / "meta.json");
        if (!os) throw std::runtime_error("cannot write checkpoint meta under " + tmp.string());
        os << meta.to_json().dump(2) << "\n";
    }
    fs::remove_all(dir);
    fs::rename(tmp, dir);
}

std::pair<std::map<std::string, Parameters>, CheckpointMeta> load_checkpoint(const fs::path& dir) {
    std::ifstream is(dir / "meta.json");
    if (!is) throw std::runtime_error("not a checkpoint directory: " + dir.string());
    CheckpointMeta meta = CheckpointMeta::from_json(json::parse(is));
    std::map<std::string, Parameters> parts;
    for (const auto& [name, hash] : meta.content_hashes) {
        Parameters p = load_parameter_blob(dir / (name + ".bin"));
        if (content_hash_hex(p) != hash)
            throw std::runtime_error("checkpoint blob hash mismatch for " + name);
        parts.emplace(name, std::move(p));
    }
    return {std::move(parts), std::move(meta)};
}

}  // namespace camogen::nn
