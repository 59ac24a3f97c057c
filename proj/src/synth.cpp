#include "camogen/synth.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <stdexcept>

#include "camogen/image_io.hpp"

namespace camogen::synth {

namespace fs = std::filesystem;
using nlohmann::json;

void SynthesisManifest::save(const fs::path& file) const {
    json j;
    j["format_version"] = 1;
    j["created_at"] = created_at;
    j["generator_config"] = generator_config;
    j["base_seed"] = base_seed;
    j["per_sample"] = per_sample;
    j["entries"] = json::array();
    for (const auto& e : entries)
        j["entries"].push_back({{"source_name", e.source_name},
                                {"seed", e.seed},
                                {"output_image_path", e.output_image_path},
                                {"output_mask_path", e.output_mask_path},
                                {"checkpoint_hash", e.checkpoint_hash}});
    std::ofstream os(file);
    if (!os) throw std::runtime_error("cannot write manifest: " + file.string());
    os << j.dump(2) << "\n";
}

SynthesisManifest SynthesisManifest::load(const fs::path& file) {
    std::ifstream is(file);
    if (!is) throw std::runtime_error("cannot read manifest: " + file.string());
    json j = json::parse(is);
    SynthesisManifest m;
    m.created_at = j.at("created_at").get<std::string>();
    m.generator_config = j.at("generator_config");
    m.base_seed = j.at("base_seed").get<uint64_t>();
    m.per_sample = j.at("per_sample").get<int>();
    for (const auto& e : j.at("entries")) {
        SynthesisEntry se;
        se.source_name = e.at("source_name").get<std::string>();
        se.seed = e.at("seed").get<uint64_t>();
        se.output_image_path = e.at("output_image_path").get<std::string>();
        se.output_mask_path = e.at("output_mask_path").get<std::string>();
        se.checkpoint_hash = e.at("checkpoint_hash").get<std::string>();
        m.entries.push_back(std::move(se));
    }
    return m;
}

std::pair<Tensor, Tensor> synthesize_sample(const nn::Parameters& gen,
                                            const nn::GeneratorSpec& spec,
                                            const dataio::Sample& s, uint64_t seed) {
    const int f = spec.downsample_factor();
    if (s.image.dim(1) % f != 0 || s.image.dim(2) % f != 0)
        throw std::invalid_argument("synthesize_sample: sample size incompatible with generator");
    dataio::CompositeInput in = dataio::add_noise(s, seed);
    Tensor xhat = nn::generator_forward(gen, spec, in.data);
    Tensor out(s.image.shape());
    const int H = s.image.dim(1), W = s.image.dim(2);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                real m = s.mask.at(0, y, x);
                out.at(c, y, x) =
                    m == 1.0 ? s.image.at(c, y, x) : xhat.at(c, y, x) * (1.0 - m);
            }
    return {out, s.mask};
}

namespace {

std::string utc_now_iso8601() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

SynthesisManifest expand_dataset(const nn::Parameters& gen, const nn::GeneratorSpec& spec,
                                 const dataio::DatasetManifest& data, int per_sample,
                                 uint64_t base_seed, const fs::path& out, int image_size,
                                 const std::string& checkpoint_hash) {
    if (per_sample < 1) throw std::invalid_argument("expand_dataset: per_sample must be >= 1");
    if (fs::exists(out) && !fs::is_empty(out))
        throw std::runtime_error("expand_dataset: output directory exists and is not empty: " +
                                 out.string());

    const bool created_root = !fs::exists(out);
    fs::create_directories(out / "Image");
    fs::create_directories(out / "GT");

    SynthesisManifest manifest;
    manifest.created_at = utc_now_iso8601();
    manifest.generator_config = spec;
    manifest.base_seed = base_seed;
    manifest.per_sample = per_sample;

    try {
        for (const auto& [image_path, mask_path] : data.pairs) {
            dataio::Sample s = dataio::preprocess(image_path, mask_path, image_size,
                                                  spec.downsample_factor());
            for (int k = 0; k < per_sample; ++k) {
                uint64_t seed = entry_seed(base_seed, s.name, k);
                auto [image, mask] = synthesize_sample(gen, spec, s, seed);
                std::string stem = s.name + "_syn" + std::to_string(k) + ".png";
                fs::path image_file = out / "Image" / stem;
                fs::path mask_file = out / "GT" / stem;
                img::save_image_png(image_file, image);
                img::save_mask_png(mask_file, mask);
                SynthesisEntry e;
                e.source_name = s.name;
                e.seed = seed;
                e.output_image_path = image_file.string();
                e.output_mask_path = mask_file.string();
                e.checkpoint_hash = checkpoint_hash;
                manifest.entries.push_back(std::move(e));
            }
        }
        manifest.save(out / "manifest.json");
    } catch (...) {
        // keep the failure from leaving partial outputs around
        if (created_root)
            fs::remove_all(out);
        else {
            fs::remove_all(out / "Image");
            fs::remove_all(out / "GT");
            fs::remove(out / "manifest.json");
        }
        throw;
    }
    return manifest;
}

}  // namespace camogen::synth
