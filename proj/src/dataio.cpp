#include "camogen/dataio.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include "camogen/image_io.hpp"
#include "camogen/rng.hpp"

namespace camogen::dataio {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool has_ext(const fs::path& p, std::initializer_list<const char*> exts) {
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
    for (const char* x : exts)
        if (e == x) return true;
    return false;
}

std::string split_name(Split s) { return s == Split::train ? "train" : "test"; }

}  // namespace

void DatasetManifest::save(const fs::path& file) const {
    json j;
    j["root"] = root.string();
    j["split"] = split_name(split);
    j["pairs"] = json::array();
    for (const auto& [img, gt] : pairs)
        j["pairs"].push_back({{"image", img.string()}, {"mask", gt.string()}});
    std::ofstream os(file);
    if (!os) throw std::runtime_error("cannot write manifest: " + file.string());
    os << j.dump(2) << "\n";
}

DatasetManifest DatasetManifest::load(const fs::path& file) {
    std::ifstream is(file);
    if (!is) throw std::runtime_error("cannot read manifest: " + file.string());
    json j = json::parse(is);
    DatasetManifest m;
    m.root = j.at("root").get<std::string>();
    m.split = j.at("split").get<std::string>() == "train" ? Split::train : Split::test;
    for (const auto& e : j.at("pairs"))
        m.pairs.emplace_back(e.at("image").get<std::string>(), e.at("mask").get<std::string>());
    return m;
}

DatasetManifest load_dataset(const fs::path& root, Split split) {
    const fs::path image_dir = root / "Image";
    const fs::path gt_dir = root / "GT";
    if (!fs::is_directory(image_dir))
        throw std::runtime_error("missing directory: " + image_dir.string());
    if (!fs::is_directory(gt_dir))
        throw std::runtime_error("missing directory: " + gt_dir.string());

    std::map<std::string, fs::path> images, masks;
    for (const auto& entry : fs::directory_iterator(image_dir)) {
        if (!entry.is_regular_file() || !has_ext(entry.path(), {".jpg", ".jpeg", ".png"}))
            continue;
        images[entry.path().stem().string()] = entry.path();
    }
    for (const auto& entry : fs::directory_iterator(gt_dir)) {
        if (!entry.is_regular_file() || !has_ext(entry.path(), {".png"})) continue;
        masks[entry.path().stem().string()] = entry.path();
    }

    for (const auto& [stem, p] : images)
        if (!masks.count(stem))
            throw std::runtime_error("unpaired image (no mask): " + p.string());
    for (const auto& [stem, p] : masks)
        if (!images.count(stem))
            throw std::runtime_error("unpaired mask (no image): " + p.string());
    if (images.empty()) throw std::runtime_error("no image/mask pairs under " + root.string());

    DatasetManifest m;
    m.root = root;
    m.split = split;
    for (const auto& [stem, p] : images) m.pairs.emplace_back(p, masks.at(stem));
    // std::map iteration is already lexicographic by stem
    return m;
}

Sample preprocess(const fs::path& image_file, const fs::path& mask_file, int target_size,
                  int downsample_factor, ClassTag tag) {
    if (target_size <= 0 || target_size % downsample_factor != 0)
        throw std::invalid_argument("preprocess: target_size must be a positive multiple of " +
                                    std::to_string(downsample_factor));
    Tensor img01 = img::load_rgb(image_file);
    Tensor mask01 = img::load_gray(mask_file);

    img01 = img::resize_bilinear(img01, target_size, target_size);
    mask01 = img::resize_nearest(mask01, target_size, target_size);

    Sample s;
    s.image = Tensor({3, target_size, target_size});
    for (int64_t i = 0; i < s.image.numel(); ++i) {
        real v = img01[i] * 2.0 - 1.0;
        s.image[i] = std::min(real(1), std::max(real(-1), v));
    }
    s.mask = Tensor({1, target_size, target_size});
    for (int64_t i = 0; i < s.mask.numel(); ++i) s.mask[i] = mask01[i] > 0.5 ? 1.0 : 0.0;
    s.name = image_file.stem().string();
    s.class_tag = tag;
    return s;
}

std::pair<Tensor, Tensor> split_foreground(const Sample& s) {
    if (s.image.rank() != 3 || s.mask.rank() != 3 || s.image.dim(1) != s.mask.dim(1) ||
        s.image.dim(2) != s.mask.dim(2))
        throw std::invalid_argument("split_foreground: image/mask shape mismatch");
    const int H = s.image.dim(1), W = s.image.dim(2);
    Tensor fg({3, H, W}), bg({3, H, W});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                real m = s.mask.at(0, y, x);
                real v = s.image.at(c, y, x);
                fg.at(c, y, x) = v * m;
                bg.at(c, y, x) = v * (1.0 - m);
            }
    return {fg, bg};
}

CompositeInput add_noise(const Sample& s, uint64_t seed) {
    if (s.image.rank() != 3 || s.mask.rank() != 3 || s.image.dim(1) != s.mask.dim(1) ||
        s.image.dim(2) != s.mask.dim(2))
        throw std::invalid_argument("add_noise: image/mask shape mismatch");
    const int H = s.image.dim(1), W = s.image.dim(2);
    CompositeInput out;
    out.seed = seed;
    out.source_name = s.name;
    out.data = Tensor({3, H, W});
    Rng rng(seed);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                real z = rng.normal();
                real m = s.mask.at(0, y, x);
                out.data.at(c, y, x) = m == 1.0 ? s.image.at(c, y, x) : z * (1.0 - m);
            }
    return out;
}

bool degenerate_mask(const Tensor& mask) {
    bool any_fg = false, any_bg = false;
    for (int64_t i = 0; i < mask.numel(); ++i) {
        if (mask[i] > 0.5)
            any_fg = true;
        else
            any_bg = true;
        if (any_fg && any_bg) return false;
    }
    return true;
}

}  // namespace camogen::dataio
