#include "camogen/config.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "camogen/rng.hpp"

namespace camogen::config {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kKeys[] = {"image_size", "batch_size",  "lr",          "total_epochs",
                       "constant_epochs", "seed",   "lambda_fm",   "lambda_vgg",
                       "lambda_cam",  "lambda_g",   "n_scales",    "base_width",
                       "n_res_blocks", "per_sample", "desk_mode",  "adam_beta1",
                       "adam_beta2"};

bool known_key(const std::string& k) {
    for (const char* key : kKeys)
        if (k == key) return true;
    return false;
}

int as_int(const json& v, const std::string& key) {
    if (!v.is_number_integer())
        throw std::invalid_argument("config key '" + key + "' expects an integer");
    return v.get<int>();
}

uint64_t as_u64(const json& v, const std::string& key) {
    if (!v.is_number_integer() && !v.is_number_unsigned())
        throw std::invalid_argument("config key '" + key + "' expects an integer");
    return v.get<uint64_t>();
}

real as_real(const json& v, const std::string& key) {
    if (!v.is_number())
        throw std::invalid_argument("config key '" + key + "' expects a number");
    return v.get<real>();
}

bool as_bool(const json& v, const std::string& key) {
    if (!v.is_boolean())
        throw std::invalid_argument("config key '" + key + "' expects true/false");
    return v.get<bool>();
}

// parses an override value string as JSON scalar (numbers, true/false);
// anything unparseable is passed through as a string and will fail the type
// check with a clear message
json parse_override_value(const std::string& raw) {
    json v = json::parse(raw, nullptr, false);
    if (v.is_discarded()) return json(raw);
    return v;
}

void apply(RunConfig& c, const std::string& key, const json& v) {
    if (!known_key(key)) throw std::invalid_argument("unknown config key '" + key + "'");
    if (key == "image_size") c.train.image_size = as_int(v, key);
    else if (key == "batch_size") c.train.batch_size = as_int(v, key);
    else if (key == "lr") c.train.lr = as_real(v, key);
    else if (key == "total_epochs") c.train.total_epochs = as_int(v, key);
    else if (key == "constant_epochs") c.train.constant_epochs = as_int(v, key);
    else if (key == "seed") c.train.seed = as_u64(v, key);
    else if (key == "adam_beta1") c.train.adam_beta1 = as_real(v, key);
    else if (key == "adam_beta2") c.train.adam_beta2 = as_real(v, key);
    else if (key == "lambda_fm") c.weights.lambda_fm = as_real(v, key);
    else if (key == "lambda_vgg") c.weights.lambda_vgg = as_real(v, key);
    else if (key == "lambda_cam") c.weights.lambda_cam = as_real(v, key);
    else if (key == "lambda_g") c.weights.lambda_g = as_real(v, key);
    else if (key == "n_scales") {
        c.discriminator.n_scales = as_int(v, key);
        c.classifier.n_scales = as_int(v, key);
    } else if (key == "base_width") {
        c.generator.base_width = as_int(v, key);
        c.discriminator.base_width = as_int(v, key);
        c.classifier.base_width = as_int(v, key);
    } else if (key == "n_res_blocks") c.generator.n_res_blocks = as_int(v, key);
    else if (key == "per_sample") c.per_sample = as_int(v, key);
    else if (key == "desk_mode") c.train.desk_mode = as_bool(v, key);
}

}  // namespace

json RunConfig::to_json() const {
    json j;
    j["image_size"] = train.image_size;
    j["batch_size"] = train.batch_size;
    j["lr"] = train.lr;
    j["total_epochs"] = train.total_epochs;
    j["constant_epochs"] = train.constant_epochs;
    j["seed"] = train.seed;
    j["adam_beta1"] = train.adam_beta1;
    j["adam_beta2"] = train.adam_beta2;
    j["lambda_fm"] = weights.lambda_fm;
    j["lambda_vgg"] = weights.lambda_vgg;
    j["lambda_cam"] = weights.lambda_cam;
    j["lambda_g"] = weights.lambda_g;
    j["n_scales"] = discriminator.n_scales;
    j["base_width"] = generator.base_width;
    j["n_res_blocks"] = generator.n_res_blocks;
    j["per_sample"] = per_sample;
    j["desk_mode"] = train.desk_mode;
    return j;
}

std::string RunConfig::hash() const {
    std::string dump = to_json().dump();
    uint64_t h = fnv1a64(dump);
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

RunConfig resolve_config(const json& file_values, const std::vector<std::string>& overrides) {
    if (!file_values.is_object())
        throw std::invalid_argument("config file must hold a JSON object");

    // desk_mode decides the preset baseline, so resolve it first from
    // wherever it is mentioned last (override wins over file)
    bool desk = false;
    if (file_values.contains("desk_mode")) desk = as_bool(file_values["desk_mode"], "desk_mode");
    std::vector<std::pair<std::string, json>> parsed_overrides;
    for (const auto& ov : overrides) {
        auto eq = ov.find('=');
        if (eq == std::string::npos || eq == 0)
            throw std::invalid_argument("override must look like key=value: '" + ov + "'");
        std::string key = ov.substr(0, eq);
        json value = parse_override_value(ov.substr(eq + 1));
        if (!known_key(key)) throw std::invalid_argument("unknown config key '" + key + "'");
        if (key == "desk_mode") desk = as_bool(value, key);
        parsed_overrides.emplace_back(std::move(key), std::move(value));
    }

    RunConfig c;
    if (desk) {
        c.generator = nn::GeneratorSpec::desk();
        c.discriminator = nn::DiscriminatorSpec::desk();
        c.classifier = nn::ClassifierSpec::desk();
        c.extractor = nn::ExtractorSpec::desk();
        c.train.desk_mode = true;
    }

    for (const auto& [key, value] : file_values.items()) apply(c, key, value);
    for (const auto& [key, value] : parsed_overrides) apply(c, key, value);

    c.train.validate();
    c.weights.validate();
    c.generator.validate();
    c.discriminator.validate();
    c.classifier.validate();
    c.extractor.validate();
    if (c.per_sample < 1) throw std::invalid_argument("per_sample must be >= 1");
    return c;
}

RunConfig load_config(const fs::path& file, const std::vector<std::string>& overrides) {
    json values = json::object();
    if (!file.empty()) {
        std::ifstream is(file);
        if (!is) throw std::invalid_argument("cannot read config file: " + file.string());
        std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
        // a blank file means "all defaults"
        if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
            values = json::parse(text, nullptr, false);
            if (values.is_discarded())
                throw std::invalid_argument("config file is not valid JSON: " + file.string());
            if (values.is_null()) values = json::object();
        }
    }
    return resolve_config(values, overrides);
}

void write_config_echo(const fs::path& file, const RunConfig& cfg) {
    std::ofstream os(file);
    if (!os) throw std::runtime_error("cannot write config echo: " + file.string());
    os << cfg.to_json().dump(2) << "\n";
}

}  // namespace camogen::config
