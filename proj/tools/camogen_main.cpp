#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "camogen/config.hpp"
#include "camogen/dataio.hpp"
#include "camogen/metrics.hpp"
#include "camogen/netarch.hpp"
#include "camogen/synth.hpp"
#include "camogen/trainloop.hpp"

namespace fs = std::filesystem;
using namespace camogen;

namespace {

// frozen random extractor used when no pretrained weights are supplied in
// desk mode; fixed so every desk run sees the same feature network
constexpr uint64_t kDeskExtractorSeed = 0x7fe41a2bc93ULL;

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out;
};

config::RunConfig prepare_run_dir(const CommonArgs& args) {
    config::RunConfig cfg = config::load_config(
        args.config_path.empty() ? fs::path() : fs::path(args.config_path), args.overrides);
    fs::create_directories(args.out);
    config::write_config_echo(fs::path(args.out) / "config.echo.json", cfg);
    return cfg;
}

int run_train_classifier(const CommonArgs& args, const std::string& camo_dir,
                         const std::string& normal_dir) {
    config::RunConfig cfg = prepare_run_dir(args);
    auto camo = dataio::load_dataset(camo_dir, dataio::Split::train);
    auto normal = dataio::load_dataset(normal_dir, dataio::Split::train);
    train::ClassifierTrainOptions opt;
    opt.out_dir = args.out;
    auto result = train::train_classifier(camo, normal, cfg.classifier, cfg.train, opt);
    std::cout << "classifier checkpoint: " << result.checkpoint_dir.string() << "\n"
              << "best training accuracy: " << result.best_accuracy << " after "
              << result.steps_run << " steps\n";
    return 0;
}

int run_train_gan(const CommonArgs& args, const std::string& data_dir,
                  const std::string& classifier_ckpt, const std::string& extractor_ckpt,
                  const std::string& resume_from) {
    config::RunConfig cfg = prepare_run_dir(args);
    auto data = dataio::load_dataset(data_dir, dataio::Split::train);

    auto [cls_parts, cls_meta] = nn::load_checkpoint(classifier_ckpt);
    train::FrozenNets frozen;
    frozen.classifier = cls_parts.at("classifier").clone();
    frozen.classifier_spec = cls_meta.specs.at("classifier").get<nn::ClassifierSpec>();

    if (!extractor_ckpt.empty()) {
        auto [ext_parts, ext_meta] = nn::load_checkpoint(extractor_ckpt);
        frozen.extractor = ext_parts.at("extractor").clone();
        frozen.extractor_spec = ext_meta.specs.at("extractor").get<nn::ExtractorSpec>();
    } else if (cfg.train.desk_mode) {
        frozen.extractor_spec = cfg.extractor;
        frozen.extractor = nn::build_extractor(frozen.extractor_spec, kDeskExtractorSeed);
    } else {
        throw std::runtime_error(
            "train-gan needs --extractor-ckpt (pretrained feature weights) unless desk_mode=true");
    }

    train::GanTrainOptions opt;
    opt.out_dir = args.out;
    opt.config_hash = cfg.hash();
    if (!resume_from.empty()) opt.resume_from = resume_from;
    auto result = train::train_gan(data, frozen, cfg.generator, cfg.discriminator, cfg.train,
                                   cfg.weights, opt);
    std::cout << "finished at epoch " << result.last_epoch << "; checkpoint: "
              << result.last_checkpoint.string() << "\n";
    return 0;
}

int run_synthesize(const CommonArgs& args, const std::string& generator_ckpt,
                   const std::string& data_dir, int per_sample_flag, int64_t seed_flag) {
    CommonArgs with_flags = args;
    if (per_sample_flag > 0)
        with_flags.overrides.push_back("per_sample=" + std::to_string(per_sample_flag));
    if (seed_flag >= 0) with_flags.overrides.push_back("seed=" + std::to_string(seed_flag));
    config::RunConfig cfg = prepare_run_dir(with_flags);

    auto [parts, meta] = nn::load_checkpoint(generator_ckpt);
    nn::Parameters gen = parts.at("generator").clone();
    nn::GeneratorSpec spec = meta.specs.at("generator").get<nn::GeneratorSpec>();
    std::string hash = meta.content_hashes.at("generator");

    auto data = dataio::load_dataset(data_dir, dataio::Split::train);
    fs::path dataset_dir = fs::path(args.out) / "dataset";
    auto manifest = synth::expand_dataset(gen, spec, data, cfg.per_sample, cfg.train.seed,
                                          dataset_dir, cfg.train.image_size, hash);
    std::cout << "wrote " << manifest.entries.size() << " synthesized pairs under "
              << dataset_dir.string() << "\n";
    return 0;
}

int run_evaluate(const std::string& pred_dir, const std::string& gt_dir, const std::string& out,
                 bool print_table) {
    auto report = metrics::evaluate_directory(pred_dir, gt_dir);
    if (!out.empty()) {
        if (fs::path(out).has_parent_path())
            fs::create_directories(fs::path(out).parent_path());
        report.save(out);
    }
    if (print_table)
        std::cout << report.to_table();
    else {
        char line[160];
        std::snprintf(line, sizeof(line),
                      "count %d  S_a %.4f  E_phi %.4f  F_w %.4f  MAE %.4f\n", report.count,
                      report.mean_s, report.mean_e, report.mean_fw, report.mean_mae);
        std::cout << line;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"camouflage background synthesis and detection-metric toolkit"};
    app.require_subcommand(1);

    CommonArgs common;

    auto add_common = [&](CLI::App* sub, bool need_out = true) {
        sub->add_option("--config", common.config_path, "JSON config file");
        sub->add_option("--override", common.overrides,
                        "key=value settings applied after the config file");
        auto* o = sub->add_option("--out", common.out, "run directory");
        if (need_out) o->required();
    };

    // train-classifier
    std::string camo_dir, normal_dir;
    auto* sc = app.add_subcommand("train-classifier",
                                  "pretrain the camouflage/normal classifier");
    sc->add_option("--camo-dir", camo_dir, "camouflage dataset root (Image/ + GT/)")->required();
    sc->add_option("--normal-dir", normal_dir, "normal dataset root (Image/ + GT/)")->required();
    add_common(sc);

    // train-gan
    std::string data_dir, classifier_ckpt, extractor_ckpt, resume_from;
    auto* sg = app.add_subcommand("train-gan", "train the background generator");
    sg->add_option("--data-dir", data_dir, "training dataset root (Image/ + GT/)")->required();
    sg->add_option("--classifier-ckpt", classifier_ckpt, "pretrained classifier checkpoint")
        ->required();
    sg->add_option("--extractor-ckpt", extractor_ckpt,
                   "perceptual feature network checkpoint (optional in desk mode)");
    sg->add_option("--resume", resume_from, "checkpoint directory to resume from");
    add_common(sg);

    // synthesize
    std::string generator_ckpt, syn_data_dir;
    int per_sample = -1;
    int64_t seed = -1;
    auto* ss = app.add_subcommand("synthesize", "expand a dataset with synthesized pairs");
    ss->add_option("--generator-ckpt", generator_ckpt, "trained generator checkpoint")
        ->required();
    ss->add_option("--data-dir", syn_data_dir, "source dataset root (Image/ + GT/)")->required();
    ss->add_option("--per-sample", per_sample, "synthesized images per source");
    ss->add_option("--seed", seed, "base seed for reproducible synthesis");
    add_common(ss);

    // evaluate
    std::string pred_dir, gt_dir, report_out;
    bool table = false;
    auto* se = app.add_subcommand("evaluate", "score predictions with the four metrics");
    se->add_option("--pred-dir", pred_dir, "directory of grayscale predictions")->required();
    se->add_option("--gt-dir", gt_dir, "directory of ground-truth masks")->required();
    se->add_option("--out", report_out, "report JSON path");
    se->add_flag("--table", table, "print the full per-image table");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << e.what() << "\n" << app.help();
        return 1;
    }

    try {
        if (sc->parsed()) return run_train_classifier(common, camo_dir, normal_dir);
        if (sg->parsed())
            return run_train_gan(common, data_dir, classifier_ckpt, extractor_ckpt, resume_from);
        if (ss->parsed())
            return run_synthesize(common, generator_ckpt, syn_data_dir, per_sample, seed);
        if (se->parsed()) return run_evaluate(pred_dir, gt_dir, report_out, table);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
