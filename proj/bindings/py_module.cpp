#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "camogen/config.hpp"
#include "camogen/dataio.hpp"
#include "camogen/losses.hpp"
#include "camogen/metrics.hpp"
#include "camogen/netarch.hpp"
#include "camogen/synth.hpp"
#include "camogen/trainloop.hpp"

namespace py = pybind11;
using namespace camogen;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor tensor_from(const Array& a) {
    std::vector<int> shape(a.ndim());
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<size_t>(i)] =
        static_cast<int>(a.shape(i));
    Tensor t(shape);
    std::copy(a.data(), a.data() + a.size(), t.data());
    return t;
}

py::array tensor_to(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> a(shape);
    std::copy(t.data(), t.data() + t.numel(), a.mutable_data());
    return a;
}

dataio::Sample sample_from(const Array& image, const Array& mask, const std::string& name) {
    dataio::Sample s;
    s.image = tensor_from(image);
    s.mask = tensor_from(mask);
    s.name = name;
    return s;
}

metrics::PredictionPair pair_from(const Array& pred, const Array& gt) {
    return metrics::make_pair(tensor_from(pred), tensor_from(gt), "pair");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "camouflage background synthesis core";

    // dataio
    m.def(
        "add_noise",
        [](const Array& image, const Array& mask, uint64_t seed) {
            return tensor_to(dataio::add_noise(sample_from(image, mask, "py"), seed).data);
        },
        py::arg("image"), py::arg("mask"), py::arg("seed"),
        "Noise composite of a (3,H,W) image in [-1,1] and a (1,H,W) 0/1 mask");
    m.def(
        "split_foreground",
        [](const Array& image, const Array& mask) {
            auto [fg, bg] = dataio::split_foreground(sample_from(image, mask, "py"));
            return py::make_tuple(tensor_to(fg), tensor_to(bg));
        },
        py::arg("image"), py::arg("mask"));
    m.def(
        "preprocess",
        [](const std::string& image_file, const std::string& mask_file, int target_size) {
            auto s = dataio::preprocess(image_file, mask_file, target_size);
            return py::make_tuple(tensor_to(s.image), tensor_to(s.mask));
        },
        py::arg("image_file"), py::arg("mask_file"), py::arg("target_size"));

    // metrics
    m.def("mae", [](const Array& p, const Array& g) { return metrics::mae(pair_from(p, g)); });
    m.def(
        "s_measure",
        [](const Array& p, const Array& g, real alpha) {
            return metrics::s_measure(pair_from(p, g), alpha);
        },
        py::arg("pred"), py::arg("gt"), py::arg("alpha") = 0.5);
    m.def("e_measure",
          [](const Array& p, const Array& g) { return metrics::e_measure(pair_from(p, g)); });
    m.def("weighted_f_measure", [](const Array& p, const Array& g) {
        return metrics::weighted_f_measure(pair_from(p, g));
    });
    m.def(
        "evaluate_directory",
        [](const std::string& pred_dir, const std::string& gt_dir) {
            auto r = metrics::evaluate_directory(pred_dir, gt_dir);
            py::dict d;
            d["count"] = r.count;
            d["S"] = r.mean_s;
            d["E"] = r.mean_e;
            d["Fw"] = r.mean_fw;
            d["MAE"] = r.mean_mae;
            return d;
        },
        py::arg("pred_dir"), py::arg("gt_dir"));

    // losses
    m.def("gan_loss_d", [](const std::vector<Array>& real_logits,
                           const std::vector<Array>& fake_logits) {
        std::vector<Tensor> r, f;
        for (const auto& a : real_logits) r.push_back(tensor_from(a));
        for (const auto& a : fake_logits) f.push_back(tensor_from(a));
        return losses::gan_loss_d(r, f);
    });
    m.def(
        "gan_loss_g",
        [](const std::vector<Array>& fake_logits, bool saturating) {
            std::vector<Tensor> f;
            for (const auto& a : fake_logits) f.push_back(tensor_from(a));
            return losses::gan_loss_g(f, saturating);
        },
        py::arg("fake_logits"), py::arg("saturating") = false);
    m.def("feature_matching_loss", [](const std::vector<std::vector<Array>>& real_feats,
                                      const std::vector<std::vector<Array>>& fake_feats) {
        std::vector<std::vector<Tensor>> r, f;
        for (const auto& s : real_feats) {
            r.emplace_back();
            for (const auto& a : s) r.back().push_back(tensor_from(a));
        }
        for (const auto& s : fake_feats) {
            f.emplace_back();
            for (const auto& a : s) f.back().push_back(tensor_from(a));
        }
        return losses::feature_matching_loss(r, f);
    });
    m.def(
        "total_generator_loss",
        [](real gan_g, real gan_d, real fm, real vgg, real cam, real lambda_fm, real lambda_vgg,
           real lambda_cam, real lambda_g) {
            losses::LossWeights w{lambda_fm, lambda_vgg, lambda_cam, lambda_g};
            auto b = losses::total_generator_loss(gan_g, gan_d, fm, vgg, cam, w);
            py::dict d;
            d["gan_g"] = b.gan_g;
            d["gan_d"] = b.gan_d;
            d["fm"] = b.fm;
            d["vgg"] = b.vgg;
            d["cam"] = b.cam;
            d["total"] = b.total;
            return d;
        },
        py::arg("gan_g"), py::arg("gan_d"), py::arg("fm"), py::arg("vgg"), py::arg("cam"),
        py::arg("lambda_fm") = 10.0, py::arg("lambda_vgg") = 10.0, py::arg("lambda_cam") = 1.0,
        py::arg("lambda_g") = 1.0);

    // schedule
    m.def(
        "lr_schedule",
        [](int epoch, real lr, int total_epochs, int constant_epochs) {
            train::TrainConfig cfg;
            cfg.lr = lr;
            cfg.total_epochs = total_epochs;
            cfg.constant_epochs = constant_epochs;
            return train::lr_schedule(epoch, cfg);
        },
        py::arg("epoch"), py::arg("lr") = 2e-4, py::arg("total_epochs") = 400,
        py::arg("constant_epochs") = 100);

    // generator: build, load, run
    py::class_<nn::GeneratorSpec>(m, "GeneratorSpec")
        .def(py::init<>())
        .def_readwrite("base_width", &nn::GeneratorSpec::base_width)
        .def_readwrite("n_downsample", &nn::GeneratorSpec::n_downsample)
        .def_readwrite("n_res_blocks", &nn::GeneratorSpec::n_res_blocks)
        .def_static("desk", &nn::GeneratorSpec::desk);

    struct PyGenerator {
        nn::GeneratorSpec spec;
        nn::Parameters params;
        std::string hash;
    };
    py::class_<PyGenerator>(m, "Generator")
        .def_static(
            "build",
            [](const nn::GeneratorSpec& spec, uint64_t seed) {
                PyGenerator g{spec, nn::build_generator(spec, seed), ""};
                g.hash = nn::content_hash_hex(g.params);
                return g;
            },
            py::arg("spec"), py::arg("seed"))
        .def_static(
            "load",
            [](const std::string& ckpt_dir) {
                auto [parts, meta] = nn::load_checkpoint(ckpt_dir);
                PyGenerator g;
                g.spec = meta.specs.at("generator").get<nn::GeneratorSpec>();
                g.params = parts.at("generator").clone();
                g.hash = meta.content_hashes.at("generator");
                return g;
            },
            py::arg("ckpt_dir"))
        .def("forward",
             [](const PyGenerator& g, const Array& x) {
                 return tensor_to(nn::generator_forward(g.params, g.spec, tensor_from(x)));
             })
        .def(
            "synthesize",
            [](const PyGenerator& g, const Array& image, const Array& mask, uint64_t seed) {
                auto [img, msk] =
                    synth::synthesize_sample(g.params, g.spec, sample_from(image, mask, "py"), seed);
                return py::make_tuple(tensor_to(img), tensor_to(msk));
            },
            py::arg("image"), py::arg("mask"), py::arg("seed"))
        .def_property_readonly("hash", [](const PyGenerator& g) { return g.hash; });

    m.def(
        "expand_dataset",
        [](const std::string& generator_ckpt, const std::string& data_dir, int per_sample,
           uint64_t base_seed, const std::string& out, int image_size) {
            auto [parts, meta] = nn::load_checkpoint(generator_ckpt);
            auto spec = meta.specs.at("generator").get<nn::GeneratorSpec>();
            auto data = dataio::load_dataset(data_dir, dataio::Split::train);
            auto manifest =
                synth::expand_dataset(parts.at("generator"), spec, data, per_sample, base_seed,
                                      out, image_size, meta.content_hashes.at("generator"));
            return static_cast<int>(manifest.entries.size());
        },
        py::arg("generator_ckpt"), py::arg("data_dir"), py::arg("per_sample"),
        py::arg("base_seed"), py::arg("out"), py::arg("image_size"));
}
