// Python bindings for the core operations: prior generation, metrics, the
// synthetic dataset pipeline, training/evaluation entry points and the
// gradient-check suite.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "dpmn/harness.hpp"
#include "dpmn/image_ops.hpp"

namespace py = pybind11;
using namespace dpmn;

namespace {

Tensor<double> tensor_from(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    Shape shape;
    for (py::ssize_t d = 0; d < a.ndim(); ++d) shape.push_back(a.shape(d));
    Tensor<double> t(shape);
    std::copy(a.data(), a.data() + t.numel(), t.data());
    return t;
}

py::array_t<double> array_from(const Tensor<double>& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> a(shape);
    std::copy(t.data(), t.data() + t.numel(), a.mutable_data());
    return a;
}

harness::RunConfig config_from(const py::dict& options) {
    harness::RunConfig cfg;
    for (const auto& item : options)
        cfg.set_kv(py::cast<std::string>(item.first), py::cast<std::string>(py::str(item.second)));
    cfg.apply_fixed_window();
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "dual-prior scene-text super-resolution core";
    m.attr("__version__") = "0.1.0";

    m.def("set_threads", &set_threads, py::arg("n"), "worker threads for the compute kernels");

    // priors
    m.def("binarize", [](py::array_t<double, py::array::c_style | py::array::forcecast> image) {
        return array_from(priors::binarize(tensor_from(image)));
    }, py::arg("image"), "Otsu structure mask of an HxWx3 image in [0,1]");
    m.def("recognize", [](py::array_t<double, py::array::c_style | py::array::forcecast> image) {
        priors::Recognition r = priors::recognize(tensor_from(image));
        return py::make_tuple(r.text, r.cell_scores);
    }, py::arg("image"), "template recognition: (label, per-cell scores)");
    m.def("render_graphic_prior", [](const std::string& label) {
        return array_from(priors::render_graphic_prior(label));
    }, py::arg("label"), "two-channel upper/lower glyph render of a label");
    m.def("make_priors", [](py::array_t<double, py::array::c_style | py::array::forcecast> image) {
        priors::PriorPair pp = priors::make_priors(tensor_from(image));
        return py::make_tuple(array_from(pp.graphic), array_from(pp.structure));
    }, py::arg("image"), "(graphic, structure) priors of a 32x128x3 image");

    // metrics
    m.def("psnr", [](py::array_t<double, py::array::c_style | py::array::forcecast> a,
                     py::array_t<double, py::array::c_style | py::array::forcecast> b) {
        return metrics::psnr(tensor_from(a), tensor_from(b));
    });
    m.def("ssim", [](py::array_t<double, py::array::c_style | py::array::forcecast> a,
                     py::array_t<double, py::array::c_style | py::array::forcecast> b) {
        return metrics::ssim(tensor_from(a), tensor_from(b));
    });

    // synthetic data
    m.def("render_hr", [](const std::string& label, u64 seed) {
        return array_from(synth::render_hr(label, seed));
    }, py::arg("label"), py::arg("seed"));
    m.def("degrade_to_lr", [](py::array_t<double, py::array::c_style | py::array::forcecast> hr,
                              const std::string& tier, u64 seed) {
        return array_from(synth::degrade_to_lr(tensor_from(hr), {}, synth::tier_from_name(tier), seed));
    }, py::arg("hr"), py::arg("tier"), py::arg("seed"));
    m.def("bicubic_up2", [](py::array_t<double, py::array::c_style | py::array::forcecast> im) {
        return array_from(img::bicubic_up2(tensor_from(im)));
    });
    m.def("gen_dataset", [](const std::string& out_dir, i64 n_train, i64 n_test_per_tier, u64 seed,
                            bool force) {
        synth::DatasetManifest mf = synth::build_dataset(n_train, n_test_per_tier, seed, out_dir, force);
        return out_dir + "/manifest.csv";
    }, py::arg("out_dir"), py::arg("n_train") = 2000, py::arg("n_test_per_tier") = 200,
       py::arg("seed") = 1, py::arg("force") = false);

    // training / evaluation
    m.def("train_psn", [](const py::dict& options) {
        harness::RunConfig cfg = config_from(options);
        std::ostringstream log;
        harness::RunReport rep = harness::train_psn(cfg, log);
        return py::make_tuple(rep.checkpoint_path, rep.epoch_losses, log.str());
    }, py::arg("options"), "options: dataset, out, epochs, batch, lr, seed, threads, ...");
    m.def("train_dpmn", [](const py::dict& options) {
        harness::RunConfig cfg = config_from(options);
        std::ostringstream log;
        harness::RunReport rep = harness::train_dpmn(cfg, log);
        return py::make_tuple(rep.checkpoint_path, rep.epoch_losses, log.str());
    }, py::arg("options"));
    m.def("evaluate", [](const py::dict& options, const std::string& dpmn_checkpoint) {
        harness::RunConfig cfg = config_from(options);
        std::ostringstream log;
        harness::EvalResult ev = harness::evaluate(cfg, dpmn_checkpoint, log);
        py::list systems;
        for (const harness::SystemEval& se : ev.systems) {
            py::dict d;
            d["system"] = se.system;
            d["alpha"] = se.alpha;
            py::dict tiers;
            for (const harness::TierMetrics& t : se.tiers) {
                py::dict row;
                row["psnr"] = t.psnr;
                row["ssim"] = t.ssim;
                row["accuracy"] = t.accuracy;
                row["n"] = t.n;
                tiers[py::str(t.tier)] = row;
            }
            d["tiers"] = tiers;
            systems.append(d);
        }
        return py::make_tuple(ev.csv_path, systems);
    }, py::arg("options"), py::arg("dpmn_checkpoint") = "");
    m.def("dpmn_forward", [](const std::string& psn_ckpt, const std::string& dpmn_ckpt,
                             py::array_t<double, py::array::c_style | py::array::forcecast> lr,
                             double alpha) {
        net::PsnModel<float> psn = net::PsnModel<float>::load(psn_ckpt);
        net::DpmnModel<float> model = net::DpmnModel<float>::load(dpmn_ckpt);
        NoGradGuard ng;
        auto outs = net::dpmn_forward(tensor_from(lr), model, &psn, net::PsnStrategy::frozen,
                                      net::PriorSource::from_previous, nullptr, alpha);
        py::dict d;
        d["base"] = array_from(outs.base_sr->value.cast<double>());
        d["modulated"] = array_from(outs.modulated->value.cast<double>());
        d["fused"] = array_from(outs.fused->value.cast<double>());
        return d;
    }, py::arg("psn_checkpoint"), py::arg("dpmn_checkpoint"), py::arg("lr_image"),
       py::arg("alpha") = 0.5);

    m.def("gradcheck_suite", [](bool quick) {
        std::ostringstream log;
        harness::SuiteReport rep = harness::gradcheck_suite(quick, log);
        py::list entries;
        for (const harness::SuiteEntry& e : rep.entries) {
            py::dict d;
            d["name"] = e.name;
            d["max_rel"] = e.max_rel;
            d["tol"] = e.tol;
            d["pass"] = e.pass;
            entries.append(d);
        }
        return py::make_tuple(rep.all_pass, entries, log.str());
    }, py::arg("quick") = true);
}
