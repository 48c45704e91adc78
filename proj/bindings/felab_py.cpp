#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "felab/dataset.hpp"
#include "felab/metrics.hpp"
#include "felab/report.hpp"
#include "felab/system.hpp"
#include "felab/trainer.hpp"

namespace py = pybind11;
using namespace felab;

namespace {

py::array_t<double> to_numpy(const Tensor& t) {
    py::array_t<double> arr({t.rows(), t.cols()});
    auto buf = arr.mutable_unchecked<2>();
    for (int r = 0; r < t.rows(); ++r)
        for (int c = 0; c < t.cols(); ++c) buf(r, c) = t.at(r, c);
    return arr;
}

Tensor from_numpy(py::array_t<double, py::array::c_style | py::array::forcecast> arr) {
    if (arr.ndim() == 1) {
        Tensor t({1, static_cast<int>(arr.shape(0))});
        auto buf = arr.unchecked<1>();
        for (int c = 0; c < t.cols(); ++c) t.at(0, c) = buf(c);
        return t;
    }
    if (arr.ndim() != 2) throw ShapeError("expected a 1-d or 2-d array");
    Tensor t({static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1))});
    auto buf = arr.unchecked<2>();
    for (int r = 0; r < t.rows(); ++r)
        for (int c = 0; c < t.cols(); ++c) t.at(r, c) = buf(r, c);
    return t;
}

std::vector<double> vec_from_numpy(py::array_t<double, py::array::c_style> arr) {
    if (arr.ndim() != 1) throw ShapeError("expected a 1-d array");
    std::vector<double> v(static_cast<std::size_t>(arr.shape(0)));
    auto buf = arr.unchecked<1>();
    for (py::ssize_t i = 0; i < arr.shape(0); ++i) v[static_cast<std::size_t>(i)] = buf(i);
    return v;
}

// Owns everything a trained model needs for downstream evaluation.
struct Run {
    ModelConfig config;
    TrainState state;
    TrainHistory history;

    py::array_t<double> recon_errors(py::array_t<double, py::array::c_style> x) {
        Tensor xt = from_numpy(x);
        auto re = recon_error_per_level(state.params, config, xt);
        py::array_t<double> arr(static_cast<py::ssize_t>(re.size()));
        auto buf = arr.mutable_unchecked<1>();
        for (std::size_t i = 0; i < re.size(); ++i) buf(static_cast<py::ssize_t>(i)) = re[i];
        return arr;
    }

    py::array_t<double> latents(py::array_t<double, py::array::c_style> x) {
        return to_numpy(latent_responses(state.params, config, from_numpy(x)));
    }

    py::list history_list() {
        py::list out;
        for (const auto& p : history.points) {
            py::dict d;
            d["iteration"] = p.iteration;
            d["re"] = p.re;
            d["kl"] = p.kl;
            d["loss_encoder"] = p.loss_encoder;
            d["loss_decoder"] = p.loss_decoder;
            out.append(d);
        }
        return out;
    }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "progressive autoencoder lab: synthetic systems, training, and evaluation metrics";

    py::register_exception<ConfigError>(m, "FelabConfigError", PyExc_ValueError);
    py::register_exception<IoError>(m, "FelabIoError", PyExc_IOError);
    py::register_exception<NumericError>(m, "FelabNumericError", PyExc_ArithmeticError);

    py::class_<SystemSpec>(m, "SystemSpec")
        .def_readonly("n_inputs", &SystemSpec::n_inputs)
        .def_readonly("n_outputs", &SystemSpec::n_outputs)
        .def_readonly("noise_std", &SystemSpec::noise_std)
        .def_property_readonly("kind",
                               [](const SystemSpec& s) {
                                   return s.kind == SystemKind::Nonlinear ? "nonlinear"
                                                                          : "linear";
                               })
        .def("digest", &SystemSpec::digest)
        .def("to_json", &SystemSpec::to_json)
        .def("save", &SystemSpec::save)
        .def_static("load", &SystemSpec::load)
        .def(
            "evaluate",
            [](const SystemSpec& spec, py::array_t<double, py::array::c_style> s, bool noise,
               std::uint64_t seed) {
                Rng rng(seed);
                auto v = evaluate(spec, vec_from_numpy(s), noise, &rng);
                return py::array_t<double>(py::cast(v));
            },
            py::arg("s"), py::arg("noise") = false, py::arg("seed") = 0)
        .def(
            "traversal",
            [](const SystemSpec& spec, int factor, int points) {
                return to_numpy(traversal_curves(spec, factor, traversal_grid(-2, 2, points)));
            },
            py::arg("factor"), py::arg("points") = 41);

    m.def(
        "build_system",
        [](std::uint64_t seed, const std::string& kind, int n_inputs, int n_outputs,
           std::optional<std::vector<double>> importance, double noise_std) {
            SystemKind k;
            if (kind == "nonlinear")
                k = SystemKind::Nonlinear;
            else if (kind == "linear")
                k = SystemKind::Linear;
            else
                throw ConfigError("kind must be nonlinear or linear");
            std::vector<double> imp = importance.value_or(kDefaultImportance);
            if (!importance.has_value() && n_inputs != 5) {
                imp.resize(n_inputs);
                for (int i = 0; i < n_inputs; ++i)
                    imp[i] = std::max(1.0 - 0.2 * std::max(i - 1, 0), 0.2);
            }
            return build_system(seed, k, n_inputs, n_outputs, imp, noise_std);
        },
        py::arg("seed"), py::arg("kind") = "nonlinear", py::arg("n_inputs") = 5,
        py::arg("n_outputs") = 48, py::arg("importance") = std::nullopt,
        py::arg("noise_std") = 0.125);

    py::class_<Dataset>(m, "Dataset")
        .def_property_readonly("S", [](const Dataset& d) { return to_numpy(d.S); })
        .def_property_readonly("X", [](const Dataset& d) { return to_numpy(d.X); })
        .def_readonly("spec_digest", &Dataset::spec_digest)
        .def_readonly("noise_std", &Dataset::noise_std)
        .def_property_readonly("n_rows", &Dataset::n_rows)
        .def("save", &Dataset::save)
        .def_static("load", &Dataset::load);

    m.def("sample_dataset", &sample_dataset, py::arg("spec"), py::arg("n"), py::arg("seed"));

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init([](int n_latents, bool supervised, int label_dim, int n_outputs,
                         int median_dim, double drop_ratio, double xi, double alpha, double beta,
                         const std::string& patch_rule, bool baseline_vae, bool linear_activation,
                         bool teacher_forcing) {
                 ModelConfig c;
                 c.n_latents = n_latents;
                 c.supervised = supervised;
                 c.label_dim = label_dim;
                 c.n_outputs = n_outputs;
                 c.median_dim = median_dim;
                 c.drop_ratio = drop_ratio;
                 c.xi = xi;
                 c.alpha = alpha;
                 c.beta = beta;
                 c.patch_rule =
                     patch_rule == "additive" ? PatchRule::Additive : PatchRule::TwoStep;
                 c.baseline_vae = baseline_vae;
                 c.linear_activation = linear_activation;
                 c.teacher_forcing = teacher_forcing;
                 c.validate();
                 return c;
             }),
             py::arg("n_latents") = 6, py::arg("supervised") = false, py::arg("label_dim") = 0,
             py::arg("n_outputs") = 48, py::arg("median_dim") = 50, py::arg("drop_ratio") = 0.2,
             py::arg("xi") = 1.0, py::arg("alpha") = 2.0 / 3.0, py::arg("beta") = 1.0,
             py::arg("patch_rule") = "two-step", py::arg("baseline_vae") = false,
             py::arg("linear_activation") = false, py::arg("teacher_forcing") = false)
        .def_readonly("n_latents", &ModelConfig::n_latents)
        .def_readonly("beta", &ModelConfig::beta)
        .def("levels", &ModelConfig::levels)
        .def("to_json", &ModelConfig::to_json);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init([](int iterations, int batch_size, double lr, int dataset_size,
                         int eval_rows, std::uint64_t seed, int eval_every) {
                 TrainConfig c;
                 c.iterations = iterations;
                 c.batch_size = batch_size;
                 c.lr = lr;
                 c.dataset_size = dataset_size;
                 c.eval_rows = eval_rows;
                 c.seed = seed;
                 c.eval_every = eval_every;
                 return c;
             }),
             py::arg("iterations") = 20000, py::arg("batch_size") = 500, py::arg("lr") = 1e-3,
             py::arg("dataset_size") = -1, py::arg("eval_rows") = 1000, py::arg("seed") = 1,
             py::arg("eval_every") = 250);

    py::class_<Run>(m, "Run")
        .def_property_readonly("config", [](const Run& r) { return r.config; })
        .def_property_readonly("iteration", [](const Run& r) { return r.state.iteration; })
        .def("history", &Run::history_list)
        .def("recon_errors", &Run::recon_errors, py::arg("x"))
        .def("latents", &Run::latents, py::arg("x"))
        .def("save_checkpoint", [](const Run& r, const std::string& path) {
            save_checkpoint(path, r.state, r.config);
        });

    m.def(
        "train",
        [](const Dataset& ds, const ModelConfig& mcfg, const TrainConfig& tcfg) {
            TrainResult res = train_run(ds, mcfg, tcfg);
            auto run = std::make_unique<Run>();
            run->config = mcfg;
            run->state = std::move(res.state);
            run->history = std::move(res.history);
            return run;
        },
        py::arg("dataset"), py::arg("model_config"), py::arg("train_config"),
        py::call_guard<py::gil_scoped_release>());

    m.def(
        "load_checkpoint",
        [](const std::string& path) {
            Checkpoint ck = load_checkpoint(path);
            auto run = std::make_unique<Run>();
            run->config = ck.config;
            run->state = std::move(ck.state);
            return run;
        },
        py::arg("path"));

    m.def(
        "ksg_mi",
        [](py::array_t<double, py::array::c_style> a, py::array_t<double, py::array::c_style> b,
           int k) { return ksg_mi(vec_from_numpy(a), vec_from_numpy(b), k).nats; },
        py::arg("a"), py::arg("b"), py::arg("k") = 3);

    m.def(
        "mi_matrix",
        [](py::array_t<double, py::array::c_style> latents,
           py::array_t<double, py::array::c_style> factors, int k) {
            return to_numpy(mi_matrix(from_numpy(latents), from_numpy(factors), k));
        },
        py::arg("latents"), py::arg("factors"), py::arg("k") = 3);

    m.def(
        "stability_score",
        [](py::array_t<double, py::array::c_style> a, py::array_t<double, py::array::c_style> b) {
            StabilityResult st = stability_score(from_numpy(a), from_numpy(b));
            return py::make_tuple(py::array_t<double>(py::cast(st.per_latent)), st.mean);
        },
        py::arg("run_a"), py::arg("run_b"));

    m.def(
        "pca_oracle",
        [](py::array_t<double, py::array::c_style> x, int k) {
            PcaResult r = pca_oracle(from_numpy(x), k);
            return py::make_tuple(to_numpy(r.components),
                                  py::array_t<double>(py::cast(r.eigenvalues)),
                                  r.truncation_mse);
        },
        py::arg("x"), py::arg("k"));

    m.def(
        "principal_angles",
        [](py::array_t<double, py::array::c_style> u, py::array_t<double, py::array::c_style> v) {
            return py::array_t<double>(py::cast(principal_angles(from_numpy(u), from_numpy(v))));
        },
        py::arg("u"), py::arg("v"));

    m.def("spearman",
          [](py::array_t<double, py::array::c_style> x,
             py::array_t<double, py::array::c_style> y) {
              return spearman(vec_from_numpy(x), vec_from_numpy(y));
          });
}
