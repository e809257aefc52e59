// Python surface over the core engine: spectral windows, simulation,
// detector training, replay, MoN selection and corpus reconstruction.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "neuromon/classifier.hpp"
#include "neuromon/errors.hpp"
#include "neuromon/mon_select.hpp"
#include "neuromon/monitor.hpp"
#include "neuromon/reconstruct.hpp"
#include "neuromon/spectral.hpp"
#include "neuromon/trace_sim.hpp"

namespace py = pybind11;
using namespace neuromon;

namespace {

std::vector<double> feature_values(const FeatureVector& f) {
    return {f.values.begin(), f.values.begin() + static_cast<std::ptrdiff_t>(f.dim)};
}

struct PyModels {
    MonitorModels models;
    std::uint64_t probe_hash = 0;

    void save(const std::filesystem::path& dir) const {
        std::filesystem::create_directories(dir);
        save_model(models.intra, dir / "intra.mlp");
        save_model(models.inter, dir / "inter.mlp");
        save_model(models.inst, dir / "inst.mlp");
    }
    static PyModels load(const std::filesystem::path& dir) {
        PyModels out;
        out.models.intra = load_model(dir / "intra.mlp");
        out.models.inter = load_model(dir / "inter.mlp");
        out.models.inst = load_model(dir / "inst.mlp");
        if (out.models.inter.probe_hash != out.models.intra.probe_hash ||
            out.models.inst.probe_hash != out.models.intra.probe_hash) {
            throw ConfigError("detector files disagree about their probe set");
        }
        out.probe_hash = out.models.intra.probe_hash;
        return out;
    }
};

SimSpec make_spec(std::size_t channels, std::size_t steps, std::uint64_t seed,
                  const std::string& instance,
                  const std::vector<std::tuple<std::string, std::size_t, std::size_t,
                                               double, std::size_t>>& injections) {
    SimSpec spec;
    spec.channels = channels;
    spec.steps = steps;
    spec.seed = seed;
    if (instance == "easy") {
        spec.instance = InstanceProfile::easy;
    } else if (instance == "hard") {
        spec.instance = InstanceProfile::hard;
    } else if (instance != "none") {
        throw ConfigError("instance must be none, easy or hard");
    }
    for (const auto& [level, onset, duration, magnitude, period] : injections) {
        spec.injections.push_back(
            {level_from_name(level), onset, duration, magnitude, period});
    }
    return spec;
}

py::dict event_dict(const InterventionEvent& e) {
    py::dict d;
    d["level"] = level_name(e.level);
    d["tau"] = e.token_position;
    d["step"] = e.step;
    d["probability"] = e.probability;
    d["payload"] = e.payload;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "streaming activation monitor core";

    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<ProtocolError>(m, "ProtocolError", PyExc_RuntimeError);
    py::register_exception<TrainError>(m, "TrainError", PyExc_RuntimeError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);

    // ---- exact-DFT whole-series features ----
    m.def("intra_features",
          [](const std::vector<double>& s) { return feature_values(intra_features(s)); },
          py::arg("series"), "(r_HF, H, e) of a magnitude series");
    m.def("inter_features",
          [](const std::vector<double>& s) { return feature_values(inter_features(s)); },
          py::arg("series"), "(r_dom, H) of a magnitude series");
    m.def("inst_features",
          [](const std::vector<double>& s) { return feature_values(inst_features(s)); },
          py::arg("series"), "(r_LF, H) of a magnitude series");

    // ---- incremental probe window ----
    py::class_<ProbeSet>(m, "ProbeSet")
        .def(py::init<std::vector<double>>(), py::arg("omegas"))
        .def_static("uniform_default", &ProbeSet::uniform_default)
        .def_property_readonly("omegas", &ProbeSet::omegas)
        .def("hash", &ProbeSet::hash);

    py::class_<SpectralWindowState>(m, "Window")
        .def(py::init([](std::size_t channels, double epsilon) {
                 return SpectralWindowState(channels, ProbeSet::uniform_default(), epsilon);
             }),
             py::arg("channels"), py::arg("epsilon") = kDefaultEpsilon)
        .def("push",
             [](SpectralWindowState& s, const std::vector<double>& v) { s.push(v); },
             py::arg("activations"))
        .def("pop", &SpectralWindowState::pop, py::arg("count"))
        .def("__len__", &SpectralWindowState::length)
        .def("features",
             [](const SpectralWindowState& s, const std::string& level) {
                 std::vector<std::vector<double>> out;
                 for (const auto& f : s.features(level_from_name(level))) {
                     out.push_back(feature_values(f));
                 }
                 return out;
             },
             py::arg("level"), "per-channel feature tuples for the current window");

    // ---- synthetic traces ----
    m.def(
        "simulate",
        [](std::size_t channels, std::size_t steps, std::uint64_t seed,
           const std::string& instance,
           const std::vector<std::tuple<std::string, std::size_t, std::size_t, double,
                                        std::size_t>>& injections) {
            const LabeledTrace trace =
                generate(make_spec(channels, steps, seed, instance, injections));
            py::dict out;
            std::vector<std::vector<double>> values;
            std::vector<bool> step_end;
            for (const auto& f : trace.frames) {
                values.push_back(f.values);
                step_end.push_back(f.step_end);
            }
            out["values"] = values;
            out["step_end"] = step_end;
            py::list labels;
            for (const auto& l : trace.labels) {
                py::dict d;
                d["intra"] = l.intra;
                d["inter"] = l.inter;
                d["inst"] = l.inst;
                labels.append(d);
            }
            out["step_labels"] = labels;
            return out;
        },
        py::arg("channels") = 8, py::arg("steps") = 24, py::arg("seed") = 0,
        py::arg("instance") = "none",
        py::arg("injections") =
            std::vector<std::tuple<std::string, std::size_t, std::size_t, double,
                                   std::size_t>>{},
        "deterministic labeled activation trace");

    m.def("write_trace",
          [](std::size_t channels, std::size_t steps, std::uint64_t seed,
             const std::string& instance,
             const std::vector<std::tuple<std::string, std::size_t, std::size_t, double,
                                          std::size_t>>& injections,
             const std::filesystem::path& path) {
              write_trace_file(generate(make_spec(channels, steps, seed, instance,
                                                  injections)),
                               path, TraceFormat::binary, 1);
          },
          py::arg("channels"), py::arg("steps"), py::arg("seed"), py::arg("instance"),
          py::arg("injections"), py::arg("path"),
          "simulate and store a trace in the binary frame format");

    // ---- detector training and replay ----
    py::class_<PyModels>(m, "Models")
        .def("save", &PyModels::save, py::arg("directory"))
        .def_static("load", &PyModels::load, py::arg("directory"))
        .def_property_readonly("probe_hash",
                               [](const PyModels& p) { return p.probe_hash; });

    m.def(
        "train_models",
        [](std::size_t traces, std::size_t channels, std::uint64_t seed) {
            DatasetConfig dcfg;
            PyModels out;
            out.probe_hash = dcfg.probes.hash();
            out.models = train_detectors(
                build_dataset(default_corpus(traces, channels, seed), dcfg),
                out.probe_hash, seed);
            return out;
        },
        py::arg("traces") = 60, py::arg("channels") = 8, py::arg("seed") = 7,
        "train the three failure detectors on a balanced synthetic corpus");

    m.def(
        "replay",
        [](const std::filesystem::path& path, const PyModels& models,
           std::tuple<double, double, double> thresholds, std::size_t min_consecutive) {
            MonitorConfig cfg;
            cfg.thresholds = {std::get<0>(thresholds), std::get<1>(thresholds),
                              std::get<2>(thresholds)};
            cfg.min_consecutive = min_consecutive;
            const ReplayResult result =
                ::neuromon::replay(path, TraceFormat::binary, cfg, models.models);
            py::list events;
            for (const auto& e : result.events) events.append(event_dict(e));
            py::dict out;
            out["events"] = events;
            out["steps"] = result.steps;
            out["evaluations"] = result.evaluations;
            out["truncated"] = result.truncated;
            return out;
        },
        py::arg("path"), py::arg("models"),
        py::arg("thresholds") = std::make_tuple(0.5, 0.5, 0.5),
        py::arg("min_consecutive") = 1,
        "offline replay of a stored trace through the monitor");

    // ---- MoN selection ----
    m.def(
        "select_mon",
        [](const std::vector<std::uint64_t>& ids,
           const std::vector<std::vector<double>>& scores, std::size_t k,
           const std::string& level) {
            AttributionMatrix matrix;
            if (scores.size() != ids.size()) {
                throw ShapeError("ids and score rows differ in length");
            }
            for (std::uint64_t id : ids) matrix.neurons.push_back({id, NeuronKind::ffn, 0});
            matrix.steps = scores.empty() ? 0 : scores.front().size();
            for (const auto& row : scores) {
                if (row.size() != matrix.steps) throw ShapeError("ragged score matrix");
                matrix.scores.insert(matrix.scores.end(), row.begin(), row.end());
            }
            const MonSelection sel = ::neuromon::select_mon(matrix, k,
                                                            level_from_name(level));
            std::vector<std::uint64_t> out;
            for (const auto& n : sel.neurons) out.push_back(n.id);
            return out;
        },
        py::arg("ids"), py::arg("scores"), py::arg("k"), py::arg("level"),
        "top-k-intersection neuron ids, ascending");

    // ---- reconstruction ----
    m.def("segment", &segment, py::arg("text"));
    m.def(
        "reconstruct",
        [](const std::vector<std::pair<std::string, std::string>>& raw,
           std::uint64_t seed, std::size_t variants) {
            std::vector<ReasoningSample> samples;
            for (const auto& [input, output] : raw) {
                samples.push_back(make_sample(input, output));
            }
            CorpusConfig cfg;
            cfg.seed = seed;
            cfg.variants_per_sample = variants;
            const auto corpus =
                build_corpus(samples, Rewriter::rule_based({3, seed}), cfg);
            py::list out;
            for (const auto& rec : corpus) {
                py::dict d;
                d["level"] = level_name(rec.level);
                d["j"] = rec.j;
                d["full_text"] = rec.full_text();
                d["trigger"] = rec.trigger;
                py::list mask;
                for (const auto& span : rec.mask()) {
                    mask.append(py::make_tuple(span.begin, span.end));
                }
                d["mask"] = mask;
                out.append(d);
            }
            return out;
        },
        py::arg("samples"), py::arg("seed") = 0, py::arg("variants") = 1,
        "rule-based diagnose-then-correct corpus from (input, output) pairs");
}
