// neuromon: simulate traces, train detectors, monitor streams, select MoN
// neuron sets, reconstruct SFT corpora and benchmark the spectral engine.

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "neuromon/classifier.hpp"
#include "neuromon/errors.hpp"
#include "neuromon/ingest.hpp"
#include "neuromon/mon_select.hpp"
#include "neuromon/monitor.hpp"
#include "neuromon/reconstruct.hpp"
#include "neuromon/spectral.hpp"
#include "neuromon/trace_sim.hpp"

namespace fs = std::filesystem;
using namespace neuromon;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;    // usage / validation errors
constexpr int kExitTrain = 3;     // training failed to converge or start
constexpr int kExitData = 4;      // parse, I/O, model/probe mismatch
constexpr int kExitProtocol = 5;  // wire protocol violations

TraceFormat parse_format(const std::string& name) {
    if (name == "binary") return TraceFormat::binary;
    if (name == "text") return TraceFormat::text;
    throw ConfigError("unknown trace format: " + name);
}

Level parse_level(const std::string& name) { return level_from_name(name); }

/// Produces `path` only on success: writers run against a temp sibling that
/// is renamed into place afterwards.
class AtomicPath {
public:
    explicit AtomicPath(fs::path path)
        : final_(std::move(path)), tmp_(final_.string() + ".tmp") {}
    ~AtomicPath() {
        if (!committed_) {
            std::error_code ec;
            fs::remove(tmp_, ec);
        }
    }
    const fs::path& tmp() const { return tmp_; }
    void commit() {
        std::error_code ec;
        fs::rename(tmp_, final_, ec);
        if (ec) throw IoError("cannot move " + tmp_.string() + " into place: " + ec.message());
        committed_ = true;
    }

private:
    fs::path final_;
    fs::path tmp_;
    bool committed_ = false;
};

Injection parse_injection(const std::string& text) {
    // level:onset:duration:magnitude[:period]
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string piece;
    while (std::getline(ss, piece, ':')) parts.push_back(piece);
    if (parts.size() < 4 || parts.size() > 5) {
        throw ConfigError("injection must be level:onset:duration:magnitude[:period]");
    }
    Injection inj;
    inj.level = parse_level(parts[0]);
    inj.onset_step = std::stoul(parts[1]);
    inj.duration_steps = std::stoul(parts[2]);
    inj.magnitude = std::stod(parts[3]);
    if (parts.size() == 5) inj.period_tokens = std::stoul(parts[4]);
    return inj;
}

struct SimulateArgs {
    std::string out;
    std::string format = "binary";
    std::size_t traces = 1;
    std::size_t channels = 8;
    std::size_t steps = 24;
    std::uint64_t seed = 0;
    std::string instance = "none";
    double instance_magnitude = 3.0;
    std::vector<std::string> injections;
    bool corpus = false;  // use the balanced default corpus instead
    bool labels = true;
};

int cmd_simulate(const SimulateArgs& args) {
    const TraceFormat format = parse_format(args.format);
    std::vector<SimSpec> specs;
    if (args.corpus) {
        specs = default_corpus(args.traces, args.channels, args.seed);
    } else {
        SimSpec spec;
        spec.channels = args.channels;
        spec.steps = args.steps;
        if (args.instance == "easy") {
            spec.instance = InstanceProfile::easy;
        } else if (args.instance == "hard") {
            spec.instance = InstanceProfile::hard;
        } else if (args.instance != "none") {
            throw ConfigError("instance profile must be none, easy or hard");
        }
        spec.instance_magnitude = args.instance_magnitude;
        for (const auto& text : args.injections) {
            spec.injections.push_back(parse_injection(text));
        }
        for (std::size_t i = 0; i < args.traces; ++i) {
            spec.seed = args.seed + i;
            specs.push_back(spec);
        }
    }

    for (std::size_t i = 0; i < specs.size(); ++i) {
        specs[i].validate();
        const LabeledTrace trace = generate(specs[i]);
        fs::path path = args.out;
        if (specs.size() > 1) path += "." + std::to_string(i);
        AtomicPath out(path);
        write_trace_file(trace, out.tmp(), format, i + 1);
        out.commit();
        if (args.labels) {
            AtomicPath sidecar(path.string() + ".labels");
            write_label_sidecar(trace, sidecar.tmp());
            sidecar.commit();
        }
        std::cout << "wrote " << path.string() << " (" << trace.frames.size()
                  << " tokens, " << trace.labels.size() << " steps, "
                  << trace.events.size() << " events)\n";
    }
    return kExitOk;
}

struct TrainArgs {
    std::string level = "all";
    std::size_t traces = 100;
    std::size_t channels = 8;
    std::uint64_t seed = 7;
    std::string out = "models";
    std::string eval_model;  // load + evaluate instead of training
    bool grad_check_flag = false;
};

void print_metrics(Level level, double accuracy, double recall) {
    std::cout << "level=" << level_name(level) << " accuracy=" << accuracy
              << " recall=" << recall << "\n";
}

int cmd_train(const TrainArgs& args) {
    DatasetConfig dcfg;
    const auto splits = build_dataset(default_corpus(args.traces, args.channels, args.seed),
                                      dcfg);
    const std::uint64_t probe_hash = dcfg.probes.hash();

    std::vector<Level> levels;
    if (args.level == "all") {
        levels = {Level::intra, Level::inter, Level::inst};
    } else {
        levels = {parse_level(args.level)};
    }

    if (args.grad_check_flag) {
        double worst = 0.0;
        for (Level level : levels) {
            const auto& split = splits[static_cast<std::size_t>(level)];
            Dataset probe(split.train.begin(),
                          split.train.begin() +
                              std::min<std::size_t>(split.train.size(), 16));
            MlpModel model = init_model(level, 16, 16, probe_hash, args.seed + 1);
            worst = std::max(worst, grad_check(model, probe));
        }
        std::cout << "grad-check max relative error " << worst << "\n";
        return worst <= 1e-4 ? kExitOk : kExitTrain;
    }

    if (!args.eval_model.empty()) {
        const MlpModel model = load_model(args.eval_model, probe_hash);
        const auto& split = splits[static_cast<std::size_t>(model.level)];
        const EvalMetrics m = evaluate(model, split.test);
        print_metrics(model.level, m.accuracy, m.recall);
        return kExitOk;
    }

    std::array<TrainReport, 3> reports;
    const MonitorModels models = train_detectors(splits, probe_hash, args.seed, &reports);
    fs::create_directories(args.out);
    for (Level level : levels) {
        const std::size_t idx = static_cast<std::size_t>(level);
        const fs::path path = fs::path(args.out) / (std::string(level_name(level)) + ".mlp");
        AtomicPath out(path);
        save_model(models.at(level), out.tmp());
        out.commit();
        print_metrics(level, reports[idx].final_accuracy, reports[idx].final_recall);
    }
    return kExitOk;
}

struct MonitorArgs {
    std::string replay_path;
    std::string format = "binary";
    std::string models = "models";
    std::string events_out;
    std::string dump_features;
    std::string labels;
    bool listen = false;
    bool self_test = false;
    std::size_t max_streams = 1;
    double threshold_intra = 0.5;
    double threshold_inter = 0.5;
    double threshold_inst = 0.5;
    std::size_t k_window = 4;
    std::size_t instance_prefix = 4;
    std::string aggregation = "mean";
    std::size_t refractory = 0;
    std::size_t stride = 1;
    std::size_t min_consecutive = 1;
};

MonitorModels load_models(const fs::path& dir, std::uint64_t probe_hash) {
    MonitorModels models;
    models.intra = load_model(dir / "intra.mlp", probe_hash);
    models.inter = load_model(dir / "inter.mlp", probe_hash);
    models.inst = load_model(dir / "inst.mlp", probe_hash);
    return models;
}

MonitorConfig monitor_config(const MonitorArgs& args) {
    MonitorConfig cfg;
    cfg.k_intra = args.k_window;
    cfg.k_inter = args.k_window;
    cfg.instance_prefix = args.instance_prefix;
    cfg.thresholds = {args.threshold_intra, args.threshold_inter, args.threshold_inst};
    cfg.refractory_steps = args.refractory;
    cfg.eval_stride = args.stride;
    cfg.min_consecutive = args.min_consecutive;
    if (args.aggregation == "max") {
        cfg.aggregation = Aggregation::max_probability;
    } else if (args.aggregation != "mean") {
        throw ConfigError("aggregation must be mean or max");
    }
    cfg.validate();
    return cfg;
}

struct SidecarLabels {
    std::vector<StepLabels> steps;
};

SidecarLabels load_sidecar(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string header;
    std::getline(in, header);
    if (header != "step intra inter inst tokens") {
        throw ParseError("bad label sidecar header: " + header);
    }
    SidecarLabels out;
    std::size_t step, tokens;
    int a, b, c;
    while (in >> step >> a >> b >> c >> tokens) {
        StepLabels l;
        l.intra = a != 0;
        l.inter = b != 0;
        l.inst = c != 0;
        out.steps.push_back(l);
    }
    return out;
}

void summarize_against_labels(const std::vector<InterventionEvent>& events,
                              const SidecarLabels& sidecar, std::size_t k) {
    for (Level level : {Level::intra, Level::inter, Level::inst}) {
        // contiguous labeled runs form the ground-truth event spans
        std::vector<std::pair<std::size_t, std::size_t>> spans;
        for (std::size_t s = 0; s < sidecar.steps.size(); ++s) {
            if (!sidecar.steps[s].label(level)) continue;
            if (!spans.empty() && spans.back().second + 1 == s) {
                spans.back().second = s;
            } else {
                spans.emplace_back(s, s);
            }
        }
        std::size_t hits = 0;
        std::size_t matched_events = 0;
        std::size_t total_events = 0;
        std::vector<bool> span_hit(spans.size(), false);
        for (const auto& e : events) {
            if (e.level != level) continue;
            ++total_events;
            bool found = false;
            for (std::size_t i = 0; i < spans.size(); ++i) {
                // an event at step s sees the k steps ending at s
                if (e.step >= spans[i].first && e.step <= spans[i].second + k) {
                    span_hit[i] = true;
                    found = true;
                }
            }
            matched_events += found;
        }
        for (bool h : span_hit) hits += h;
        std::cout << "level=" << level_name(level) << " spans=" << spans.size()
                  << " events=" << total_events;
        if (!spans.empty()) {
            std::cout << " recall=" << static_cast<double>(hits) / spans.size();
        }
        if (total_events > 0) {
            std::cout << " precision="
                      << static_cast<double>(matched_events) / total_events;
        }
        std::cout << "\n";
    }
}

void write_events(const std::vector<InterventionEvent>& events, const fs::path& path) {
    AtomicPath out(path);
    std::ofstream f(out.tmp());
    if (!f) throw IoError("cannot write " + path.string());
    for (const auto& e : events) f << event_log_line(e) << "\n";
    f.close();
    if (f.fail()) throw IoError("event log write failed");
    out.commit();
}

void write_feature_dump(const std::vector<EvaluationRecord>& dump, const fs::path& path) {
    AtomicPath out(path);
    std::ofstream f(out.tmp());
    if (!f) throw IoError("cannot write " + path.string());
    f << "token step level f0 f1 f2 probability\n";
    for (const auto& r : dump) {
        f << r.token_index << ' ' << r.step << ' ' << level_name(r.level);
        for (std::size_t i = 0; i < 3; ++i) {
            f << ' ' << (i < r.features.dim ? r.features.values[i] : 0.0);
        }
        f << ' ' << r.probability << "\n";
    }
    f.close();
    if (f.fail()) throw IoError("feature dump write failed");
    out.commit();
}

int monitor_replay(const MonitorArgs& args) {
    const MonitorConfig cfg = monitor_config(args);
    const MonitorModels models = load_models(args.models, cfg.probes.hash());
    const ReplayResult result = replay(args.replay_path, parse_format(args.format), cfg,
                                       models, !args.dump_features.empty());
    std::cout << "replayed " << args.replay_path << ": " << result.steps << " steps, "
              << result.evaluations << " evaluations, " << result.events.size()
              << " events" << (result.truncated ? " (truncated stream)" : "") << "\n";
    for (const auto& e : result.events) {
        std::cout << "  " << level_name(e.level) << " tau=" << e.token_position
                  << " step=" << e.step << " p=" << e.probability << "\n";
    }
    if (!args.events_out.empty()) write_events(result.events, args.events_out);
    if (!args.dump_features.empty()) {
        write_feature_dump(result.feature_dump, args.dump_features);
    }
    if (!args.labels.empty()) {
        summarize_against_labels(result.events, load_sidecar(args.labels), args.k_window);
    }
    return kExitOk;
}

int monitor_listen(const MonitorArgs& args) {
    const MonitorConfig cfg = monitor_config(args);
    const MonitorModels models = load_models(args.models, cfg.probes.hash());

    std::mutex mu;
    std::condition_variable done_cv;
    std::size_t closed = 0;
    std::map<std::uint64_t, Monitor> monitors;
    std::vector<InterventionEvent> all_events;
    std::size_t directives_sent = 0;
    std::size_t truncated_streams = 0;

    StreamServer server(
        [&](const ActivationFrame& frame) -> std::string {
            std::lock_guard<std::mutex> lock(mu);
            auto it = monitors.find(frame.stream_id);
            if (it == monitors.end()) {
                if (frame.end_of_stream) return {};
                it = monitors
                         .emplace(frame.stream_id,
                                  Monitor(cfg, models, frame.values.size()))
                         .first;
            }
            auto event = it->second.on_frame(frame);
            if (!event) return {};
            all_events.push_back(*event);
            ++directives_sent;
            return directive_json(decode_constraint(*event));
        },
        [&](std::uint64_t stream_id, bool clean) {
            std::lock_guard<std::mutex> lock(mu);
            auto it = monitors.find(stream_id);
            if (it != monitors.end() && !it->second.finished()) {
                it->second.finalize(clean);
            }
            if (!clean) {
                ++truncated_streams;
                std::cout << "stream " << stream_id << " truncated\n";
            }
            ++closed;
            done_cv.notify_all();
        });
    server.start();
    std::cout << "listening on 127.0.0.1:" << server.port() << "\n";

    std::thread feeder;
    if (args.self_test) {
        feeder = std::thread([&] {
            TraceReader reader(args.replay_path, parse_format(args.format));
            StreamClient client("127.0.0.1", server.port());
            while (auto frame = reader.next()) {
                auto response = client.send(*frame);
                if (response && !response->empty()) {
                    std::lock_guard<std::mutex> lock(mu);
                    std::cout << "directive " << *response << "\n";
                }
            }
            client.close();
        });
    }

    {
        std::unique_lock<std::mutex> lock(mu);
        done_cv.wait(lock, [&] { return closed >= args.max_streams; });
    }
    if (feeder.joinable()) feeder.join();
    server.stop();

    std::cout << "served " << closed << " stream(s), " << all_events.size()
              << " events, " << directives_sent << " directives, "
              << truncated_streams << " truncated\n";
    if (!args.events_out.empty()) write_events(all_events, args.events_out);
    return kExitOk;
}

int cmd_monitor(const MonitorArgs& args) {
    if (args.listen) {
        if (args.self_test && args.replay_path.empty()) {
            throw ConfigError("--self-test needs --replay for the source trace");
        }
        return monitor_listen(args);
    }
    if (args.replay_path.empty()) throw ConfigError("monitor needs --replay or --listen");
    return monitor_replay(args);
}

struct BenchArgs {
    std::size_t channels = 32;
    std::size_t tokens = 20000;
    std::string out;
};

double median_per_token_ns(std::size_t window, std::size_t channels, std::size_t tokens,
                           std::mt19937_64& rng) {
    SpectralWindowState state(channels, ProbeSet::uniform_default());
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> values(channels);
    auto fill = [&] {
        for (double& v : values) v = std::exp(noise(rng));
    };
    for (std::size_t i = 0; i < window; ++i) {
        fill();
        state.push(values);
    }
    // time in chunks so clock granularity does not dominate
    const std::size_t chunk = 64;
    std::vector<double> samples;
    double sink = 0.0;
    for (std::size_t done = 0; done < tokens; done += chunk) {
        const auto start = std::chrono::steady_clock::now();
        for (std::size_t i = 0; i < chunk; ++i) {
            fill();
            state.push(values);
            state.pop(1);
            for (const auto& f : state.features(Level::intra)) sink += f.values[0];
        }
        const auto stop = std::chrono::steady_clock::now();
        samples.push_back(
            std::chrono::duration<double, std::nano>(stop - start).count() / chunk);
    }
    if (sink == 42.0) std::cout << "";  // keep the work observable
    std::nth_element(samples.begin(), samples.begin() + samples.size() / 2, samples.end());
    return samples[samples.size() / 2];
}

int cmd_bench(const BenchArgs& args) {
    std::mt19937_64 rng(1);
    std::ostringstream report;
    std::map<std::size_t, double> medians;
    for (std::size_t window : {64, 256, 1024, 4096}) {
        medians[window] = median_per_token_ns(window, args.channels, args.tokens, rng);
        report << "window=" << window << " channels=" << args.channels
               << " median_ns_per_token=" << medians[window] << "\n";
    }
    report << "ratio_4096_over_64=" << medians[4096] / medians[64] << "\n";
    const double doubled = median_per_token_ns(256, args.channels * 2, args.tokens, rng);
    report << "channels_x2_ratio=" << doubled / medians[256] << "\n";
    std::cout << report.str();
    if (!args.out.empty()) {
        AtomicPath out(args.out);
        std::ofstream f(out.tmp());
        f << report.str();
        f.close();
        if (f.fail()) throw IoError("bench report write failed");
        out.commit();
    }
    return kExitOk;
}

struct SelectArgs {
    std::string input;
    std::string format = "text";
    std::size_t k = 0;
    std::string level = "intra";
    std::string out;
};

int cmd_select_mon(const SelectArgs& args) {
    const AttributionFormat format = args.format == "binary" ? AttributionFormat::binary
                                                             : AttributionFormat::text;
    const AttributionMatrix matrix = load_attributions(args.input, format);
    const MonSelection selection = select_mon(matrix, args.k, parse_level(args.level));

    std::ostringstream body;
    for (const NeuronId& n : selection.neurons) {
        body << n.id << ' ' << neuron_kind_name(n.kind) << ' ' << n.layer << "\n";
    }
    if (selection.empty_intersection_warning) {
        std::cerr << "warning: top-k intersection is empty\n";
    }
    std::cout << "selected " << selection.neurons.size() << " neuron(s) for level "
              << args.level << " at k=" << args.k << "\n";
    if (args.out.empty()) {
        std::cout << body.str();
    } else {
        AtomicPath out(args.out);
        std::ofstream f(out.tmp());
        f << body.str();
        f.close();
        if (f.fail()) throw IoError("selection write failed");
        out.commit();
    }
    return kExitOk;
}

struct ReconstructArgs {
    std::string input;
    std::string out;
    std::uint64_t seed = 0;
    std::string policy = "middle";
    std::vector<std::size_t> explicit_steps;
    std::size_t variants = 1;
    std::size_t loop_paragraphs = 3;
    bool remote = false;
    std::string remote_host;
    int remote_port = 80;
    std::string remote_path = "/v1/chat/completions";
    std::string remote_model = "default";
    std::string api_key;  // only ever set from the environment
};

int cmd_reconstruct(const ReconstructArgs& args) {
    std::vector<ReasoningSample> raw;
    {
        std::ifstream in(args.input);
        if (!in) throw IoError("cannot open " + args.input);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            try {
                auto j = nlohmann::json::parse(line);
                raw.push_back(make_sample(j.at("input").get<std::string>(),
                                          j.at("output").get<std::string>()));
            } catch (const nlohmann::json::exception& e) {
                throw ParseError("bad raw sample at line " + std::to_string(line_no) +
                                 ": " + e.what());
            }
        }
    }

    CorpusConfig cfg;
    cfg.seed = args.seed;
    cfg.variants_per_sample = args.variants;
    if (args.policy == "uniform") {
        cfg.critical.policy = StepPolicy::uniform_random;
    } else if (args.policy == "explicit") {
        cfg.critical.policy = StepPolicy::explicit_indices;
        cfg.critical.explicit_indices = args.explicit_steps;
    } else if (args.policy != "middle") {
        throw ConfigError("step policy must be middle, uniform or explicit");
    }

    std::optional<Rewriter> rewriter;
    if (args.remote) {
        if (args.remote_host.empty()) {
            throw ConfigError("remote mode needs --remote-host (no endpoint configured)");
        }
        RemoteConfig remote;
        remote.host = args.remote_host;
        remote.port = args.remote_port;
        remote.path = args.remote_path;
        remote.model = args.remote_model;
        remote.api_key = args.api_key;
        std::cout << "using " << remote.describe() << "\n";
        rewriter = Rewriter::remote(remote);
    } else {
        rewriter = Rewriter::rule_based({args.loop_paragraphs, args.seed});
    }

    CorpusReport report;
    const auto corpus = build_corpus(raw, *rewriter, cfg, &report);
    if (corpus.empty()) throw InputError("no samples survived reconstruction");
    AtomicPath out(args.out);
    emit_corpus(corpus, out.tmp());
    out.commit();

    std::cout << "wrote " << corpus.size() << " samples (intra=" << report.intra_count
              << " inter=" << report.inter_count << ") to " << args.out << "\n";
    for (const auto& [reason, count] : report.skipped) {
        std::cout << "skipped " << count << ": " << reason << "\n";
    }
    std::cout << "deterministic: " << (rewriter->is_remote() ? "no (remote rewriter)" : "yes")
              << "\n";
    return kExitOk;
}

int dispatch(int argc, char** argv) {
    CLI::App app{"streaming activation monitor toolkit"};
    app.require_subcommand(1);
    app.set_config("--config")->envname("NEUROMON_CONFIG");

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "generate labeled synthetic traces");
    simulate->add_option("--out", sim.out, "output trace path (suffixed when --traces > 1)")
        ->required();
    simulate->add_option("--format", sim.format, "binary or text")
        ->envname("NEUROMON_FORMAT");
    simulate->add_option("--traces", sim.traces, "number of traces");
    simulate->add_option("--channels", sim.channels, "monitored channels");
    simulate->add_option("--steps", sim.steps, "reasoning steps per trace");
    simulate->add_option("--seed", sim.seed, "base RNG seed")->envname("NEUROMON_SEED");
    simulate->add_option("--instance", sim.instance, "none, easy or hard");
    simulate->add_option("--instance-magnitude", sim.instance_magnitude,
                         "prefix envelope height");
    simulate->add_option("--inject", sim.injections,
                         "level:onset:duration:magnitude[:period], repeatable");
    simulate->add_flag("--corpus", sim.corpus, "balanced mixed corpus instead of one spec");
    simulate->add_flag("--labels,!--no-labels", sim.labels, "write label sidecars");

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train failure detectors on synthetic data");
    train_cmd->add_option("--level", train_args.level, "intra, inter, inst or all");
    train_cmd->add_option("--traces", train_args.traces, "simulated training traces");
    train_cmd->add_option("--channels", train_args.channels, "monitored channels");
    train_cmd->add_option("--seed", train_args.seed, "RNG seed")->envname("NEUROMON_SEED");
    train_cmd->add_option("--out", train_args.out, "model output directory");
    train_cmd->add_option("--eval-model", train_args.eval_model,
                          "evaluate a saved model instead of training");
    train_cmd->add_flag("--grad-check", train_args.grad_check_flag,
                        "finite-difference gradient check, fails above 1e-4");

    MonitorArgs mon;
    auto* monitor_cmd = app.add_subcommand("monitor", "replay a trace or serve a socket");
    monitor_cmd->add_option("--replay", mon.replay_path, "trace file to replay");
    monitor_cmd->add_option("--format", mon.format, "binary or text")
        ->envname("NEUROMON_FORMAT");
    monitor_cmd->add_option("--models", mon.models, "directory holding *.mlp detectors")
        ->envname("NEUROMON_MODELS");
    monitor_cmd->add_option("--events-out", mon.events_out, "structured event log path");
    monitor_cmd->add_option("--dump-features", mon.dump_features,
                            "per-evaluation feature matrix path");
    monitor_cmd->add_option("--labels", mon.labels, "label sidecar for a summary");
    monitor_cmd->add_flag("--listen", mon.listen, "serve the wire protocol on loopback");
    monitor_cmd->add_flag("--self-test", mon.self_test,
                          "stream --replay through the socket to this process");
    monitor_cmd->add_option("--max-streams", mon.max_streams, "serve this many streams");
    monitor_cmd->add_option("--threshold-intra", mon.threshold_intra, "intra threshold");
    monitor_cmd->add_option("--threshold-inter", mon.threshold_inter, "inter threshold");
    monitor_cmd->add_option("--threshold-inst", mon.threshold_inst, "instance threshold");
    monitor_cmd->add_option("--window-steps", mon.k_window, "k for intra/inter windows");
    monitor_cmd->add_option("--instance-prefix", mon.instance_prefix, "K prefix steps");
    monitor_cmd->add_option("--aggregation", mon.aggregation, "mean or max");
    monitor_cmd->add_option("--refractory", mon.refractory, "steps, 0 for 2k default");
    monitor_cmd->add_option("--stride", mon.stride, "evaluate every N tokens");
    monitor_cmd->add_option("--min-consecutive", mon.min_consecutive,
                            "debounce: consecutive hits needed before an event");

    BenchArgs bench;
    auto* bench_cmd = app.add_subcommand("bench", "per-token cost across window lengths");
    bench_cmd->add_option("--channels", bench.channels, "channel count");
    bench_cmd->add_option("--tokens", bench.tokens, "tokens measured per window length");
    bench_cmd->add_option("--out", bench.out, "write the report here too");

    SelectArgs select;
    auto* select_cmd = app.add_subcommand("select-mon", "top-k intersection neuron choice");
    select_cmd->add_option("--input", select.input, "attribution matrix file")->required();
    select_cmd->add_option("--format", select.format, "text or binary");
    select_cmd->add_option("--k", select.k, "per-step top-k")->required();
    select_cmd->add_option("--level", select.level, "intra, inter or inst");
    select_cmd->add_option("--out", select.out, "write ids here instead of stdout");

    ReconstructArgs rec;
    auto* rec_cmd = app.add_subcommand("reconstruct", "build a diagnose-then-correct corpus");
    rec_cmd->add_option("--input", rec.input, "raw samples, one JSON object per line")
        ->required();
    rec_cmd->add_option("--out", rec.out, "corpus output path")->required();
    rec_cmd->add_option("--seed", rec.seed, "RNG seed")->envname("NEUROMON_SEED");
    rec_cmd->add_option("--policy", rec.policy, "middle, uniform or explicit");
    rec_cmd->add_option("--explicit-steps", rec.explicit_steps, "1-based step indices");
    rec_cmd->add_option("--variants", rec.variants, "reconstructions per raw sample");
    rec_cmd->add_option("--loop-paragraphs", rec.loop_paragraphs, "3, 4 or 5");
    rec_cmd->add_flag("--remote", rec.remote, "use a remote chat-completion rewriter");
    rec_cmd->add_option("--remote-host", rec.remote_host, "rewriter host");
    rec_cmd->add_option("--remote-port", rec.remote_port, "rewriter port");
    rec_cmd->add_option("--remote-path", rec.remote_path, "rewriter URL path");
    rec_cmd->add_option("--remote-model", rec.remote_model, "rewriter model name");
    rec_cmd->add_option("--api-key", rec.api_key, "bearer credential")
        ->envname("NEUROMON_API_KEY");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (simulate->parsed()) return cmd_simulate(sim);
        if (train_cmd->parsed()) return cmd_train(train_args);
        if (monitor_cmd->parsed()) return cmd_monitor(mon);
        if (bench_cmd->parsed()) return cmd_bench(bench);
        if (select_cmd->parsed()) return cmd_select_mon(select);
        if (rec_cmd->parsed()) return cmd_reconstruct(rec);
    } catch (const TrainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitTrain;
    } catch (const ProtocolError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitProtocol;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const ConfigError& e) {
        // model/probe mismatches are data skew, not usage mistakes
        const std::string what = e.what();
        std::cerr << "error: " << what << "\n";
        return what.find("probe") != std::string::npos ? kExitData : kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitConfig;
}

}  // namespace

int main(int argc, char** argv) { return dispatch(argc, argv); }
