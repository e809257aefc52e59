#include <filesystem>
#include <numeric>

#include "doctest.h"
#include "neuromon/errors.hpp"
#include "neuromon/monitor.hpp"
#include "neuromon/trace_sim.hpp"

using namespace neuromon;
namespace fs = std::filesystem;

namespace {

const MonitorModels& trained_models() {
    static const MonitorModels models = [] {
        auto specs = default_corpus(40, 8, 202);
        DatasetConfig dcfg;
        auto splits = build_dataset(specs, dcfg);
        return train_detectors(splits, dcfg.probes.hash(), 9);
    }();
    return models;
}

std::vector<ActivationFrame> to_frames(const LabeledTrace& trace, std::uint64_t stream_id = 1) {
    std::vector<ActivationFrame> out;
    std::uint64_t t = 0;
    for (const SimFrame& f : trace.frames) {
        ActivationFrame frame;
        frame.stream_id = stream_id;
        frame.token_index = t++;
        frame.step_end = f.step_end;
        frame.values = f.values;
        out.push_back(std::move(frame));
    }
    ActivationFrame eos;
    eos.stream_id = stream_id;
    eos.end_of_stream = true;
    out.push_back(std::move(eos));
    return out;
}

std::vector<InterventionEvent> run_monitor(const LabeledTrace& trace,
                                           const MonitorConfig& config) {
    Monitor monitor(config, trained_models(), trace.frames.front().values.size());
    for (const auto& frame : to_frames(trace)) monitor.on_frame(frame);
    return monitor.events();
}

FeatureVector make_features(Level level, std::initializer_list<double> values) {
    FeatureVector f;
    f.level = level;
    f.dim = level_dim(level);
    std::size_t i = 0;
    for (double v : values) f.values[i++] = v;
    return f;
}

}  // namespace

TEST_CASE("aggregation modes") {
    auto model = init_model(Level::inter, 8, 8, 0, 3);

    SUBCASE("single-neuron expert: both modes equal direct evaluation") {
        auto f = make_features(Level::inter, {0.4, 0.7});
        const double direct = forward(model, f.as_span());
        CHECK(aggregate_probability(model, {f}, Aggregation::mean_features) == direct);
        CHECK(aggregate_probability(model, {f}, Aggregation::max_probability) == direct);
    }

    SUBCASE("identical features across neurons: both modes agree") {
        auto f = make_features(Level::inter, {0.2, 0.9});
        std::vector<FeatureVector> same(5, f);
        const double direct = forward(model, f.as_span());
        CHECK(aggregate_probability(model, same, Aggregation::mean_features) ==
              doctest::Approx(direct).epsilon(1e-12));
        CHECK(aggregate_probability(model, same, Aggregation::max_probability) == direct);
    }

    SUBCASE("quiet plus spiking neuron: max mode dominates mean mode") {
        std::vector<FeatureVector> pair{make_features(Level::inter, {0.05, 0.1}),
                                        make_features(Level::inter, {0.95, 0.9})};
        CHECK(aggregate_probability(model, pair, Aggregation::max_probability) >=
              aggregate_probability(model, pair, Aggregation::mean_features));
    }

    SUBCASE("empty neuron set rejected") {
        CHECK_THROWS_AS(aggregate_probability(model, {}, Aggregation::mean_features),
                        ConfigError);
    }
}

TEST_CASE("decode_constraint forces the payload at tau + 1") {
    InterventionEvent event;
    event.level = Level::intra;
    event.token_position = 41;
    event.payload = "<INTRA>";
    auto d = decode_constraint(event);
    CHECK(d.force == "<INTRA>");
    CHECK(d.at == 42);

    event.level = Level::inst;
    event.payload = "Okay, I have finished thinking.";
    CHECK(decode_constraint(event).force == "Okay, I have finished thinking.");

    CHECK(directive_json(d) == R"({"at":42,"force":"<INTRA>"})");
}

TEST_CASE("config validation") {
    MonitorConfig cfg;
    cfg.k_intra = 3;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.allow_nonstandard_k = true;
    CHECK_NOTHROW(cfg.validate());

    cfg = {};
    cfg.thresholds[1] = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg = {};
    cfg.eval_stride = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("model and stream guards") {
    MonitorConfig cfg;
    MonitorModels wrong_hash = trained_models();
    wrong_hash.inter.probe_hash ^= 1;
    CHECK_THROWS_AS(Monitor(cfg, wrong_hash, 8), ConfigError);

    MonitorModels swapped = trained_models();
    std::swap(swapped.inter, swapped.inst);
    CHECK_THROWS_AS(Monitor(cfg, swapped, 8), ConfigError);

    Monitor monitor(cfg, trained_models(), 8);
    ActivationFrame frame;
    frame.token_index = 0;
    frame.values.assign(5, 1.0);  // wrong channel count
    CHECK_THROWS_AS(monitor.on_frame(frame), ConfigError);

    frame.values.assign(8, 1.0);
    monitor.on_frame(frame);
    ActivationFrame eos;
    eos.end_of_stream = true;
    monitor.on_frame(eos);
    CHECK(monitor.finished());
    CHECK_FALSE(monitor.truncated());
    CHECK_THROWS_AS(monitor.on_frame(frame), ProtocolError);
}

TEST_CASE("window bookkeeping matches a recount of the last k steps") {
    SimSpec spec;
    spec.seed = 77;
    auto trace = generate(spec);
    MonitorConfig cfg;
    Monitor monitor(cfg, trained_models(), spec.channels);

    std::size_t step = 0;
    for (const auto& frame : to_frames(trace)) {
        if (frame.end_of_stream) break;
        monitor.on_frame(frame);
        if (frame.step_end) {
            ++step;
            const std::size_t k = std::min(step, cfg.k_intra);
            std::size_t expected = 0;
            for (std::size_t s = step - k; s < step; ++s) {
                expected += trace.step_token_counts[s];
            }
            CHECK(monitor.window_tokens(Level::intra) == expected);
        }
    }
    CHECK(monitor.current_step() == spec.steps);
}

TEST_CASE("clean trace emits no events") {
    SimSpec spec;
    spec.seed = 301;
    auto events = run_monitor(generate(spec), MonitorConfig{});
    CHECK(events.empty());
}

TEST_CASE("injected inter event caught near its span") {
    SimSpec spec;
    spec.seed = 302;
    spec.injections.push_back({Level::inter, 9, 6, 5.0, 8});
    auto trace = generate(spec);
    auto events = run_monitor(trace, MonitorConfig{});

    std::vector<const InterventionEvent*> inter_events;
    for (const auto& e : events) {
        if (e.level == Level::inter) inter_events.push_back(&e);
    }
    REQUIRE(!inter_events.empty());

    // tau must land inside the event span plus k trailing steps
    std::vector<std::size_t> step_start(spec.steps + 1, 0);
    for (std::size_t s = 0; s < spec.steps; ++s) {
        step_start[s + 1] = step_start[s] + trace.step_token_counts[s];
    }
    const std::size_t lo = step_start[9];
    const std::size_t hi = step_start[std::min<std::size_t>(9 + 6 + 4, spec.steps)];
    for (const auto* e : inter_events) {
        CHECK(e->token_position >= lo);
        CHECK(e->token_position < hi);
        CHECK(e->payload == "<INTER>");
    }
}

TEST_CASE("instance-easy trace fires once at step K with the exact payload") {
    SimSpec spec;
    spec.seed = 303;
    spec.instance = InstanceProfile::easy;
    auto events = run_monitor(generate(spec), MonitorConfig{});

    std::size_t inst_count = 0;
    for (const auto& e : events) {
        if (e.level == Level::inst) {
            ++inst_count;
            CHECK(e.step == 4);
            CHECK(e.payload == "Okay, I have finished thinking.");
        }
    }
    CHECK(inst_count == 1);
}

TEST_CASE("instance-hard trace does not trigger the instance detector") {
    SimSpec spec;
    spec.seed = 304;
    spec.instance = InstanceProfile::hard;
    for (const auto& e : run_monitor(generate(spec), MonitorConfig{})) {
        CHECK(e.level != Level::inst);
    }
}

TEST_CASE("refractory spacing and monotone tau") {
    SimSpec spec;
    spec.seed = 305;
    spec.injections.push_back({Level::inter, 4, 16, 5.0, 8});  // long event
    auto events = run_monitor(generate(spec), MonitorConfig{});

    std::optional<std::uint64_t> last_tau;
    std::array<std::optional<std::size_t>, 3> last_step;
    MonitorConfig cfg;
    for (const auto& e : events) {
        if (last_tau) CHECK(e.token_position > *last_tau);
        last_tau = e.token_position;
        auto& prev = last_step[static_cast<std::size_t>(e.level)];
        if (prev) CHECK(e.step - *prev >= cfg.refractory(e.level));
        prev = e.step;
    }
}

TEST_CASE("replay equals streaming and is deterministic") {
    SimSpec spec;
    spec.seed = 306;
    spec.instance = InstanceProfile::easy;
    spec.injections.push_back({Level::inter, 10, 5, 5.0, 8});
    auto trace = generate(spec);

    const fs::path dir = fs::temp_directory_path() / "neuromon_replay";
    fs::create_directories(dir);
    const fs::path path = dir / "t.bin";
    write_trace_file(trace, path, TraceFormat::binary, 1);

    MonitorConfig cfg;
    auto a = replay(path, TraceFormat::binary, cfg, trained_models(), true);
    auto b = replay(path, TraceFormat::binary, cfg, trained_models(), true);
    auto streamed = run_monitor(trace, cfg);

    REQUIRE(a.events.size() == b.events.size());
    REQUIRE(a.events.size() == streamed.size());
    for (std::size_t i = 0; i < a.events.size(); ++i) {
        CHECK(a.events[i].token_position == b.events[i].token_position);
        CHECK(a.events[i].token_position == streamed[i].token_position);
        CHECK(a.events[i].level == streamed[i].level);
        CHECK(a.events[i].probability == streamed[i].probability);
    }
    CHECK(a.feature_dump.size() == a.evaluations);
    CHECK_FALSE(a.truncated);

    auto line = event_log_line(streamed.front());
    CHECK(line.find("\"payload\"") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("probe-set mismatch refused on replay") {
    SimSpec spec;
    spec.seed = 307;
    auto trace = generate(spec);
    const fs::path dir = fs::temp_directory_path() / "neuromon_replay_mismatch";
    fs::create_directories(dir);
    const fs::path path = dir / "t.bin";
    write_trace_file(trace, path, TraceFormat::binary, 1);

    MonitorConfig cfg;
    std::vector<double> omegas;
    for (int k = 1; k <= 12; ++k) omegas.push_back(3.14159 * k / 12.0);
    cfg.probes = ProbeSet(omegas);
    CHECK_THROWS_AS(replay(path, TraceFormat::binary, cfg, trained_models(), false),
                    ConfigError);
    fs::remove_all(dir);
}
