// Release gate: ten self-contained checks, one PASS/FAIL line each.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <iostream>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>
#include <vector>

#include "neuromon/classifier.hpp"
#include "neuromon/errors.hpp"
#include "neuromon/ingest.hpp"
#include "neuromon/mon_select.hpp"
#include "neuromon/monitor.hpp"
#include "neuromon/reconstruct.hpp"
#include "neuromon/spectral.hpp"
#include "neuromon/trace_sim.hpp"
#include "oracles.hpp"

using namespace neuromon;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int index, bool pass, const std::string& detail) {
    std::cout << "criterion " << index << ": " << (pass ? "PASS" : "FAIL") << " ("
              << detail << ")\n";
    if (!pass) ++failures;
}

// --- 1: incremental state vs direct summation over mixed push/pop ----------
void criterion_1() {
    const std::size_t channels = 8;
    const ProbeSet probes = ProbeSet::uniform_default();
    SpectralWindowState state(channels, probes);

    std::mt19937_64 rng(20260824);
    std::uniform_real_distribution<double> value(-2.0, 2.0);
    std::uniform_int_distribution<int> coin(0, 9);

    std::deque<std::vector<double>> shadow;
    std::size_t pushes = 0;
    double worst = 0.0;

    for (std::size_t op = 0; op < 100000; ++op) {
        const bool do_push = shadow.empty() || shadow.size() > 512 ? shadow.empty()
                                                                   : coin(rng) < 6;
        if (do_push) {
            std::vector<double> v(channels);
            for (double& x : v) x = value(rng);
            state.push(v);
            shadow.push_back(std::move(v));
            ++pushes;
        } else {
            state.pop(1);
            shadow.pop_front();
        }

        if (op % 97 != 0 || shadow.size() < 2) continue;
        const auto got = state.features(Level::intra);
        const auto got_inter = state.features(Level::inter);
        const auto got_inst = state.features(Level::inst);
        const std::size_t left = pushes - shadow.size() + 1;
        for (std::size_t c = 0; c < channels; ++c) {
            std::vector<double> column;
            column.reserve(shadow.size());
            for (const auto& v : shadow) column.push_back(v[c]);
            const auto ref = oracle::probe_features(column, left, probes, kDefaultEpsilon);
            worst = std::max(worst, std::abs(got[c].values[0] - ref.r_hf));
            worst = std::max(worst, std::abs(got[c].values[1] - ref.entropy));
            worst = std::max(worst,
                             std::abs(got[c].values[2] -
                                      std::log(ref.energy + kDefaultEpsilon)));
            worst = std::max(worst, std::abs(got_inter[c].values[0] - ref.r_dom));
            worst = std::max(worst, std::abs(got_inst[c].values[0] - ref.r_lf));
        }
    }
    std::ostringstream d;
    d << "max feature deviation " << worst << " over 1e5 ops";
    report(1, worst <= 1e-8, d.str());
}

// --- 2: amortized O(1) per-token cost --------------------------------------
double median_cost_ns(std::size_t window, std::size_t channels, std::size_t tokens) {
    std::mt19937_64 rng(window);
    std::normal_distribution<double> noise(0.0, 1.0);
    SpectralWindowState state(channels, ProbeSet::uniform_default());
    std::vector<double> values(channels);
    auto fill = [&] {
        for (double& v : values) v = std::exp(noise(rng));
    };
    for (std::size_t i = 0; i < window; ++i) {
        fill();
        state.push(values);
    }
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
    if (!std::isfinite(sink)) std::abort();
    std::nth_element(samples.begin(), samples.begin() + samples.size() / 2, samples.end());
    return samples[samples.size() / 2];
}

void criterion_2() {
    const double small = median_cost_ns(64, 32, 30000);
    const double large = median_cost_ns(4096, 32, 30000);
    const double ratio = large / small;
    std::ostringstream d;
    d << "median ns/token W=64: " << small << ", W=4096: " << large << ", ratio "
      << ratio;
    report(2, ratio <= 3.0, d.str());
}

// --- 3: exact-DFT closed forms ---------------------------------------------
void criterion_3() {
    std::vector<double> impulse(8, 0.0);
    impulse[0] = 1.0;
    const auto fi = intra_features(impulse);
    const auto li = inst_features(impulse);

    std::vector<double> tone(8);
    for (std::size_t t = 0; t < 8; ++t) {
        // bin f=3: two cycles across the window
        tone[t] = 3.0 + std::cos(2.0 * std::numbers::pi * 2.0 * t / 8.0);
    }
    const auto ti = inter_features(tone);

    const bool pass = std::abs(fi.values[1] - 1.0) <= 1e-12 &&
                      std::abs(fi.values[0] - 0.75) <= 1e-12 &&
                      std::abs(li.values[0] - 0.25) <= 1e-12 &&
                      ti.values[0] >= 1.0 - 1e-9 && ti.values[1] <= 1e-9;
    std::ostringstream d;
    d << "impulse H=" << fi.values[1] << " r_HF=" << fi.values[0]
      << " r_LF=" << li.values[0] << "; tone r_dom=" << ti.values[0]
      << " H=" << ti.values[1];
    report(3, pass, d.str());
}

// --- 4: Parseval over random windows ---------------------------------------
void criterion_4() {
    std::mt19937_64 rng(44);
    std::uniform_int_distribution<std::size_t> size_dist(8, 64);
    std::normal_distribution<double> value(0.0, 1.5);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = size_dist(rng);
        std::vector<double> y(n);
        double mean = 0.0;
        for (double& v : y) {
            v = std::abs(value(rng));
            mean += v;
        }
        mean /= static_cast<double>(n);
        for (double& v : y) v -= mean;

        double spectral = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            std::complex<double> coeff{0.0, 0.0};
            for (std::size_t t = 0; t < n; ++t) {
                const double angle = -2.0 * std::numbers::pi * k * t / n;
                coeff += y[t] * std::complex<double>(std::cos(angle), std::sin(angle));
            }
            spectral += std::norm(coeff);
        }
        double time_energy = 0.0;
        for (double v : y) time_energy += v * v;
        const double expect = static_cast<double>(n) * time_energy;
        worst = std::max(worst, std::abs(spectral - expect) / std::max(expect, 1e-300));
    }
    std::ostringstream d;
    d << "max relative Parseval error " << worst << " over 1000 windows";
    report(4, worst <= 1e-9, d.str());
}

// --- 5: analytic gradients vs central differences --------------------------
void criterion_5() {
    double worst = 0.0;
    std::uint64_t hash = ProbeSet::uniform_default().hash();
    for (Level level : {Level::intra, Level::inter, Level::inst}) {
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            MlpModel model = init_model(level, 16, 16, hash, seed * 13);
            std::mt19937_64 rng(seed * 29);
            std::uniform_real_distribution<double> feat(0.0, 1.0);
            Dataset batch;
            for (int i = 0; i < 8; ++i) {
                LabeledSample s;
                s.features.resize(level_dim(level));
                for (double& f : s.features) f = feat(rng);
                s.label = i % 2;
                batch.push_back(std::move(s));
            }
            worst = std::max(worst, grad_check(model, batch));
        }
    }
    std::ostringstream d;
    d << "max relative gradient error " << worst << " over 60 model/batch pairs";
    report(5, worst <= 1e-4, d.str());
}

// --- 6 and 7 share trained detectors ---------------------------------------
struct TrainedStack {
    MonitorModels models;
    DatasetConfig dcfg;
    std::array<LevelSplit, 3> splits;
};

TrainedStack train_stack() {
    TrainedStack stack;
    auto specs = default_corpus(200, 8, 515);
    // loudness varies independently of the labels so the detectors cannot
    // lean on absolute energy and stay robust to scale-shifted streams
    std::mt19937_64 rng(516);
    std::uniform_real_distribution<double> loudness(0.0, std::log(5.0));
    for (auto& spec : specs) spec.baseline_log_mean = loudness(rng);
    stack.splits = build_dataset(specs, stack.dcfg);
    stack.models = train_detectors(stack.splits, stack.dcfg.probes.hash(), 77);
    return stack;
}

void criterion_6(const TrainedStack& stack) {
    bool pass = true;
    std::ostringstream d;
    for (Level level : {Level::intra, Level::inter, Level::inst}) {
        const auto& split = stack.splits[static_cast<std::size_t>(level)];
        const EvalMetrics m = evaluate(stack.models.at(level), split.test);
        pass = pass && m.accuracy >= 0.90 && m.recall >= 0.85;
        d << level_name(level) << " acc=" << m.accuracy << " rec=" << m.recall << "  ";
    }
    report(6, pass, d.str());
}

void criterion_7(const TrainedStack& stack) {
    const fs::path dir = fs::temp_directory_path() / "neuromon_acceptance_replay";
    fs::create_directories(dir);
    MonitorConfig cfg;
    cfg.thresholds = {0.95, 0.9, 0.8};  // deployment operating point
    cfg.min_consecutive = 5;            // debounce short window flickers

    const auto specs = default_corpus(50, 8, 9090);
    std::array<std::size_t, 3> spans{0, 0, 0};
    std::array<std::size_t, 3> hits{0, 0, 0};
    std::size_t clean_steps = 0;
    std::size_t false_events = 0;
    bool inst_protocol_ok = true;

    for (std::size_t i = 0; i < specs.size(); ++i) {
        const LabeledTrace trace = generate(specs[i]);
        const fs::path path = dir / ("t" + std::to_string(i) + ".bin");
        write_trace_file(trace, path, TraceFormat::binary, i + 1);
        const ReplayResult result = replay(path, TraceFormat::binary, cfg, stack.models);

        // ground-truth spans from the step labels, per level
        for (Level level : {Level::intra, Level::inter, Level::inst}) {
            const std::size_t idx = static_cast<std::size_t>(level);
            std::vector<std::pair<std::size_t, std::size_t>> level_spans;
            for (std::size_t s = 0; s < trace.labels.size(); ++s) {
                if (!trace.labels[s].label(level)) continue;
                if (!level_spans.empty() && level_spans.back().second + 1 == s) {
                    level_spans.back().second = s;
                } else {
                    level_spans.emplace_back(s, s);
                }
            }
            spans[idx] += level_spans.size();
            for (const auto& span : level_spans) {
                for (const auto& e : result.events) {
                    if (e.level == level && e.step >= span.first &&
                        e.step <= span.second + cfg.k_intra) {
                        ++hits[idx];
                        break;
                    }
                }
            }
        }

        for (std::size_t s = 0; s < trace.labels.size(); ++s) {
            const auto& l = trace.labels[s];
            if (!l.intra && !l.inter && !l.inst) ++clean_steps;
        }
        for (const auto& e : result.events) {
            // false alarm: no injected anomaly of any level near the window
            bool matched = false;
            const std::size_t back = e.step > cfg.k_intra ? e.step - cfg.k_intra : 0;
            for (std::size_t s = back; s <= e.step && s < trace.labels.size(); ++s) {
                const auto& l = trace.labels[s];
                if (l.intra || l.inter || l.inst) matched = true;
            }
            if (!matched) ++false_events;
        }

        // easy-instance traces must fire exactly once, at step K, exact payload
        if (specs[i].instance == InstanceProfile::easy) {
            std::size_t inst_count = 0;
            for (const auto& e : result.events) {
                if (e.level != Level::inst) continue;
                ++inst_count;
                if (e.step != cfg.instance_prefix ||
                    e.payload != "Okay, I have finished thinking.") {
                    inst_protocol_ok = false;
                }
            }
            if (inst_count != 1) inst_protocol_ok = false;
        }
    }
    fs::remove_all(dir);

    bool pass = inst_protocol_ok;
    std::ostringstream d;
    for (Level level : {Level::intra, Level::inter, Level::inst}) {
        const std::size_t idx = static_cast<std::size_t>(level);
        const double recall =
            spans[idx] ? static_cast<double>(hits[idx]) / spans[idx] : 1.0;
        pass = pass && recall >= 0.90;
        d << level_name(level) << " recall=" << recall << " ";
    }
    const double false_rate = 100.0 * false_events / std::max<std::size_t>(clean_steps, 1);
    pass = pass && false_rate <= 0.05;
    d << "false/100clean=" << false_rate << " instOnce=" << (inst_protocol_ok ? "y" : "n");
    report(7, pass, d.str());
}

// --- 8: reconstruction grammar + masks + byte-identical reruns -------------
void criterion_8() {
    std::vector<ReasoningSample> raw;
    for (int i = 0; i < 500; ++i) {
        std::string output;
        const int steps = 2 + i % 7;
        for (int s = 0; s < steps; ++s) {
            if (s) output += "\n\n";
            output += "Step " + std::to_string(s + 1) + ": compute q" +
                      std::to_string(i) + " = " + std::to_string(s + 5) + " - " +
                      std::to_string(s + 1) + " and carry it forward.";
        }
        raw.push_back(make_sample("Problem " + std::to_string(i), output));
    }

    auto rewriter = Rewriter::rule_based({3, 88});
    CorpusConfig cfg;
    cfg.seed = 88;
    cfg.variants_per_sample = 2;  // 1000 samples
    CorpusReport rep;
    const auto corpus = build_corpus(raw, rewriter, cfg, &rep);

    bool pass = corpus.size() == 1000;
    std::size_t grammar_ok = 0;
    for (const auto& rec : corpus) {
        try {
            verify_grammar(rec);
            // the mask hole is exactly the trigger and the input is excluded
            const auto spans = rec.mask();
            const std::string full = rec.full_text();
            const bool mask_ok =
                spans.size() == 2 && spans[0].begin == rec.input.size() + 2 &&
                full.substr(spans[0].end, spans[1].begin - spans[0].end) == rec.trigger &&
                spans[1].end == full.size();
            if (mask_ok) ++grammar_ok;
        } catch (const std::exception&) {
        }
    }
    pass = pass && grammar_ok == corpus.size();

    const auto corpus2 = build_corpus(raw, rewriter, cfg, nullptr);
    const fs::path dir = fs::temp_directory_path() / "neuromon_acceptance_corpus";
    fs::create_directories(dir);
    emit_corpus(corpus, dir / "a.jsonl");
    emit_corpus(corpus2, dir / "b.jsonl");
    std::ifstream fa(dir / "a.jsonl", std::ios::binary);
    std::ifstream fb(dir / "b.jsonl", std::ios::binary);
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    const bool identical = sa.str() == sb.str() && !sa.str().empty();
    fs::remove_all(dir);
    pass = pass && identical;

    std::ostringstream d;
    d << corpus.size() << " samples, " << grammar_ok << " grammar+mask ok, rerun "
      << (identical ? "byte-identical" : "differs");
    report(8, pass, d.str());
}

// --- 9: MoN selection properties -------------------------------------------
void criterion_9() {
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<std::size_t> neuron_dist(2, 12);
    std::uniform_int_distribution<std::size_t> step_dist(1, 6);
    std::uniform_real_distribution<double> score(-5.0, 5.0);

    bool monotone = true;
    bool permutation_invariant = true;
    for (int trial = 0; trial < 1000; ++trial) {
        AttributionMatrix m;
        const std::size_t n = neuron_dist(rng);
        m.steps = step_dist(rng);
        for (std::size_t i = 0; i < n; ++i) {
            m.neurons.push_back({i + 1, NeuronKind::ffn, 0});
        }
        m.scores.resize(n * m.steps);
        for (double& s : m.scores) s = score(rng);

        std::vector<std::uint64_t> prev;
        for (std::size_t k = 1; k <= n; ++k) {
            const auto sel = select_mon(m, k, Level::intra);
            std::vector<std::uint64_t> ids;
            for (const auto& id : sel.neurons) ids.push_back(id.id);
            if (!std::includes(ids.begin(), ids.end(), prev.begin(), prev.end())) {
                monotone = false;
            }
            prev = std::move(ids);
        }

        // shuffle the time-step columns; the intersection cannot change
        std::vector<std::size_t> order(m.steps);
        for (std::size_t s = 0; s < m.steps; ++s) order[s] = s;
        std::shuffle(order.begin(), order.end(), rng);
        AttributionMatrix shuffled = m;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t s = 0; s < m.steps; ++s) {
                shuffled.scores[i * m.steps + s] = m.score(i, order[s]);
            }
        }
        const std::size_t k = 1 + trial % n;
        const auto a = select_mon(m, k, Level::inter);
        const auto b = select_mon(shuffled, k, Level::inter);
        if (a.neurons != b.neurons) permutation_invariant = false;
    }

    AttributionMatrix worked;
    worked.steps = 2;
    worked.neurons = {{1, NeuronKind::ffn, 0}, {2, NeuronKind::ffn, 0},
                      {3, NeuronKind::ffn, 0}};
    worked.scores = {5, 1, 3, 4, 2, 2};
    const auto sel = select_mon(worked, 2, Level::intra);
    const bool worked_ok = sel.neurons.size() == 1 && sel.neurons[0].id == 2;

    std::ostringstream d;
    d << "monotone=" << monotone << " permInv=" << permutation_invariant
      << " worked3x2=" << worked_ok;
    report(9, monotone && permutation_invariant && worked_ok, d.str());
}

// --- 10: wire robustness ---------------------------------------------------
void criterion_10() {
    std::mutex mu;
    bool ordered = true;
    std::map<std::uint64_t, std::uint64_t> next_expected;  // per stream
    std::size_t frames_seen = 0;
    bool unclean_close = false;
    std::condition_variable closed_cv;
    std::size_t closes = 0;

    StreamServer server(
        [&](const ActivationFrame& frame) -> std::string {
            std::lock_guard<std::mutex> lock(mu);
            if (!frame.end_of_stream) {
                if (frame.token_index != next_expected[frame.stream_id]) ordered = false;
                ++next_expected[frame.stream_id];
                ++frames_seen;
            }
            if (frame.step_end && frame.token_index == 5000) {
                return R"({"at":5001,"force":"<INTRA>"})";
            }
            return {};
        },
        [&](std::uint64_t, bool clean) {
            std::lock_guard<std::mutex> lock(mu);
            if (!clean) unclean_close = true;
            ++closes;
            closed_cv.notify_all();
        });
    server.start();

    std::string directive_at_checkpoint;
    {
        StreamClient client("127.0.0.1", server.port());
        for (std::uint64_t t = 0; t < 10000; ++t) {
            ActivationFrame frame;
            frame.stream_id = 1;
            frame.token_index = t;
            frame.step_end = t % 10 == 0;
            frame.values = {1.0, 2.0};
            auto response = client.send(frame);
            if (t == 5000 && response) directive_at_checkpoint = *response;
        }
        ActivationFrame eos;
        eos.stream_id = 1;
        eos.end_of_stream = true;
        client.send(eos);
        client.close();
    }
    {
        // second session vanishes mid-stream without a sentinel
        StreamClient client("127.0.0.1", server.port());
        for (std::uint64_t t = 0; t < 25; ++t) {
            ActivationFrame frame;
            frame.stream_id = 2;
            frame.token_index = t;
            frame.values = {0.5};
            client.send(frame);
        }
        client.close();
    }
    {
        std::unique_lock<std::mutex> lock(mu);
        closed_cv.wait_for(lock, std::chrono::seconds(10), [&] { return closes >= 2; });
    }
    server.stop();

    const bool pass = ordered && frames_seen >= 10000 &&
                      directive_at_checkpoint == R"({"at":5001,"force":"<INTRA>"})" &&
                      unclean_close;
    std::ostringstream d;
    d << "ordered=" << ordered << " frames=" << frames_seen << " directive="
      << (directive_at_checkpoint.empty() ? "<none>" : "delivered")
      << " truncated=" << unclean_close;
    report(10, pass, d.str());
}

}  // namespace

int main() {
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    const TrainedStack stack = train_stack();
    criterion_6(stack);
    criterion_7(stack);
    criterion_8();
    criterion_9();
    criterion_10();
    std::cout << (failures == 0 ? "ALL CRITERIA PASSED" : "FAILURES PRESENT") << "\n";
    return failures == 0 ? 0 : 1;
}
