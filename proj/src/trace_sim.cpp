#include "neuromon/trace_sim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <numeric>
#include <random>

#include "neuromon/errors.hpp"

namespace neuromon {

bool StepLabels::label(Level level) const {
    switch (level) {
        case Level::intra: return intra;
        case Level::inter: return inter;
        case Level::inst: return inst;
    }
    throw InputError("bad level");
}

void SimSpec::validate() const {
    if (channels == 0 || steps == 0) throw InputError("SimSpec: empty shape");
    if (min_tokens_per_step == 0 || min_tokens_per_step > max_tokens_per_step) {
        throw InputError("SimSpec: bad tokens-per-step range");
    }
    if (noise_scale <= 0.0 || ceiling <= 0.0) {
        throw InputError("SimSpec: noise scale and ceiling must be positive");
    }
    if (instance != InstanceProfile::none) {
        if (instance_magnitude <= 0.0) throw InputError("SimSpec: instance magnitude must be positive");
        if (instance_prefix_steps == 0 || instance_prefix_steps > steps) {
            throw InputError("SimSpec: instance prefix outside trace");
        }
    }
    for (const Injection& e : injections) {
        if (e.level == Level::inst) {
            throw InputError("SimSpec: use instance profile, not an injection, for inst");
        }
        if (e.magnitude <= 0.0) throw InputError("SimSpec: injection magnitude must be positive");
        if (e.duration_steps == 0 || e.onset_step + e.duration_steps > steps) {
            throw InputError("SimSpec: injection span outside trace");
        }
        if (e.level == Level::inter && e.period_tokens < 2) {
            throw InputError("SimSpec: inter period must be at least 2 tokens");
        }
    }
}

LabeledTrace generate(const SimSpec& spec) {
    spec.validate();
    std::mt19937_64 base_rng(spec.seed);
    std::mt19937_64 inject_rng(spec.seed ^ 0x5deece66d1ce1a85ULL);

    LabeledTrace trace;
    trace.labels.resize(spec.steps);

    std::uniform_int_distribution<std::size_t> token_dist(spec.min_tokens_per_step,
                                                          spec.max_tokens_per_step);
    std::vector<std::size_t> step_start(spec.steps);
    std::size_t total_tokens = 0;
    for (std::size_t s = 0; s < spec.steps; ++s) {
        step_start[s] = total_tokens;
        trace.step_token_counts.push_back(token_dist(base_rng));
        total_tokens += trace.step_token_counts.back();
    }

    trace.token_labels.resize(total_tokens);
    const double linear_noise = std::exp(spec.baseline_log_mean) * spec.noise_scale;

    // instance envelope per token: flare-up that decays (easy) or persists (hard)
    std::vector<double> envelope(total_tokens, 1.0);
    if (spec.instance != InstanceProfile::none) {
        const std::size_t prefix_tokens =
            step_start[spec.instance_prefix_steps - 1] +
            trace.step_token_counts[spec.instance_prefix_steps - 1];
        for (std::size_t t = 0; t < total_tokens; ++t) {
            if (spec.instance == InstanceProfile::hard) {
                envelope[t] = 1.0 + spec.instance_magnitude;
            } else if (t < prefix_tokens) {
                // rapid collapse: most of the flare is gone midway through the prefix
                const double frac = static_cast<double>(t) / static_cast<double>(prefix_tokens);
                envelope[t] = 1.0 + spec.instance_magnitude * std::exp(-6.0 * frac);
            }
        }
        const std::size_t last =
            spec.instance == InstanceProfile::hard ? spec.steps - 1 : spec.instance_prefix_steps - 1;
        if (spec.instance == InstanceProfile::easy) {
            for (std::size_t s = 0; s < spec.instance_prefix_steps; ++s) {
                trace.labels[s].inst = true;
            }
            const std::size_t prefix_tokens =
                step_start[spec.instance_prefix_steps - 1] +
                trace.step_token_counts[spec.instance_prefix_steps - 1];
            for (std::size_t t = 0; t < prefix_tokens; ++t) {
                trace.token_labels[t].inst = true;
            }
        }
        trace.events.push_back({Level::inst, 0, last});
    }

    // additive injections; token suppression factor for the trailing edge of a spike
    std::vector<double> additive(total_tokens, 0.0);
    std::vector<double> suppress(total_tokens, 1.0);
    for (const Injection& e : spec.injections) {
        const std::size_t first_token = step_start[e.onset_step];
        for (std::size_t s = e.onset_step; s < e.onset_step + e.duration_steps; ++s) {
            trace.labels[s].*(e.level == Level::intra ? &StepLabels::intra : &StepLabels::inter) =
                true;
        }
        trace.events.push_back({e.level, e.onset_step, e.onset_step + e.duration_steps - 1});

        if (e.level == Level::intra) {
            // one sharp spike-and-dip doublet per affected step
            for (std::size_t s = e.onset_step; s < e.onset_step + e.duration_steps; ++s) {
                const std::size_t count = trace.step_token_counts[s];
                std::uniform_int_distribution<std::size_t> pos_dist(0, count - 2);
                const std::size_t t = step_start[s] + pos_dist(inject_rng);
                additive[t] += e.magnitude * linear_noise;
                suppress[t + 1] = 0.05;
                // the doublet counts as present only once its trailing dip is in;
                // both tokens share a step, so they always leave the window together
                trace.token_labels[t + 1].intra = true;
            }
        } else {
            std::size_t span_tokens = 0;
            for (std::size_t s = e.onset_step; s < e.onset_step + e.duration_steps; ++s) {
                span_tokens += trace.step_token_counts[s];
            }
            const double amp = e.magnitude * linear_noise;
            for (std::size_t i = 0; i < span_tokens; ++i) {
                const double phase = 2.0 * std::numbers::pi * static_cast<double>(i) /
                                     static_cast<double>(e.period_tokens);
                additive[first_token + i] += amp * (1.0 + std::sin(phase));
                trace.token_labels[first_token + i].inter = true;
            }
        }
    }

    std::normal_distribution<double> log_noise(spec.baseline_log_mean, spec.noise_scale);
    trace.frames.resize(total_tokens);
    std::size_t step = 0;
    std::size_t step_remaining = trace.step_token_counts[0];
    for (std::size_t t = 0; t < total_tokens; ++t) {
        SimFrame& frame = trace.frames[t];
        frame.values.resize(spec.channels);
        for (std::size_t c = 0; c < spec.channels; ++c) {
            double v = std::exp(log_noise(base_rng)) * envelope[t];
            v = v * suppress[t] + additive[t];
            frame.values[c] = std::min(v, spec.ceiling);
        }
        if (--step_remaining == 0) {
            frame.step_end = true;
            if (++step < spec.steps) step_remaining = trace.step_token_counts[step];
        }
    }
    return trace;
}

std::vector<WindowSample> sweep_trace(const LabeledTrace& trace, Level level,
                                      const DatasetConfig& config) {
    if (trace.frames.empty()) throw InputError("sweep_trace: empty trace");
    const std::size_t channels = trace.frames.front().values.size();
    SpectralWindowState window(channels, config.probes, config.epsilon);

    const std::size_t limit =
        level == Level::inst ? config.instance_prefix : config.window_steps;
    std::deque<std::size_t> step_tokens_in_window;  // completed steps only
    std::deque<bool> affected;                      // per window token
    std::size_t affected_count = 0;
    std::vector<WindowSample> out;

    std::size_t step = 0;
    std::size_t step_tokens = 0;
    for (std::size_t t = 0; t < trace.frames.size(); ++t) {
        const SimFrame& frame = trace.frames[t];
        window.push(frame.values);
        ++step_tokens;
        const bool hit = trace.token_labels[t].label(level);
        affected.push_back(hit);
        affected_count += hit;

        const std::size_t token_step = step;
        if (frame.step_end) {
            step_tokens_in_window.push_back(step_tokens);
            step_tokens = 0;
            ++step;
            if (level != Level::inst && step_tokens_in_window.size() > limit) {
                std::size_t drop = step_tokens_in_window.front();
                step_tokens_in_window.pop_front();
                window.pop(drop);
                while (drop-- > 0) {
                    affected_count -= affected.front();
                    affected.pop_front();
                }
            }
        }

        const bool evaluate = level == Level::inst
                                  ? frame.step_end && step == limit
                                  : window.length() >= 2;
        if (!evaluate) continue;

        auto per_channel = window.features(level);
        WindowSample sample;
        sample.step = token_step;
        sample.features.level = level;
        sample.features.dim = level_dim(level);
        for (const FeatureVector& f : per_channel) {
            for (std::size_t i = 0; i < sample.features.dim; ++i) {
                sample.features.values[i] += f.values[i];
            }
        }
        for (std::size_t i = 0; i < sample.features.dim; ++i) {
            sample.features.values[i] /= static_cast<double>(per_channel.size());
        }
        sample.label = affected_count > 0 ? 1 : 0;
        out.push_back(std::move(sample));
        if (level == Level::inst) break;
    }
    return out;
}

std::array<LevelSplit, 3> build_dataset(const std::vector<SimSpec>& specs,
                                        const DatasetConfig& config) {
    if (specs.empty()) throw InputError("build_dataset: no specs");

    std::vector<std::size_t> order(specs.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(config.split_seed);
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t train_count = static_cast<std::size_t>(
        std::ceil(config.train_fraction * static_cast<double>(specs.size())));

    std::array<LevelSplit, 3> out;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        const LabeledTrace trace = generate(specs[order[rank]]);
        const bool is_train = rank < train_count;
        for (Level level : {Level::intra, Level::inter, Level::inst}) {
            auto& split = out[static_cast<std::size_t>(level)];
            Dataset& target = is_train ? split.train : split.test;
            for (const WindowSample& w : sweep_trace(trace, level, config)) {
                LabeledSample s;
                s.features.assign(w.features.as_span().begin(), w.features.as_span().end());
                s.label = w.label;
                target.push_back(std::move(s));
            }
        }
    }

    for (Level level : {Level::intra, Level::inter, Level::inst}) {
        const auto& split = out[static_cast<std::size_t>(level)];
        for (const Dataset* d : {&split.train, &split.test}) {
            bool pos = false, neg = false;
            for (const auto& s : *d) (s.label ? pos : neg) = true;
            if (!pos || !neg) {
                throw InputError(std::string("build_dataset: class absent for level ") +
                                 level_name(level));
            }
        }
    }
    return out;
}

void write_trace_file(const LabeledTrace& trace, const std::filesystem::path& path,
                      TraceFormat format, std::uint64_t stream_id) {
    TraceWriter writer(path, format);
    std::uint64_t t = 0;
    for (const SimFrame& f : trace.frames) {
        ActivationFrame frame;
        frame.stream_id = stream_id;
        frame.token_index = t++;
        frame.step_end = f.step_end;
        frame.values = f.values;
        writer.write(frame);
    }
    writer.finish(stream_id);
}

void write_label_sidecar(const LabeledTrace& trace, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "step intra inter inst tokens\n";
    for (std::size_t s = 0; s < trace.labels.size(); ++s) {
        out << s << ' ' << trace.labels[s].intra << ' ' << trace.labels[s].inter << ' '
            << trace.labels[s].inst << ' ' << trace.step_token_counts[s] << "\n";
    }
}

std::vector<SimSpec> default_corpus(std::size_t traces, std::size_t channels,
                                    std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<SimSpec> out;
    for (std::size_t i = 0; i < traces; ++i) {
        SimSpec spec;
        spec.channels = channels;
        spec.seed = seed * 1000003ULL + i;
        std::uniform_int_distribution<std::size_t> onset_dist(4, spec.steps - 8);
        std::uniform_int_distribution<std::size_t> dur_dist(4, 7);
        switch (i % 5) {
            case 0:
                break;  // clean
            case 1:
                spec.injections.push_back(
                    {Level::intra, onset_dist(rng), dur_dist(rng), 10.0, 12});
                break;
            case 2:
                spec.injections.push_back({Level::inter, onset_dist(rng), dur_dist(rng), 5.0, 8});
                break;
            case 3:
                spec.instance = InstanceProfile::easy;
                break;
            case 4:
                spec.instance = InstanceProfile::hard;
                break;
        }
        out.push_back(std::move(spec));
    }
    return out;
}

}  // namespace neuromon
