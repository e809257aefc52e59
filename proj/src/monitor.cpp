#include "neuromon/monitor.hpp"

#include <algorithm>

#include "json.hpp"
#include "neuromon/errors.hpp"

namespace neuromon {

const std::string& MonitorConfig::payload(Level level) const {
    switch (level) {
        case Level::intra: return intra_payload;
        case Level::inter: return inter_payload;
        case Level::inst: return inst_payload;
    }
    throw InputError("bad level");
}

std::size_t MonitorConfig::refractory(Level level) const {
    if (refractory_steps > 0) return refractory_steps;
    switch (level) {
        case Level::intra: return 2 * k_intra;
        case Level::inter: return 2 * k_inter;
        case Level::inst: return 2 * instance_prefix;
    }
    throw InputError("bad level");
}

void MonitorConfig::validate() const {
    auto standard = [](std::size_t k) { return k == 2 || k == 4 || k == 8; };
    if (!allow_nonstandard_k &&
        (!standard(k_intra) || !standard(k_inter) || !standard(instance_prefix))) {
        throw ConfigError("window step counts must come from {2,4,8} unless overridden");
    }
    if (k_intra == 0 || k_inter == 0 || instance_prefix == 0) {
        throw ConfigError("window step counts must be positive");
    }
    for (double t : thresholds) {
        if (!(t > 0.0 && t < 1.0)) throw ConfigError("thresholds must lie in (0,1)");
    }
    if (eval_stride == 0) throw ConfigError("eval stride must be positive");
    if (min_consecutive == 0) throw ConfigError("min consecutive hits must be positive");
}

const MlpModel& MonitorModels::at(Level level) const {
    switch (level) {
        case Level::intra: return intra;
        case Level::inter: return inter;
        case Level::inst: return inst;
    }
    throw InputError("bad level");
}

Directive decode_constraint(const InterventionEvent& event) {
    return {event.payload, event.token_position + 1};
}

std::string directive_json(const Directive& directive) {
    nlohmann::json j;
    j["force"] = directive.force;
    j["at"] = directive.at;
    return j.dump();
}

std::string event_log_line(const InterventionEvent& event) {
    nlohmann::json j;
    j["stream"] = event.stream_id;
    j["tau"] = event.token_position;
    j["step"] = event.step;
    j["level"] = level_name(event.level);
    j["probability"] = event.probability;
    j["payload"] = event.payload;
    return j.dump();
}

MonitorModels train_detectors(const std::array<LevelSplit, 3>& splits,
                              std::uint64_t probe_hash, std::uint64_t seed,
                              std::array<TrainReport, 3>* reports) {
    MonitorModels models;
    for (Level level : {Level::intra, Level::inter, Level::inst}) {
        const std::size_t idx = static_cast<std::size_t>(level);
        const LevelSplit& split = splits[idx];
        TrainConfig cfg;
        cfg.seed = seed + idx;
        // aim for a couple thousand optimizer updates regardless of set size
        const std::size_t per_epoch =
            (split.train.size() + cfg.batch_size - 1) / cfg.batch_size;
        cfg.epochs = std::clamp<std::size_t>(2000 / std::max<std::size_t>(per_epoch, 1),
                                             40, 1500);
        TrainReport* report = reports ? &(*reports)[idx] : nullptr;
        MlpModel model = train(split.train, split.test, cfg, level, probe_hash, report);
        switch (level) {
            case Level::intra: models.intra = std::move(model); break;
            case Level::inter: models.inter = std::move(model); break;
            case Level::inst: models.inst = std::move(model); break;
        }
    }
    return models;
}

double aggregate_probability(const MlpModel& model,
                             const std::vector<FeatureVector>& per_channel,
                             Aggregation mode) {
    if (per_channel.empty()) throw ConfigError("aggregate: empty expert neuron set");
    if (mode == Aggregation::max_probability) {
        double best = 0.0;
        for (const FeatureVector& f : per_channel) {
            best = std::max(best, forward(model, f.as_span()));
        }
        return best;
    }
    const std::size_t dim = per_channel.front().dim;
    std::vector<double> mean(dim, 0.0);
    for (const FeatureVector& f : per_channel) {
        for (std::size_t i = 0; i < dim; ++i) mean[i] += f.values[i];
    }
    for (double& v : mean) v /= static_cast<double>(per_channel.size());
    return forward(model, mean);
}

Monitor::Monitor(MonitorConfig config, MonitorModels models, std::size_t channels)
    : config_(std::move(config)),
      models_(std::move(models)),
      channels_(channels),
      intra_{SpectralWindowState(channels, config_.probes, config_.epsilon), {}, 0},
      inter_{SpectralWindowState(channels, config_.probes, config_.epsilon), {}, 0},
      inst_{SpectralWindowState(channels, config_.probes, config_.epsilon), {}, 0} {
    config_.validate();
    const std::uint64_t expected = config_.probes.hash();
    for (Level level : {Level::intra, Level::inter, Level::inst}) {
        const MlpModel& m = models_.at(level);
        if (m.level != level) throw ConfigError("model level tag does not match its slot");
        if (m.probe_hash != expected) {
            throw ConfigError("model was trained against a different probe set");
        }
        m.validate();
    }
    if (channels_ == 0) throw ConfigError("monitor needs at least one channel");
}

std::size_t Monitor::window_tokens(Level level) const {
    switch (level) {
        case Level::intra: return intra_.state.length();
        case Level::inter: return inter_.state.length();
        case Level::inst: return inst_.state.length();
    }
    throw InputError("bad level");
}

std::optional<InterventionEvent> Monitor::evaluate(Level level, LevelWindow& window,
                                                   const ActivationFrame& frame) {
    if (window.state.length() < 2) return std::nullopt;
    const auto per_channel = window.state.features(level);
    const double p = aggregate_probability(models_.at(level), per_channel,
                                           config_.aggregation);
    ++evaluations_;

    if (dump_enabled_) {
        EvaluationRecord rec;
        rec.level = level;
        rec.token_index = frame.token_index;
        rec.step = step_;
        rec.probability = p;
        rec.features.level = level;
        rec.features.dim = level_dim(level);
        for (const FeatureVector& f : per_channel) {
            for (std::size_t i = 0; i < rec.features.dim; ++i) {
                rec.features.values[i] += f.values[i];
            }
        }
        for (std::size_t i = 0; i < rec.features.dim; ++i) {
            rec.features.values[i] /= static_cast<double>(per_channel.size());
        }
        dump_.push_back(rec);
    }

    const std::size_t idx = static_cast<std::size_t>(level);
    if (p < config_.thresholds[idx]) {
        consecutive_hits_[idx] = 0;
        return std::nullopt;
    }
    ++consecutive_hits_[idx];
    const std::size_t needed = level == Level::inst ? 1 : config_.min_consecutive;
    if (consecutive_hits_[idx] < needed) return std::nullopt;
    const auto& last = last_event_step_[static_cast<std::size_t>(level)];
    if (last && step_ - *last < config_.refractory(level)) return std::nullopt;

    InterventionEvent event;
    event.level = level;
    event.stream_id = frame.stream_id;
    event.token_position = frame.token_index;
    event.step = step_;
    event.probability = p;
    event.payload = config_.payload(level);
    event.window_snapshot = evaluations_;
    return event;
}

std::optional<InterventionEvent> Monitor::on_frame(const ActivationFrame& frame) {
    if (finished_) throw ProtocolError("frame received after end of stream");
    if (frame.end_of_stream) {
        finalize(true);
        return std::nullopt;
    }
    if (frame.values.size() != channels_) {
        throw ConfigError("frame channel count does not cover the monitored neurons");
    }

    intra_.state.push(frame.values);
    ++intra_.current_step_tokens;
    inter_.state.push(frame.values);
    ++inter_.current_step_tokens;
    if (inst_armed_) {
        inst_.state.push(frame.values);
        ++inst_.current_step_tokens;
    }
    ++tokens_seen_;

    bool inst_due = false;
    if (frame.step_end) {
        auto complete = [](LevelWindow& w, std::size_t k) {
            w.step_tokens.push_back(w.current_step_tokens);
            w.current_step_tokens = 0;
            if (w.step_tokens.size() > k) {
                w.state.pop(w.step_tokens.front());
                w.step_tokens.pop_front();
            }
        };
        complete(intra_, config_.k_intra);
        complete(inter_, config_.k_inter);
        if (inst_armed_) {
            inst_.step_tokens.push_back(inst_.current_step_tokens);
            inst_.current_step_tokens = 0;
        }
        ++step_;
        inst_due = inst_armed_ && step_ == config_.instance_prefix;
    }

    std::optional<InterventionEvent> best;
    const bool cadence = frame.step_end || tokens_seen_ % config_.eval_stride == 0;
    if (cadence) {
        for (Level level : {Level::intra, Level::inter}) {
            auto candidate =
                evaluate(level, level == Level::intra ? intra_ : inter_, frame);
            if (candidate && (!best || candidate->probability > best->probability)) {
                best = std::move(candidate);
            }
        }
    }
    if (inst_due) {
        auto candidate = evaluate(Level::inst, inst_, frame);
        inst_armed_ = false;  // single shot, resolved whatever the outcome
        if (candidate && (!best || candidate->probability > best->probability)) {
            best = std::move(candidate);
        }
    }

    if (best) {
        consecutive_hits_[static_cast<std::size_t>(best->level)] = 0;
        last_event_step_[static_cast<std::size_t>(best->level)] = best->step;
        last_event_token_ = best->token_position;
        events_.push_back(*best);
    }
    return best;
}

void Monitor::finalize(bool clean) {
    finished_ = true;
    truncated_ = !clean;
}

ReplayResult replay(const std::filesystem::path& path, TraceFormat format,
                    const MonitorConfig& config, const MonitorModels& models,
                    bool dump_features) {
    TraceReader reader(path, format);
    std::optional<Monitor> monitor;
    while (auto frame = reader.next()) {
        if (!monitor) {
            monitor.emplace(config, models,
                            frame->end_of_stream ? 0 : frame->values.size());
            if (dump_features) monitor->enable_feature_dump();
        }
        monitor->on_frame(*frame);
    }
    if (!monitor) throw ParseError("empty trace");

    ReplayResult out;
    out.events = monitor->events();
    out.feature_dump = monitor->feature_dump();
    out.truncated = monitor->truncated();
    out.evaluations = monitor->evaluations();
    out.steps = monitor->current_step();
    return out;
}

}  // namespace neuromon
