#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "neuromon/classifier.hpp"
#include "neuromon/ingest.hpp"
#include "neuromon/spectral.hpp"
#include "neuromon/trace_sim.hpp"

namespace neuromon {

enum class Aggregation { mean_features, max_probability };

struct MonitorConfig {
    std::size_t k_intra = 4;
    std::size_t k_inter = 4;
    std::size_t instance_prefix = 4;  // K
    bool allow_nonstandard_k = false;  // k outside {2,4,8} needs an explicit opt-in
    std::array<double, 3> thresholds{0.5, 0.5, 0.5};  // indexed by Level
    std::size_t refractory_steps = 0;  // 0 picks the default 2*k per level
    Aggregation aggregation = Aggregation::mean_features;
    ProbeSet probes = ProbeSet::uniform_default();
    std::size_t eval_stride = 1;  // evaluate intra/inter every this many tokens
    /// Debounce: intra/inter events need this many consecutive evaluations
    /// above threshold before firing (the single-shot instance check is exempt).
    std::size_t min_consecutive = 1;
    double epsilon = kDefaultEpsilon;

    std::string intra_payload = "<INTRA>";
    std::string inter_payload = "<INTER>";
    std::string inst_payload = "Okay, I have finished thinking.";

    const std::string& payload(Level level) const;
    std::size_t refractory(Level level) const;
    void validate() const;
};

struct InterventionEvent {
    Level level = Level::intra;
    std::uint64_t stream_id = 0;
    std::uint64_t token_position = 0;  // tau
    std::size_t step = 0;
    double probability = 0.0;
    std::string payload;
    std::uint64_t window_snapshot = 0;
};

struct Directive {
    std::string force;     // token(s) the runtime must emit
    std::uint64_t at = 0;  // tau + 1; free decoding resumes at tau + 2
};

Directive decode_constraint(const InterventionEvent& event);
std::string directive_json(const Directive& directive);

struct MonitorModels {
    MlpModel intra;
    MlpModel inter;
    MlpModel inst;

    const MlpModel& at(Level level) const;
};

/// Trains one detector per level from a build_dataset output. Epochs scale
/// with dataset size so small instance-level sets still get enough updates.
MonitorModels train_detectors(const std::array<LevelSplit, 3>& splits,
                              std::uint64_t probe_hash, std::uint64_t seed,
                              std::array<TrainReport, 3>* reports = nullptr);

/// Probability for one window under the configured aggregation mode.
double aggregate_probability(const MlpModel& model,
                             const std::vector<FeatureVector>& per_channel,
                             Aggregation mode);

struct EvaluationRecord {
    Level level;
    std::uint64_t token_index;
    std::size_t step;
    FeatureVector features;  // aggregated (mean across channels)
    double probability;
};

/// Per-stream online engine. Single-owner mutable; models and config shared.
class Monitor {
public:
    Monitor(MonitorConfig config, MonitorModels models, std::size_t channels);

    std::optional<InterventionEvent> on_frame(const ActivationFrame& frame);

    /// Marks the stream closed; unclean closes flag the stream truncated.
    void finalize(bool clean);

    bool finished() const { return finished_; }
    bool truncated() const { return truncated_; }
    const std::vector<InterventionEvent>& events() const { return events_; }
    std::size_t evaluations() const { return evaluations_; }
    std::size_t current_step() const { return step_; }

    /// Tokens currently held by a level's window (tests the pop bookkeeping).
    std::size_t window_tokens(Level level) const;

    void enable_feature_dump() { dump_enabled_ = true; }
    const std::vector<EvaluationRecord>& feature_dump() const { return dump_; }

private:
    struct LevelWindow {
        SpectralWindowState state;
        std::deque<std::size_t> step_tokens;  // completed steps in window
        std::size_t current_step_tokens = 0;
    };

    std::optional<InterventionEvent> evaluate(Level level, LevelWindow& window,
                                              const ActivationFrame& frame);

    MonitorConfig config_;
    MonitorModels models_;
    std::size_t channels_;

    LevelWindow intra_;
    LevelWindow inter_;
    LevelWindow inst_;
    bool inst_armed_ = true;

    std::size_t step_ = 0;
    std::uint64_t tokens_seen_ = 0;
    std::array<std::size_t, 3> consecutive_hits_{};
    std::array<std::optional<std::size_t>, 3> last_event_step_;
    std::optional<std::uint64_t> last_event_token_;

    bool finished_ = false;
    bool truncated_ = false;
    std::vector<InterventionEvent> events_;
    std::size_t evaluations_ = 0;
    bool dump_enabled_ = false;
    std::vector<EvaluationRecord> dump_;
};

struct ReplayResult {
    std::vector<InterventionEvent> events;
    std::vector<EvaluationRecord> feature_dump;
    bool truncated = false;
    std::size_t evaluations = 0;
    std::size_t steps = 0;
};

/// Offline batch mode; drives the exact on_frame path over a trace file.
ReplayResult replay(const std::filesystem::path& path, TraceFormat format,
                    const MonitorConfig& config, const MonitorModels& models,
                    bool dump_features = false);

/// One structured-text log line per event.
std::string event_log_line(const InterventionEvent& event);

}  // namespace neuromon
