#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "neuromon/classifier.hpp"
#include "neuromon/ingest.hpp"
#include "neuromon/spectral.hpp"

namespace neuromon {

/// Whole-trace activity profile: easy instances flare up then collapse within
/// the first prefix steps, hard ones sustain the elevated activity.
enum class InstanceProfile { none, easy, hard };

struct Injection {
    Level level = Level::intra;  // intra or inter
    std::size_t onset_step = 0;
    std::size_t duration_steps = 1;
    double magnitude = 6.0;          // in multiples of the linear noise scale
    std::size_t period_tokens = 12;  // inter only
};

struct SimSpec {
    std::size_t channels = 8;
    std::size_t steps = 24;
    std::size_t min_tokens_per_step = 8;
    std::size_t max_tokens_per_step = 16;
    double baseline_log_mean = 0.0;  // log-normal baseline magnitudes
    double noise_scale = 0.25;       // log-space sigma
    InstanceProfile instance = InstanceProfile::none;
    double instance_magnitude = 3.0;
    std::size_t instance_prefix_steps = 4;
    std::vector<Injection> injections;
    double ceiling = 1e6;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SimFrame {
    std::vector<double> values;
    bool step_end = false;
};

struct StepLabels {
    bool intra = false;
    bool inter = false;
    bool inst = false;

    bool label(Level level) const;
};

struct EventSpan {
    Level level = Level::intra;
    std::size_t first_step = 0;
    std::size_t last_step = 0;  // inclusive
};

struct LabeledTrace {
    std::vector<SimFrame> frames;
    std::vector<std::size_t> step_token_counts;
    std::vector<StepLabels> labels;        // one per step
    std::vector<StepLabels> token_labels;  // one per token; true on affected tokens
    std::vector<EventSpan> events;
};

/// Deterministic under spec.seed; injections draw from a separate stream so a
/// spec with and without events shares the identical baseline.
LabeledTrace generate(const SimSpec& spec);

struct DatasetConfig {
    ProbeSet probes = ProbeSet::uniform_default();
    std::size_t window_steps = 4;     // k for intra/inter windows
    std::size_t instance_prefix = 4;  // K
    double epsilon = kDefaultEpsilon;
    double train_fraction = 0.8;
    std::uint64_t split_seed = 0;
};

struct WindowSample {
    std::size_t step = 0;
    FeatureVector features;  // mean across channels
    int label = 0;
};

/// Windowed features at every token, sliding exactly as the monitor does;
/// inst yields a single sample once the prefix completes. A window is labeled
/// positive when it holds at least one affected token.
std::vector<WindowSample> sweep_trace(const LabeledTrace& trace, Level level,
                                      const DatasetConfig& config);

struct LevelSplit {
    Dataset train;
    Dataset test;
};

/// Per-level labeled datasets, split by trace (never by window).
/// Index with static_cast<std::size_t>(level).
std::array<LevelSplit, 3> build_dataset(const std::vector<SimSpec>& specs,
                                        const DatasetConfig& config);

/// Balanced mix of clean, intra, inter, instance-easy and instance-hard specs.
std::vector<SimSpec> default_corpus(std::size_t traces, std::size_t channels,
                                    std::uint64_t seed);

/// Writes the frames in the ingest activation-frame format (with sentinel)
/// plus an optional step-keyed label sidecar.
void write_trace_file(const LabeledTrace& trace, const std::filesystem::path& path,
                      TraceFormat format, std::uint64_t stream_id = 0);
void write_label_sidecar(const LabeledTrace& trace, const std::filesystem::path& path);

}  // namespace neuromon
