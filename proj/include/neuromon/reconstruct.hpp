#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "neuromon/spectral.hpp"

namespace neuromon {

/// Splits on "\n\n", dropping empty segments.
std::vector<std::string> segment(const std::string& text);

struct ReasoningSample {
    std::string input;
    std::string output;
    std::vector<std::string> steps;
    /// True when rejoining steps with single delimiters does not reproduce
    /// the original output byte for byte (runs of blank lines collapsed).
    bool canonicalized = false;
};

ReasoningSample make_sample(std::string input, std::string output);

enum class StepPolicy { uniform_random, middle_biased, explicit_indices };

struct CriticalStepConfig {
    StepPolicy policy = StepPolicy::middle_biased;
    std::vector<std::size_t> explicit_indices;  // 1-based
};

/// One 1-based step index. middle_biased draws from 2..K-1 with triangular
/// weights peaking near K/2 (K=2 forces j=2).
std::size_t choose_critical_step(std::size_t step_count, const CriticalStepConfig& config,
                                 std::mt19937_64& rng);

struct TemplateBlock {
    std::string prompt;      // p: failure announcement
    std::string diagnosis;   // d
    std::string correction;  // c
};

struct TemplateSet {
    TemplateBlock intra;
    TemplateBlock inter;

    const TemplateBlock& at(Level level) const;
    /// Prompts transcribe the reference trigger blocks; diagnosis/correction
    /// hold schematic placeholder text in rule-based runs.
    static TemplateSet defaults();
};

std::string trigger_token(Level level);  // "<INTRA>" / "<INTER>"

struct RewriteRules {
    std::size_t loop_paragraphs = 3;  // one of {3,4,5}
    std::uint64_t seed = 0;
};

struct RemoteConfig {
    std::string host;
    int port = 80;
    std::string path = "/v1/chat/completions";
    std::string model = "default";
    std::string api_key;  // sent in the Authorization header, never logged
    int max_retries = 2;

    /// Loggable description with the credential redacted.
    std::string describe() const;
};

class Rewriter {
public:
    static Rewriter rule_based(RewriteRules rules);
    static Rewriter remote(RemoteConfig config);

    /// Returns the perturbed step text; throws on remote failure after
    /// retries or when the rewrite cannot differ from the original.
    std::string rewrite(const ReasoningSample& sample, std::size_t j, Level level) const;

    bool is_remote() const { return remote_.has_value(); }

private:
    Rewriter() = default;
    RewriteRules rules_;
    std::optional<RemoteConfig> remote_;
};

struct MaskSpan {
    std::size_t begin = 0;  // character offsets into full_text(), half-open
    std::size_t end = 0;
};

struct ReconstructedSample {
    std::string input;
    Level level = Level::intra;
    std::size_t j = 1;  // 1-based perturbed step
    bool canonicalized = false;

    std::vector<std::string> prefix_steps;
    std::string rewritten;
    std::string trigger;
    TemplateBlock block;
    std::vector<std::string> suffix_steps;

    /// Output segments in order, joined with "\n\n".
    std::string output_text() const;
    /// input + "\n\n" + output_text()
    std::string full_text() const;
    /// Loss-included character ranges over full_text(): everything in the
    /// output except the trigger token. The input is never included.
    std::vector<MaskSpan> mask() const;
};

ReconstructedSample assemble(const ReasoningSample& sample, const std::string& rewritten,
                             std::size_t j, Level level, const TemplateSet& templates);

/// Checks segment order, single trigger occurrence and mask arithmetic.
void verify_grammar(const ReconstructedSample& sample);

struct CorpusReport {
    std::map<std::string, std::size_t> skipped;  // reason -> count
    std::size_t intra_count = 0;
    std::size_t inter_count = 0;
};

struct CorpusConfig {
    CriticalStepConfig critical;
    TemplateSet templates = TemplateSet::defaults();
    std::uint64_t seed = 0;
    std::size_t variants_per_sample = 1;
    // levels alternate intra/inter 1:1
};

std::vector<ReconstructedSample> build_corpus(const std::vector<ReasoningSample>& raw,
                                              const Rewriter& rewriter,
                                              const CorpusConfig& config,
                                              CorpusReport* report = nullptr);

/// Line-delimited records; written atomically (temp file + rename).
void emit_corpus(const std::vector<ReconstructedSample>& samples,
                 const std::filesystem::path& path);
std::vector<ReconstructedSample> load_corpus(const std::filesystem::path& path);

}  // namespace neuromon
