#include "neuromon/reconstruct.hpp"

#include <algorithm>
#include <fstream>

#include "httplib.h"
#include "json.hpp"
#include "neuromon/errors.hpp"

namespace neuromon {

namespace {

constexpr const char* kDelimiter = "\n\n";

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string join_steps(const std::vector<std::string>& steps) {
    std::string out;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        if (i > 0) out += kDelimiter;
        out += steps[i];
    }
    return out;
}

}  // namespace

std::vector<std::string> segment(const std::string& text) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t next = text.find(kDelimiter, pos);
        const std::string piece =
            next == std::string::npos ? text.substr(pos) : text.substr(pos, next - pos);
        if (!piece.empty()) out.push_back(piece);
        if (next == std::string::npos) break;
        pos = next + 2;
    }
    return out;
}

ReasoningSample make_sample(std::string input, std::string output) {
    ReasoningSample sample;
    sample.input = std::move(input);
    sample.output = std::move(output);
    sample.steps = segment(sample.output);
    sample.canonicalized = join_steps(sample.steps) != sample.output;
    return sample;
}

std::size_t choose_critical_step(std::size_t step_count, const CriticalStepConfig& config,
                                 std::mt19937_64& rng) {
    if (step_count < 2) throw InputError("choose_critical_step: needs at least two steps");
    switch (config.policy) {
        case StepPolicy::explicit_indices: {
            if (config.explicit_indices.empty()) {
                throw InputError("explicit policy without indices");
            }
            std::uniform_int_distribution<std::size_t> pick(
                0, config.explicit_indices.size() - 1);
            const std::size_t j = config.explicit_indices[pick(rng)];
            if (j < 1 || j > step_count) throw InputError("explicit step index out of range");
            return j;
        }
        case StepPolicy::uniform_random: {
            std::uniform_int_distribution<std::size_t> pick(1, step_count);
            return pick(rng);
        }
        case StepPolicy::middle_biased: {
            if (step_count <= 3) return 2;  // interior choices collapse
            std::vector<double> weights;
            for (std::size_t i = 2; i <= step_count - 1; ++i) {
                weights.push_back(static_cast<double>(
                    std::min(i - 1, step_count - i)));  // peaks near K/2
            }
            std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
            return 2 + pick(rng);
        }
    }
    throw InputError("bad step policy");
}

const TemplateBlock& TemplateSet::at(Level level) const {
    if (level == Level::intra) return intra;
    if (level == Level::inter) return inter;
    throw InputError("templates exist for intra and inter only");
}

TemplateSet TemplateSet::defaults() {
    TemplateSet t;
    t.intra.prompt =
        "[FAILURE_INTRA] A key reasoning error surfaced a few steps back. I should "
        "identify the mistaken span, briefly analyze it, and correct it before continuing.";
    t.intra.diagnosis =
        "- **error span**: \"[schematic placeholder: the wrong text span]\"\n"
        "- **analysis**: [schematic placeholder: why the span is wrong]";
    t.intra.correction =
        "[schematic placeholder] Back up, apply the correction, and continue the "
        "reasoning to the final answer.";
    t.inter.prompt =
        "[FAILURE_INTER] I'm stuck in an inter-step loop: I keep revisiting the same near "
        "equivalent checks and switching between them whenever one stalls, without any "
        "progress. Let me summarize the loop, then pivot to a genuinely different route.";
    t.inter.diagnosis =
        "- **past attempts summary:** [schematic placeholder: the repeated approaches]\n"
        "- **problem-grounded analysis:** [schematic placeholder: why they cannot break "
        "the core constraint]";
    t.inter.correction =
        "[schematic placeholder] Pivot to a genuinely different framework and execute "
        "its first concrete step.";
    return t;
}

std::string trigger_token(Level level) {
    if (level == Level::intra) return "<INTRA>";
    if (level == Level::inter) return "<INTER>";
    throw InputError("no trigger for this level");
}

std::string RemoteConfig::describe() const {
    return "remote rewriter at " + host + ":" + std::to_string(port) + path + " model=" +
           model + " auth=<redacted>";
}

Rewriter Rewriter::rule_based(RewriteRules rules) {
    if (rules.loop_paragraphs < 3 || rules.loop_paragraphs > 5) {
        throw ConfigError("loop paragraph count must be 3, 4 or 5");
    }
    Rewriter r;
    r.rules_ = rules;
    return r;
}

Rewriter Rewriter::remote(RemoteConfig config) {
    if (config.host.empty()) throw ConfigError("remote rewriter needs a host");
    Rewriter r;
    r.remote_ = std::move(config);
    return r;
}

namespace {

std::optional<std::string> flip_sign(const std::string& step) {
    const std::size_t minus = step.find(" - ");
    const std::size_t plus = step.find(" + ");
    if (minus == std::string::npos && plus == std::string::npos) return std::nullopt;
    std::string out = step;
    if (minus < plus) {
        out.replace(minus, 3, " + ");
    } else {
        out.replace(plus, 3, " - ");
    }
    return out;
}

std::optional<std::string> swap_operands(const std::string& step) {
    for (const char op : {'/', '*', '-'}) {
        const std::string needle = std::string(" ") + op + " ";
        const std::size_t at = step.find(needle);
        if (at == std::string::npos || at == 0) continue;
        // pull the whitespace-delimited operands on either side
        std::size_t lhs_begin = step.find_last_of(" \n", at - 1);
        lhs_begin = lhs_begin == std::string::npos ? 0 : lhs_begin + 1;
        std::size_t rhs_end = step.find_first_of(" \n.,;", at + 3);
        if (rhs_end == std::string::npos) rhs_end = step.size();
        const std::string lhs = step.substr(lhs_begin, at - lhs_begin);
        const std::string rhs = step.substr(at + 3, rhs_end - (at + 3));
        if (lhs.empty() || rhs.empty() || lhs == rhs) continue;
        std::string out = step.substr(0, lhs_begin) + rhs + needle + lhs + step.substr(rhs_end);
        return out;
    }
    return std::nullopt;
}

std::string drop_case(const std::string& step) {
    return step +
           "\nOnly the positive case needs attention here, so I'll silently discard the "
           "other branches.";
}

std::string loop_paragraph(std::size_t index) {
    switch (index % 3) {
        case 0:
            return "Let me re-derive the same relation once more: rearranging the "
                   "equation returns it to a form I already had, so nothing new is "
                   "pinned down yet.";
        case 1:
            return "Maybe a residue check helps: testing the same condition modulo a "
                   "small base again turns out permissive, exactly as before, so the "
                   "search space has not shrunk.";
        default:
            return "Alternatively I can swap the roles of the variables, but by symmetry "
                   "that reproduces the identical constraint, and I am back where I "
                   "started.";
    }
}

}  // namespace

std::string Rewriter::rewrite(const ReasoningSample& sample, std::size_t j,
                              Level level) const {
    if (j < 1 || j > sample.steps.size()) throw InputError("rewrite: step index out of range");
    if (level != Level::intra && level != Level::inter) {
        throw InputError("rewrite: level must be intra or inter");
    }
    const std::string& original = sample.steps[j - 1];

    if (remote_) {
        nlohmann::json body;
        body["model"] = remote_->model;
        const char* control = level == Level::intra
                                  ? "error_length: medium\nerror_type: sign_error\n"
                                    "style: LRM_natural_first_person"
                                  : "loop_length_paragraphs: 3\nloop_theme: "
                                    "equivalent_reformulations\nstyle: "
                                    "LRM_natural_first_person";
        body["messages"] = {
            {{"role", "system"},
             {"content", std::string("You are a data-construction assistant for SFT. "
                                     "Rewrite the indicated reasoning step to contain ") +
                             (level == Level::intra ? "an intra-step failure."
                                                    : "an inter-step stagnation loop.")}},
            {{"role", "user"},
             {"content", "<PROBLEM>\n" + sample.input + "\n</PROBLEM>\n\n"
                         "<REFERENCE_REASONING>\n" + sample.output +
                         "\n</REFERENCE_REASONING>\n\n<STEP_INDEX>" + std::to_string(j) +
                         "</STEP_INDEX>\n\n<CONTROL>\n" + control + "\n</CONTROL>"}}};

        httplib::Client client(remote_->host, remote_->port);
        httplib::Headers headers;
        if (!remote_->api_key.empty()) {
            headers.emplace("Authorization", "Bearer " + remote_->api_key);
        }
        for (int attempt = 0; attempt <= remote_->max_retries; ++attempt) {
            auto res = client.Post(remote_->path, headers, body.dump(), "application/json");
            if (!res || res->status != 200) continue;
            try {
                auto parsed = nlohmann::json::parse(res->body);
                std::string text =
                    parsed.at("choices").at(0).at("message").at("content").get<std::string>();
                if (!text.empty() && text != original) return text;
            } catch (const nlohmann::json::exception&) {
                // malformed response counts as a failed attempt
            }
        }
        throw IoError("remote rewrite failed after retries (" + remote_->describe() + ")");
    }

    if (level == Level::inter) {
        std::string out = original;
        for (std::size_t i = 0; i < rules_.loop_paragraphs; ++i) {
            out += kDelimiter;
            out += loop_paragraph(i);
        }
        return out;
    }

    // intra: seeded choice among sign flip, operand swap, dropped case
    std::mt19937_64 rng(rules_.seed ^ fnv1a(original) ^ (0x9e37ULL * j));
    std::uniform_int_distribution<int> pick(0, 2);
    const int first = pick(rng);
    for (int offset = 0; offset < 3; ++offset) {
        switch ((first + offset) % 3) {
            case 0:
                if (auto out = flip_sign(original); out && *out != original) return *out;
                break;
            case 1:
                if (auto out = swap_operands(original); out && *out != original) return *out;
                break;
            default:
                return drop_case(original);
        }
    }
    return drop_case(original);
}

std::string ReconstructedSample::output_text() const {
    std::vector<std::string> parts = prefix_steps;
    parts.push_back(rewritten);
    parts.push_back(trigger);
    parts.push_back(block.prompt);
    parts.push_back(block.diagnosis);
    parts.push_back(block.correction);
    parts.insert(parts.end(), suffix_steps.begin(), suffix_steps.end());
    return join_steps(parts);
}

std::string ReconstructedSample::full_text() const {
    return input + kDelimiter + output_text();
}

std::vector<MaskSpan> ReconstructedSample::mask() const {
    const std::size_t out_begin = input.size() + 2;
    std::size_t trigger_begin = out_begin;
    for (const std::string& s : prefix_steps) trigger_begin += s.size() + 2;
    trigger_begin += rewritten.size() + 2;
    const std::size_t trigger_end = trigger_begin + trigger.size();
    return {{out_begin, trigger_begin}, {trigger_end, full_text().size()}};
}

ReconstructedSample assemble(const ReasoningSample& sample, const std::string& rewritten,
                             std::size_t j, Level level, const TemplateSet& templates) {
    if (j < 1 || j > sample.steps.size()) throw InputError("assemble: step index out of range");
    if (rewritten.empty()) throw InputError("assemble: empty rewritten step");
    if (rewritten == sample.steps[j - 1]) {
        throw InputError("assemble: rewritten step equals the original");
    }
    const TemplateBlock& block = templates.at(level);
    if (block.prompt.empty() || block.diagnosis.empty() || block.correction.empty()) {
        throw InputError("assemble: missing template component");
    }

    ReconstructedSample out;
    out.input = sample.input;
    out.level = level;
    out.j = j;
    out.canonicalized = sample.canonicalized;
    out.prefix_steps.assign(sample.steps.begin(),
                            sample.steps.begin() + static_cast<std::ptrdiff_t>(j - 1));
    out.rewritten = rewritten;
    out.trigger = trigger_token(level);
    out.block = block;
    out.suffix_steps.assign(sample.steps.begin() + static_cast<std::ptrdiff_t>(j),
                            sample.steps.end());
    verify_grammar(out);
    return out;
}

void verify_grammar(const ReconstructedSample& sample) {
    if (sample.trigger != trigger_token(sample.level)) {
        throw InputError("grammar: trigger does not match the level");
    }
    const auto segments = segment(sample.output_text());
    const std::size_t expected_index =
        sample.prefix_steps.size() + segment(sample.rewritten).size();
    std::size_t occurrences = 0;
    for (const auto& s : segments) occurrences += s == sample.trigger;
    if (occurrences != 1) throw InputError("grammar: trigger must occur exactly once");
    if (expected_index >= segments.size() || segments[expected_index] != sample.trigger) {
        throw InputError("grammar: trigger is not immediately after the rewritten step");
    }

    const auto spans = sample.mask();
    const std::string full = sample.full_text();
    if (spans.size() != 2 || spans[0].begin != sample.input.size() + 2 ||
        spans[0].end + sample.trigger.size() != spans[1].begin ||
        spans[1].end != full.size() || spans[0].end <= spans[0].begin ||
        spans[1].end <= spans[1].begin) {
        throw InputError("grammar: mask spans inconsistent");
    }
    if (full.compare(spans[0].end, sample.trigger.size(), sample.trigger) != 0) {
        throw InputError("grammar: mask hole does not cover the trigger");
    }
}

std::vector<ReconstructedSample> build_corpus(const std::vector<ReasoningSample>& raw,
                                              const Rewriter& rewriter,
                                              const CorpusConfig& config,
                                              CorpusReport* report) {
    std::mt19937_64 rng(config.seed);
    std::vector<ReconstructedSample> out;
    std::size_t serial = 0;
    for (const ReasoningSample& sample : raw) {
        for (std::size_t v = 0; v < config.variants_per_sample; ++v, ++serial) {
            const Level level = serial % 2 == 0 ? Level::intra : Level::inter;
            if (sample.steps.size() < 2) {
                if (report) ++report->skipped["too_few_steps"];
                continue;
            }
            std::size_t j;
            try {
                j = choose_critical_step(sample.steps.size(), config.critical, rng);
            } catch (const InputError&) {
                if (report) ++report->skipped["step_selection_failed"];
                continue;
            }
            std::string rewritten;
            try {
                rewritten = rewriter.rewrite(sample, j, level);
                if (rewritten == sample.steps[j - 1]) {
                    rewritten = rewriter.rewrite(sample, j, level);  // one retry
                }
            } catch (const std::exception&) {
                if (report) ++report->skipped["rewrite_failed"];
                continue;
            }
            if (rewritten.empty() || rewritten == sample.steps[j - 1]) {
                if (report) ++report->skipped["rewrite_unchanged"];
                continue;
            }
            out.push_back(assemble(sample, rewritten, j, level, config.templates));
            if (report) {
                ++(level == Level::intra ? report->intra_count : report->inter_count);
            }
        }
    }
    return out;
}

namespace {

nlohmann::json sample_to_json(const ReconstructedSample& s) {
    nlohmann::json segments = nlohmann::json::array();
    for (const auto& p : s.prefix_steps) segments.push_back({{"role", "prefix"}, {"text", p}});
    segments.push_back({{"role", "rewritten"}, {"text", s.rewritten}});
    segments.push_back({{"role", "trigger"}, {"text", s.trigger}});
    segments.push_back({{"role", "prompt"}, {"text", s.block.prompt}});
    segments.push_back({{"role", "diagnosis"}, {"text", s.block.diagnosis}});
    segments.push_back({{"role", "correction"}, {"text", s.block.correction}});
    for (const auto& p : s.suffix_steps) segments.push_back({{"role", "suffix"}, {"text", p}});

    nlohmann::json mask = nlohmann::json::array();
    for (const auto& span : s.mask()) mask.push_back({span.begin, span.end});

    nlohmann::json j;
    j["input"] = s.input;
    j["level"] = level_name(s.level);
    j["j"] = s.j;
    j["canonicalized"] = s.canonicalized;
    j["segments"] = segments;
    j["mask"] = mask;
    return j;
}

ReconstructedSample sample_from_json(const nlohmann::json& j) {
    ReconstructedSample s;
    s.input = j.at("input").get<std::string>();
    s.level = level_from_name(j.at("level").get<std::string>());
    s.j = j.at("j").get<std::size_t>();
    s.canonicalized = j.at("canonicalized").get<bool>();
    for (const auto& seg : j.at("segments")) {
        const std::string role = seg.at("role").get<std::string>();
        const std::string text = seg.at("text").get<std::string>();
        if (role == "prefix") {
            s.prefix_steps.push_back(text);
        } else if (role == "rewritten") {
            s.rewritten = text;
        } else if (role == "trigger") {
            s.trigger = text;
        } else if (role == "prompt") {
            s.block.prompt = text;
        } else if (role == "diagnosis") {
            s.block.diagnosis = text;
        } else if (role == "correction") {
            s.block.correction = text;
        } else if (role == "suffix") {
            s.suffix_steps.push_back(text);
        } else {
            throw ParseError("unknown segment role: " + role);
        }
    }
    // stored mask must agree with the recomputed one
    const auto spans = s.mask();
    const auto& stored = j.at("mask");
    if (stored.size() != spans.size()) throw ParseError("mask span count mismatch");
    for (std::size_t i = 0; i < spans.size(); ++i) {
        if (stored[i][0].get<std::size_t>() != spans[i].begin ||
            stored[i][1].get<std::size_t>() != spans[i].end) {
            throw ParseError("mask spans disagree with segment lengths");
        }
    }
    verify_grammar(s);
    return s;
}

}  // namespace

void emit_corpus(const std::vector<ReconstructedSample>& samples,
                 const std::filesystem::path& path) {
    if (samples.empty()) throw InputError("emit_corpus: nothing to write");
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw IoError("cannot write " + tmp.string());
        for (const auto& s : samples) out << sample_to_json(s).dump() << "\n";
        out.close();
        if (out.fail()) throw IoError("corpus write failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move corpus into place: " + ec.message());
}

std::vector<ReconstructedSample> load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<ReconstructedSample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(sample_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("bad corpus record at line " + std::to_string(line_no) + ": " +
                             e.what());
        }
    }
    return out;
}

}  // namespace neuromon
