#include "neuromon/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include "neuromon/errors.hpp"

namespace neuromon {

namespace {

double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
}

double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + x * pdf;
}

double sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

struct ForwardScratch {
    std::vector<double> z1, a1, z2, a2;
    double logit = 0.0;
};

// Dropout masks hold the keep-scale per unit (0 when dropped).
struct DropoutMasks {
    std::vector<double> h1, h2;
};

double forward_pass(const MlpModel& m, std::span<const double> x, ForwardScratch& s,
                    const DropoutMasks* dropout) {
    s.z1.assign(m.hidden1, 0.0);
    s.a1.assign(m.hidden1, 0.0);
    for (std::size_t i = 0; i < m.hidden1; ++i) {
        double z = m.b1[i];
        for (std::size_t j = 0; j < m.input_dim; ++j) {
            z += m.w1[i * m.input_dim + j] * x[j];
        }
        s.z1[i] = z;
        s.a1[i] = gelu(z);
        if (dropout) s.a1[i] *= dropout->h1[i];
    }
    s.z2.assign(m.hidden2, 0.0);
    s.a2.assign(m.hidden2, 0.0);
    for (std::size_t i = 0; i < m.hidden2; ++i) {
        double z = m.b2[i];
        for (std::size_t j = 0; j < m.hidden1; ++j) {
            z += m.w2[i * m.hidden1 + j] * s.a1[j];
        }
        s.z2[i] = z;
        s.a2[i] = gelu(z);
        if (dropout) s.a2[i] *= dropout->h2[i];
    }
    double z = m.b3[0];
    for (std::size_t j = 0; j < m.hidden2; ++j) {
        z += m.w3[j] * s.a2[j];
    }
    s.logit = z;
    return z;
}

struct Gradients {
    std::vector<double> w1, b1, w2, b2, w3, b3;

    explicit Gradients(const MlpModel& m)
        : w1(m.w1.size(), 0.0), b1(m.b1.size(), 0.0),
          w2(m.w2.size(), 0.0), b2(m.b2.size(), 0.0),
          w3(m.w3.size(), 0.0), b3(m.b3.size(), 0.0) {}
};

// Accumulates d(weighted BCE)/d(params) for one sample into `g`.
void backward_pass(const MlpModel& m, std::span<const double> x, const ForwardScratch& s,
                   const DropoutMasks* dropout, double label, double weight, Gradients& g) {
    const double dz = weight * (sigmoid(s.logit) - label);

    std::vector<double> da2(m.hidden2);
    for (std::size_t j = 0; j < m.hidden2; ++j) {
        g.w3[j] += dz * s.a2[j];
        da2[j] = dz * m.w3[j];
    }
    g.b3[0] += dz;

    std::vector<double> dz2(m.hidden2);
    for (std::size_t i = 0; i < m.hidden2; ++i) {
        double d = da2[i];
        if (dropout) d *= dropout->h2[i];
        dz2[i] = d * gelu_grad(s.z2[i]);
        g.b2[i] += dz2[i];
        for (std::size_t j = 0; j < m.hidden1; ++j) {
            g.w2[i * m.hidden1 + j] += dz2[i] * s.a1[j];
        }
    }

    std::vector<double> da1(m.hidden1, 0.0);
    for (std::size_t i = 0; i < m.hidden2; ++i) {
        for (std::size_t j = 0; j < m.hidden1; ++j) {
            da1[j] += dz2[i] * m.w2[i * m.hidden1 + j];
        }
    }
    for (std::size_t i = 0; i < m.hidden1; ++i) {
        double d = da1[i];
        if (dropout) d *= dropout->h1[i];
        const double dz1 = d * gelu_grad(s.z1[i]);
        g.b1[i] += dz1;
        for (std::size_t j = 0; j < m.input_dim; ++j) {
            g.w1[i * m.input_dim + j] += dz1 * x[j];
        }
    }
}

double bce_loss(double logit, double label, double weight) {
    // numerically stable logistic cross-entropy
    const double max_part = std::max(logit, 0.0);
    return weight * (max_part - logit * label + std::log1p(std::exp(-std::abs(logit))));
}

std::array<double, 2> class_weights(const Dataset& dataset, bool balance) {
    if (!balance) return {1.0, 1.0};
    std::size_t positives = 0;
    for (const auto& s : dataset) positives += s.label;
    const std::size_t negatives = dataset.size() - positives;
    const double total = static_cast<double>(dataset.size());
    return {total / (2.0 * static_cast<double>(negatives)),
            total / (2.0 * static_cast<double>(positives))};
}

struct AdamState {
    std::vector<double> m, v;
    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

void adamw_step(std::vector<double>& params, const std::vector<double>& grads,
                AdamState& state, const TrainConfig& cfg, std::size_t step, bool decay) {
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_epsilon);
        if (decay) {
            params[i] -= cfg.learning_rate * cfg.weight_decay * params[i];
        }
    }
}

std::vector<std::vector<double>*> parameter_blocks(MlpModel& m) {
    return {&m.w1, &m.b1, &m.w2, &m.b2, &m.w3, &m.b3};
}

}  // namespace

std::size_t MlpModel::parameter_count() const {
    return w1.size() + b1.size() + w2.size() + b2.size() + w3.size() + b3.size();
}

void MlpModel::validate() const {
    if (input_dim != level_dim(level)) {
        throw ShapeError("MlpModel: input dim does not match level");
    }
    if (w1.size() != hidden1 * input_dim || b1.size() != hidden1 ||
        w2.size() != hidden2 * hidden1 || b2.size() != hidden2 ||
        w3.size() != hidden2 || b3.size() != 1) {
        throw ShapeError("MlpModel: parameter shapes do not chain");
    }
    for (const auto* block : {&w1, &b1, &w2, &b2, &w3, &b3}) {
        for (double v : *block) {
            if (!std::isfinite(v)) throw InputError("MlpModel: non-finite parameter");
        }
    }
}

MlpModel init_model(Level level, std::size_t hidden1, std::size_t hidden2,
                    std::uint64_t probe_hash, std::uint64_t seed) {
    MlpModel m;
    m.level = level;
    m.input_dim = level_dim(level);
    m.hidden1 = hidden1;
    m.hidden2 = hidden2;
    m.probe_hash = probe_hash;

    std::mt19937_64 rng(seed);
    auto fill = [&rng](std::vector<double>& block, std::size_t n, std::size_t fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        block.resize(n);
        for (double& v : block) v = dist(rng);
    };
    fill(m.w1, hidden1 * m.input_dim, m.input_dim);
    fill(m.b1, hidden1, m.input_dim);
    fill(m.w2, hidden2 * hidden1, hidden1);
    fill(m.b2, hidden2, hidden1);
    fill(m.w3, hidden2, hidden2);
    fill(m.b3, 1, hidden2);
    return m;
}

double forward(const MlpModel& model, std::span<const double> features) {
    if (features.size() != model.input_dim) {
        throw ShapeError("forward: feature dimension mismatch");
    }
    ForwardScratch scratch;
    return sigmoid(forward_pass(model, features, scratch, nullptr));
}

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw InputError("TrainConfig: learning rate must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw InputError("TrainConfig: dropout out of [0, 1)");
    if (batch_size == 0 || epochs == 0) throw InputError("TrainConfig: zero batch size or epochs");
}

EvalMetrics evaluate(const MlpModel& model, const Dataset& dataset, double threshold) {
    EvalMetrics out;
    if (dataset.empty()) return out;
    std::size_t correct = 0;
    std::size_t true_pos = 0;
    std::size_t positives = 0;
    for (const auto& sample : dataset) {
        const bool predicted = forward(model, sample.features) >= threshold;
        if (predicted == (sample.label == 1)) ++correct;
        if (sample.label == 1) {
            ++positives;
            if (predicted) ++true_pos;
        }
    }
    out.accuracy = static_cast<double>(correct) / static_cast<double>(dataset.size());
    out.recall = positives == 0 ? 0.0
                                : static_cast<double>(true_pos) / static_cast<double>(positives);
    return out;
}

MlpModel train(const Dataset& dataset, const Dataset& holdout, const TrainConfig& config,
               Level level, std::uint64_t probe_hash, TrainReport* report) {
    config.validate();
    if (dataset.empty()) throw TrainError("train: empty dataset");
    const std::size_t dim = level_dim(level);
    std::size_t positives = 0;
    for (const auto& s : dataset) {
        if (s.features.size() != dim) throw ShapeError("train: feature dimension mismatch");
        if (s.label != 0 && s.label != 1) throw TrainError("train: labels must be 0/1");
        positives += s.label;
    }
    if (positives == 0 || positives == dataset.size()) {
        throw TrainError("train: both classes must be present");
    }

    MlpModel model = init_model(level, 16, 16, probe_hash, config.seed);
    const auto weights = class_weights(dataset, config.balance_classes);

    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);

    auto blocks = parameter_blocks(model);
    std::vector<AdamState> adam;
    for (auto* block : blocks) adam.emplace_back(block->size());

    std::size_t step = 0;
    ForwardScratch scratch;
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    if (report) report->epochs.clear();
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(start + config.batch_size, order.size());
            Gradients grads(model);
            double batch_loss = 0.0;
            for (std::size_t i = start; i < end; ++i) {
                const LabeledSample& sample = dataset[order[i]];
                const double weight = weights[static_cast<std::size_t>(sample.label)];

                DropoutMasks masks;
                const DropoutMasks* mask_ptr = nullptr;
                if (config.dropout > 0.0) {
                    const double keep = 1.0 - config.dropout;
                    masks.h1.resize(model.hidden1);
                    masks.h2.resize(model.hidden2);
                    for (double& v : masks.h1) v = unit(rng) < keep ? 1.0 / keep : 0.0;
                    for (double& v : masks.h2) v = unit(rng) < keep ? 1.0 / keep : 0.0;
                    mask_ptr = &masks;
                }
                const double logit = forward_pass(model, sample.features, scratch, mask_ptr);
                batch_loss += bce_loss(logit, sample.label, weight);
                backward_pass(model, sample.features, scratch, mask_ptr,
                              sample.label, weight, grads);
            }
            const double inv = 1.0 / static_cast<double>(end - start);
            std::vector<std::vector<double>*> grad_blocks{&grads.w1, &grads.b1, &grads.w2,
                                                          &grads.b2, &grads.w3, &grads.b3};
            ++step;
            for (std::size_t b = 0; b < blocks.size(); ++b) {
                for (double& g : *grad_blocks[b]) g *= inv;
                const bool decay = b % 2 == 0;  // weights only, not biases
                adamw_step(*blocks[b], *grad_blocks[b], adam[b], config, step, decay);
            }
            epoch_loss += batch_loss;
        }
        epoch_loss /= static_cast<double>(dataset.size());
        if (!std::isfinite(epoch_loss)) {
            throw TrainError("train: loss diverged at epoch " + std::to_string(epoch));
        }
        if (report) {
            EpochStats stats;
            stats.train_loss = epoch_loss;
            const EvalMetrics metrics = evaluate(model, holdout);
            stats.holdout_accuracy = metrics.accuracy;
            stats.holdout_recall = metrics.recall;
            report->epochs.push_back(stats);
        }
    }
    if (report) {
        const EvalMetrics metrics = evaluate(model, holdout);
        report->final_accuracy = metrics.accuracy;
        report->final_recall = metrics.recall;
    }
    model.validate();
    return model;
}

std::vector<double> loss_gradient(const MlpModel& model, const Dataset& batch) {
    if (batch.empty()) throw InputError("loss_gradient: empty batch");
    Gradients grads(model);
    ForwardScratch scratch;
    for (const auto& sample : batch) {
        forward_pass(model, sample.features, scratch, nullptr);
        backward_pass(model, sample.features, scratch, nullptr, sample.label, 1.0, grads);
    }
    std::vector<double> out;
    out.reserve(model.parameter_count());
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (const auto* block : {&grads.w1, &grads.b1, &grads.w2, &grads.b2, &grads.w3, &grads.b3}) {
        for (double g : *block) out.push_back(g * inv);
    }
    return out;
}

double grad_check(const MlpModel& model, const Dataset& batch, double epsilon) {
    if (batch.empty()) throw InputError("grad_check: empty batch");
    MlpModel work = model;
    const auto weights = class_weights(batch, false);

    auto batch_loss = [&](const MlpModel& m) {
        ForwardScratch scratch;
        double total = 0.0;
        for (const auto& sample : batch) {
            const double logit = forward_pass(m, sample.features, scratch, nullptr);
            total += bce_loss(logit, sample.label, weights[static_cast<std::size_t>(sample.label)]);
        }
        return total / static_cast<double>(batch.size());
    };

    Gradients analytic(work);
    {
        ForwardScratch scratch;
        for (const auto& sample : batch) {
            forward_pass(work, sample.features, scratch, nullptr);
            backward_pass(work, sample.features, scratch, nullptr, sample.label,
                          weights[static_cast<std::size_t>(sample.label)], analytic);
        }
        std::vector<std::vector<double>*> grad_blocks{&analytic.w1, &analytic.b1, &analytic.w2,
                                                      &analytic.b2, &analytic.w3, &analytic.b3};
        for (auto* block : grad_blocks) {
            for (double& g : *block) g /= static_cast<double>(batch.size());
        }
    }

    auto blocks = parameter_blocks(work);
    std::vector<std::vector<double>*> grad_blocks{&analytic.w1, &analytic.b1, &analytic.w2,
                                                  &analytic.b2, &analytic.w3, &analytic.b3};
    double max_rel = 0.0;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        for (std::size_t i = 0; i < blocks[b]->size(); ++i) {
            const double original = (*blocks[b])[i];
            (*blocks[b])[i] = original + epsilon;
            const double plus = batch_loss(work);
            (*blocks[b])[i] = original - epsilon;
            const double minus = batch_loss(work);
            (*blocks[b])[i] = original;
            const double numeric = (plus - minus) / (2.0 * epsilon);
            const double analytic_g = (*grad_blocks[b])[i];
            // the floor keeps roundoff on near-zero gradients from dominating:
            // central differences carry ~|loss|*machine_eps/epsilon of noise
            const double denom = std::max({std::abs(numeric), std::abs(analytic_g), 1e-6});
            max_rel = std::max(max_rel, std::abs(numeric - analytic_g) / denom);
        }
    }
    return max_rel;
}

namespace {

constexpr char kModelMagic[8] = {'N', 'R', 'M', 'N', 'M', 'L', 'P', '1'};
constexpr std::uint16_t kModelVersion = 1;

template <typename T>
void write_le(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
    T value;
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw ParseError("truncated model file");
    return value;
}

}  // namespace

void save_model(const MlpModel& model, const std::filesystem::path& path) {
    model.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(kModelMagic, sizeof(kModelMagic));
    write_le(out, kModelVersion);
    write_le<std::uint8_t>(out, static_cast<std::uint8_t>(model.level));
    write_le<std::uint64_t>(out, model.probe_hash);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.input_dim));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.hidden1));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.hidden2));
    write_le<std::uint32_t>(out, 1);
    for (const auto* block : {&model.w1, &model.b1, &model.w2, &model.b2, &model.w3, &model.b3}) {
        for (double v : *block) write_le(out, v);
    }
}

MlpModel load_model(const std::filesystem::path& path,
                    std::optional<std::uint64_t> expected_probe_hash) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kModelMagic, sizeof(magic)) != 0) {
        throw ParseError("bad model magic");
    }
    if (read_le<std::uint16_t>(in) != kModelVersion) {
        throw ParseError("unsupported model version");
    }
    MlpModel model;
    const auto level = read_le<std::uint8_t>(in);
    if (level > 2) throw ParseError("bad level tag");
    model.level = static_cast<Level>(level);
    model.probe_hash = read_le<std::uint64_t>(in);
    model.input_dim = read_le<std::uint32_t>(in);
    model.hidden1 = read_le<std::uint32_t>(in);
    model.hidden2 = read_le<std::uint32_t>(in);
    if (read_le<std::uint32_t>(in) != 1) throw ParseError("bad output dimension");

    auto read_block = [&in](std::vector<double>& block, std::size_t n) {
        block.resize(n);
        for (double& v : block) v = read_le<double>(in);
    };
    read_block(model.w1, model.hidden1 * model.input_dim);
    read_block(model.b1, model.hidden1);
    read_block(model.w2, model.hidden2 * model.hidden1);
    read_block(model.b2, model.hidden2);
    read_block(model.w3, model.hidden2);
    read_block(model.b3, 1);
    model.validate();

    if (expected_probe_hash && model.probe_hash != *expected_probe_hash) {
        throw ConfigError("model probe-set hash does not match the configured probe set");
    }
    return model;
}

}  // namespace neuromon
