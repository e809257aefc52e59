#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "neuromon/spectral.hpp"

namespace neuromon {

/// Three-layer fully connected detector: d -> h1 -> h2 -> 1,
/// GELU on hidden layers, logistic output.
struct MlpModel {
    Level level = Level::intra;
    std::size_t input_dim = 3;
    std::size_t hidden1 = 16;
    std::size_t hidden2 = 16;
    std::uint64_t probe_hash = 0;  // probe set the features came from

    std::vector<double> w1, b1;  // hidden1 x input_dim, hidden1
    std::vector<double> w2, b2;  // hidden2 x hidden1, hidden2
    std::vector<double> w3, b3;  // 1 x hidden2, 1

    std::size_t parameter_count() const;
    void validate() const;
};

MlpModel init_model(Level level, std::size_t hidden1, std::size_t hidden2,
                    std::uint64_t probe_hash, std::uint64_t seed);

/// Deterministic inference probability in (0, 1). Dropout is never applied here.
double forward(const MlpModel& model, std::span<const double> features);

struct LabeledSample {
    std::vector<double> features;
    int label = 0;  // 0 or 1
};

using Dataset = std::vector<LabeledSample>;

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 1e-4;
    double adam_epsilon = 1e-8;
    std::size_t batch_size = 32;
    std::size_t epochs = 50;
    double dropout = 0.1;
    std::uint64_t seed = 0;
    bool balance_classes = true;  // inverse-frequency sample weights

    void validate() const;
};

struct EpochStats {
    double train_loss = 0.0;
    double holdout_accuracy = 0.0;
    double holdout_recall = 0.0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    double final_accuracy = 0.0;
    double final_recall = 0.0;
};

/// AdamW + weighted binary cross-entropy. Deterministic under config.seed.
/// `holdout` may be empty; metrics are then reported as 0.
MlpModel train(const Dataset& dataset, const Dataset& holdout, const TrainConfig& config,
               Level level, std::uint64_t probe_hash, TrainReport* report = nullptr);

struct EvalMetrics {
    double accuracy = 0.0;
    double recall = 0.0;
};

EvalMetrics evaluate(const MlpModel& model, const Dataset& dataset, double threshold = 0.5);

/// Max relative error between analytic gradients and central finite differences.
double grad_check(const MlpModel& model, const Dataset& batch, double epsilon = 1e-5);

/// Analytic gradient of the mean (unweighted) cross-entropy over the batch,
/// flattened in w1, b1, w2, b2, w3, b3 order.
std::vector<double> loss_gradient(const MlpModel& model, const Dataset& batch);

void save_model(const MlpModel& model, const std::filesystem::path& path);

/// Loads and verifies format version; when `expected_probe_hash` is given the
/// stored hash must match (prevents feature/model skew).
MlpModel load_model(const std::filesystem::path& path,
                    std::optional<std::uint64_t> expected_probe_hash = std::nullopt);

}  // namespace neuromon
