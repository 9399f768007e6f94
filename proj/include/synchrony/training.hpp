#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "synchrony/model.hpp"
#include "synchrony/sampling.hpp"
#include "synchrony/tensor.hpp"

namespace synchrony {

enum class Optimizer { Adam, Sgd };

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t batch_size = 256;
    double l2 = 5e-4;       // beta
    double alpha0 = 1.0;    // weight of the unstable class
    // When false alpha1 is pinned to 1 (plain BCE) instead of the per-batch value.
    bool class_weighting = true;
    std::size_t epochs = 100;
    std::size_t patience = 20;
    std::uint64_t seed = 0;
    Optimizer optimizer = Optimizer::Adam;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void check() const;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;  // 0 = initialization
    double best_val_acc = 0.0;
};

/// Positive class is "stable" (y = 1); a false positive is an unstable case
/// predicted stable. Rates with an empty denominator are reported as 0.
struct Metrics {
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
    double acc = 0.0, fpr = 0.0, fnr = 0.0, tpr = 0.0;
    double auc = 0.0;
    bool auc_defined = false;

    std::string to_json() const;
};

/// batch_size / sum(y) - 1, or 0 when the batch holds no stable samples.
double alpha1_for_batch(std::span<const double> labels);

/// Class-weighted BCE plus beta * sum_k 0.5 * ||theta_k||^2.
nn::Tensor weighted_bce_loss(const nn::Tensor& p, std::span<const double> labels, double alpha0, double alpha1,
                             double beta, const std::vector<nn::Tensor>& parameters);

/// Dataset samples [first, first + count) (in `order`) as a [B, N, T] tensor.
nn::Tensor batch_tensor(const Dataset& ds, std::span<const std::size_t> order);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch training with per-epoch shuffling; the model is left holding
/// the parameters of the best validation-accuracy epoch. Throws
/// NumericalError (with epoch/batch index) when the loss diverges.
TrainResult train(TtednnModel& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Infer-mode probabilities for every sample, in dataset order.
std::vector<double> predict(TtednnModel& model, const Dataset& ds, std::size_t batch_size = 256);

Metrics compute_metrics(std::span<const double> probabilities, std::span<const int> labels, double threshold = 0.5);

/// Trapezoidal area under the ROC curve over all distinct scores. Ties are
/// traversed as one diagonal step. Returns NaN for single-class inputs.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

Metrics evaluate(TtednnModel& model, const Dataset& ds, double threshold = 0.5);

void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path);

}  // namespace synchrony
