#include "synchrony/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "synchrony/error.hpp"
#include "synchrony/rng.hpp"

namespace synchrony {

using nn::Mode;
using nn::Tensor;

void TrainConfig::check() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ContractError("learning rate must be >= 0");
    if (batch_size < 1) throw ContractError("batch size must be positive");
    if (!(l2 >= 0.0)) throw ContractError("L2 weight must be >= 0");
}

std::string Metrics::to_json() const {
    nlohmann::ordered_json j;
    j["tp"] = tp;
    j["tn"] = tn;
    j["fp"] = fp;
    j["fn"] = fn;
    j["acc"] = acc;
    j["fpr"] = fpr;
    j["fnr"] = fnr;
    j["tpr"] = tpr;
    if (auc_defined)
        j["auc"] = auc;
    else
        j["auc"] = nullptr;
    return j.dump(2);
}

double alpha1_for_batch(std::span<const double> labels) {
    const double stable = std::accumulate(labels.begin(), labels.end(), 0.0);
    if (stable == 0.0) return 0.0;
    return static_cast<double>(labels.size()) / stable - 1.0;
}

Tensor weighted_bce_loss(const Tensor& p, std::span<const double> labels, double alpha0, double alpha1, double beta,
                         const std::vector<Tensor>& parameters) {
    Tensor loss = nn::weighted_bce(p, labels, alpha0, alpha1);
    if (beta > 0.0)
        for (const auto& w : parameters) loss = nn::add(loss, nn::scale(nn::sum_squares(w), 0.5 * beta));
    return loss;
}

Tensor batch_tensor(const Dataset& ds, std::span<const std::size_t> order) {
    const std::size_t stride = ds.nodes * ds.window;
    std::vector<double> values(order.size() * stride);
    for (std::size_t k = 0; k < order.size(); ++k) {
        const auto& s = ds.samples[order[k]].omega;
        std::copy(s.begin(), s.end(), values.begin() + static_cast<std::ptrdiff_t>(k * stride));
    }
    return Tensor({order.size(), ds.nodes, ds.window}, std::move(values));
}

namespace {

void check_compatible(const TtednnModel& model, const Dataset& ds, const char* what) {
    if (ds.empty()) return;
    if (ds.grid != model.grid_fingerprint())
        throw FingerprintError(std::string(what) + " comes from grid " + to_hex(ds.grid) + " but the model expects " +
                               to_hex(model.grid_fingerprint()));
    if (ds.nodes != model.config().nodes || ds.window != model.config().window)
        throw ContractError(std::string(what) + " has shape " + std::to_string(ds.nodes) + "x" +
                            std::to_string(ds.window) + " but the model expects " +
                            std::to_string(model.config().nodes) + "x" + std::to_string(model.config().window));
}

// Batch boundaries; a trailing singleton is merged into the previous batch so
// train-mode batch norm always sees at least two samples.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t start = 0; start < n; start += batch) out.emplace_back(start, std::min(n, start + batch));
    if (out.size() > 1 && out.back().second - out.back().first == 1) {
        out[out.size() - 2].second = out.back().second;
        out.pop_back();
    }
    return out;
}

std::vector<double> labels_of(const Dataset& ds, std::span<const std::size_t> order) {
    std::vector<double> y(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) y[k] = ds.samples[order[k]].label;
    return y;
}

struct AdamState {
    std::vector<std::vector<double>> m, v;
    std::size_t step = 0;
};

struct PassSummary {
    double loss = 0.0;  // mean per sample
    double acc = 0.0;
};

PassSummary evaluate_loss(TtednnModel& model, const Dataset& ds, const TrainConfig& config,
                          const std::vector<Tensor>& regularized) {
    if (ds.empty()) return {};
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    double total = 0.0;
    std::size_t correct = 0;
    for (auto [lo, hi] : batch_ranges(order.size(), config.batch_size)) {
        std::span<const std::size_t> idx(order.data() + lo, hi - lo);
        const auto y = labels_of(ds, idx);
        const auto p = model.forward(batch_tensor(ds, idx), Mode::Infer).detach();
        const double a1 = config.class_weighting ? alpha1_for_batch(y) : 1.0;
        std::vector<Tensor> params;
        for (const auto& t : regularized) params.push_back(t.detach());
        total += weighted_bce_loss(p, y, config.alpha0, a1, config.l2, params).item();
        for (std::size_t k = 0; k < y.size(); ++k) correct += ((p[k] > 0.5) == (y[k] > 0.5)) ? 1 : 0;
    }
    return {total / static_cast<double>(ds.size()), static_cast<double>(correct) / static_cast<double>(ds.size())};
}

}  // namespace

TrainResult train(TtednnModel& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
    config.check();
    if (train_set.empty()) throw ContractError("training set is empty");
    check_compatible(model, train_set, "training set");
    check_compatible(model, val_set, "validation set");

    auto params = model.parameters();
    const auto regularized = model.regularized_parameters();
    AdamState adam;
    for (const auto& p : params) {
        adam.m.emplace_back(p.size(), 0.0);
        adam.v.emplace_back(p.size(), 0.0);
    }

    TrainResult result;
    auto best = model.snapshot();
    result.best_val_acc = val_set.empty() ? 0.0 : evaluate_loss(model, val_set, config, regularized).acc;
    std::size_t since_best = 0;

    Rng rng(derive_seed(config.seed, 0x7a1bULL));
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t correct = 0;
        const auto ranges = batch_ranges(order.size(), config.batch_size);
        for (std::size_t bi = 0; bi < ranges.size(); ++bi) {
            const auto [lo, hi] = ranges[bi];
            std::span<const std::size_t> idx(order.data() + lo, hi - lo);
            const auto y = labels_of(train_set, idx);
            for (auto& p : params) p.zero_grad();
            const auto prob = model.forward(batch_tensor(train_set, idx), Mode::Train);
            const double a1 = config.class_weighting ? alpha1_for_batch(y) : 1.0;
            const auto loss = weighted_bce_loss(prob, y, config.alpha0, a1, config.l2, regularized);
            const double value = loss.item();
            if (!std::isfinite(value))
                throw NumericalError("loss diverged at epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(bi + 1));
            loss.backward();
            epoch_loss += value;
            for (std::size_t k = 0; k < y.size(); ++k) correct += ((prob[k] > 0.5) == (y[k] > 0.5)) ? 1 : 0;

            ++adam.step;
            const double lr = config.learning_rate;
            const double bc1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(adam.step));
            const double bc2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(adam.step));
            for (std::size_t pi = 0; pi < params.size(); ++pi) {
                auto w = params[pi].mutable_data();
                const auto g = params[pi].grad();
                if (config.optimizer == Optimizer::Sgd) {
                    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
                    continue;
                }
                auto& m = adam.m[pi];
                auto& v = adam.v[pi];
                for (std::size_t i = 0; i < w.size(); ++i) {
                    m[i] = config.adam_beta1 * m[i] + (1.0 - config.adam_beta1) * g[i];
                    v[i] = config.adam_beta2 * v[i] + (1.0 - config.adam_beta2) * g[i] * g[i];
                    w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config.adam_eps);
                }
            }
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = epoch_loss / static_cast<double>(train_set.size());
        rec.train_acc = static_cast<double>(correct) / static_cast<double>(train_set.size());
        if (!val_set.empty()) {
            const auto v = evaluate_loss(model, val_set, config, regularized);
            rec.val_loss = v.loss;
            rec.val_acc = v.acc;
        }
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);

        const double score = val_set.empty() ? rec.train_acc : rec.val_acc;
        if (score > result.best_val_acc) {
            result.best_val_acc = score;
            result.best_epoch = epoch;
            best = model.snapshot();
            since_best = 0;
            continue;
        }
        if (++since_best >= config.patience && config.patience > 0) break;
    }
    model.restore(best);
    return result;
}

std::vector<double> predict(TtednnModel& model, const Dataset& ds, std::size_t batch_size) {
    check_compatible(model, ds, "dataset");
    std::vector<double> out;
    out.reserve(ds.size());
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t lo = 0; lo < order.size(); lo += batch_size) {
        const std::size_t hi = std::min(order.size(), lo + batch_size);
        std::span<const std::size_t> idx(order.data() + lo, hi - lo);
        const auto p = model.forward(batch_tensor(ds, idx), Mode::Infer);
        out.insert(out.end(), p.data().begin(), p.data().end());
    }
    return out;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw ContractError("roc_auc: score/label length mismatch");
    std::size_t pos = 0, neg = 0;
    for (int y : labels) (y == 1 ? pos : neg) += 1;
    if (pos == 0 || neg == 0) return std::numeric_limits<double>::quiet_NaN();

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    // Sweep thresholds from high to low; each group of tied scores moves the
    // ROC point in one straight segment.
    double area = 0.0;
    double tp = 0.0, fp = 0.0;
    std::size_t k = 0;
    while (k < order.size()) {
        const double s = scores[order[k]];
        double dtp = 0.0, dfp = 0.0;
        while (k < order.size() && scores[order[k]] == s) {
            (labels[order[k]] == 1 ? dtp : dfp) += 1.0;
            ++k;
        }
        area += dfp * (tp + 0.5 * dtp);
        tp += dtp;
        fp += dfp;
    }
    return area / (static_cast<double>(pos) * static_cast<double>(neg));
}

Metrics compute_metrics(std::span<const double> probabilities, std::span<const int> labels, double threshold) {
    if (probabilities.size() != labels.size()) throw ContractError("metrics: prediction/label length mismatch");
    if (probabilities.empty()) throw ContractError("metrics: empty dataset");
    Metrics m;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool predicted_stable = probabilities[i] > threshold;
        if (labels[i] == 1)
            (predicted_stable ? m.tp : m.fn) += 1;
        else
            (predicted_stable ? m.fp : m.tn) += 1;
    }
    auto ratio = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); };
    m.acc = ratio(m.tp + m.tn, m.tp + m.tn + m.fp + m.fn);
    m.fpr = ratio(m.fp, m.fp + m.tn);
    m.fnr = ratio(m.fn, m.fn + m.tp);
    m.tpr = ratio(m.tp, m.tp + m.fn);
    m.auc = roc_auc(probabilities, labels);
    m.auc_defined = !std::isnan(m.auc);
    return m;
}

Metrics evaluate(TtednnModel& model, const Dataset& ds, double threshold) {
    if (ds.empty()) throw ContractError("cannot evaluate on an empty dataset");
    const auto p = predict(model, ds);
    std::vector<int> y(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) y[i] = ds.samples[i].label;
    return compute_metrics(p, y, threshold);
}

void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write history file " + path.string());
    out << "epoch,train_loss,train_acc,val_loss,val_acc\n";
    char buf[160];
    for (const auto& r : history) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.train_loss, r.train_acc, r.val_loss,
                      r.val_acc);
        out << buf;
    }
}

}  // namespace synchrony
