#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "doctest.h"
#include "synchrony/error.hpp"
#include "synchrony/training.hpp"
#include "test_support.hpp"

using namespace synchrony;
using nn::Tensor;

namespace {

// Independent oracle: P(score_pos > score_neg) + 0.5 P(tie) over all pairs.
double mann_whitney(const std::vector<double>& s, const std::vector<int>& y) {
    double wins = 0;
    std::size_t pos = 0, neg = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (y[i] != 1) continue;
        ++pos;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[j] != 0) continue;
            wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
        }
    }
    for (int v : y) neg += v == 0 ? 1 : 0;
    return wins / double(pos * neg);
}

ModelConfig tiny_config(std::size_t nodes, std::size_t window) {
    ModelConfig c;
    c.nodes = nodes;
    c.window = window;
    c.gc_layers = 1;
    c.gc_width = 4;
    c.fc_width = 4;
    c.blocks = 1;
    c.filters = 4;
    c.mlp_hidden = 4;
    c.adjacency = AdjacencyVariant::Topology;
    return c;
}

struct Toy {
    PowerGrid grid = test::make_grid({1}, {0}, {});
    Dataset train, val;
};

// One node, two time steps, two well separated Gaussian blobs.
Toy blobs(std::size_t per_class, std::uint64_t seed) {
    Toy toy;
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> nd(0.0, 0.3);
    for (auto* ds : {&toy.train, &toy.val}) {
        ds->grid = fingerprint(toy.grid);
        ds->nodes = 1;
        ds->window = 2;
        for (std::size_t k = 0; k < 2 * per_class; ++k) {
            const int label = static_cast<int>(k % 2);
            const double centre = label == 1 ? -1.5 : 1.5;
            ds->samples.push_back({{centre + nd(gen), centre + nd(gen)}, label, {0}, k});
        }
    }
    return toy;
}

TtednnModel model_for(const Toy& toy, std::uint64_t seed) {
    const auto c = tiny_config(1, 2);
    return TtednnModel(c, graph_operator(toy.grid, c.adjacency).normalized, fingerprint(toy.grid), seed);
}

}  // namespace

TEST_CASE("class weight for the stable class") {
    const double balanced[] = {1, 0, 1, 0};
    CHECK(alpha1_for_batch(balanced) == 1.0);
    const double mostly_stable[] = {1, 1, 1, 0};
    CHECK(alpha1_for_batch(mostly_stable) == doctest::Approx(1.0 / 3));
    const double all_stable[] = {1, 1};
    CHECK(alpha1_for_batch(all_stable) == 0.0);
    const double none_stable[] = {0, 0, 0};
    CHECK(alpha1_for_batch(none_stable) == 0.0);

    // Weighted class masses balance whenever both classes are present.
    std::mt19937_64 gen(3);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> y(2 + gen() % 50);
        for (auto& v : y) v = double(gen() % 2);
        y[0] = 1;
        y[1] = 0;
        const double stable = std::accumulate(y.begin(), y.end(), 0.0);
        CHECK(alpha1_for_batch(y) * stable == doctest::Approx(double(y.size()) - stable));
    }
}

TEST_CASE("loss examples") {
    const double one[] = {1.0};
    CHECK(weighted_bce_loss(Tensor({1}, {0.5}), one, 1.0, 1.0, 0.0, {}).item() == doctest::Approx(std::log(2.0)));

    const Tensor theta({2}, {1.0, 2.0});
    const double with_l2 = weighted_bce_loss(Tensor({1}, {0.5}), one, 1.0, 1.0, 1e-3, {theta}).item();
    CHECK(with_l2 == doctest::Approx(std::log(2.0) + 0.5e-3 * 5.0));

    const double y[] = {1, 0, 1};
    CHECK(weighted_bce_loss(Tensor({3}, {1, 0, 1}), y, 1.0, 1.0, 0.0, {}).item() <= 1e-5);

    // alpha1 scales only the stable terms.
    const double mixed[] = {1, 0};
    const auto p = Tensor({2}, {0.7, 0.2});
    const double base = -std::log(0.7), other = -std::log(0.8);
    CHECK(weighted_bce_loss(p, mixed, 1.0, 3.0, 0.0, {}).item() == doctest::Approx(3 * base + other));
    CHECK(weighted_bce_loss(p, mixed, 2.0, 1.0, 0.0, {}).item() == doctest::Approx(base + 2 * other));
}

TEST_CASE("loss is non-negative") {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> p(8), y(8);
        for (auto& v : p) v = u(gen);
        for (auto& v : y) v = double(gen() % 2);
        const Tensor theta({3}, {u(gen), -u(gen), u(gen)});
        CHECK(weighted_bce_loss(Tensor({8}, p), y, u(gen) * 3, alpha1_for_batch(y), 1e-3, {theta}).item() >= 0.0);
    }
}

TEST_CASE("AUC") {
    const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
    const std::vector<int> y{0, 0, 1, 1};
    CHECK(roc_auc(s, y) == doctest::Approx(0.75).epsilon(1e-15));

    std::mt19937_64 gen(9);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> scores(40);
        std::vector<int> labels(40);
        for (std::size_t i = 0; i < 40; ++i) {
            scores[i] = double(gen() % 12) / 11.0;  // plenty of ties
            labels[i] = int(gen() % 2);
        }
        labels[0] = 0;
        labels[1] = 1;
        CHECK(std::abs(roc_auc(scores, labels) - mann_whitney(scores, labels)) <= 1e-12);
    }

    CHECK(std::isnan(roc_auc(s, std::vector<int>{1, 1, 1, 1})));
    CHECK(roc_auc(std::vector<double>{0.2, 0.9}, std::vector<int>{0, 1}) == 1.0);
    CHECK(roc_auc(std::vector<double>{0.5, 0.5}, std::vector<int>{0, 1}) == 0.5);
}

TEST_CASE("confusion metrics") {
    SUBCASE("perfect") {
        const auto m = compute_metrics(std::vector<double>{0.9, 0.1, 0.8}, std::vector<int>{1, 0, 1});
        CHECK(m.acc == 1.0);
        CHECK(m.fpr == 0.0);
        CHECK(m.fnr == 0.0);
        CHECK(m.tpr == 1.0);
        CHECK(m.auc_defined);
        CHECK(m.auc == 1.0);
    }
    SUBCASE("all stable") {
        const auto m = compute_metrics(std::vector<double>{0.9, 0.3}, std::vector<int>{1, 1});
        CHECK(m.tp == 1);
        CHECK(m.fn == 1);
        CHECK(m.fpr == 0.0);
        CHECK_FALSE(m.auc_defined);
        CHECK(m.to_json().find("\"auc\": null") != std::string::npos);
    }
    SUBCASE("counts") {
        const auto m = compute_metrics(std::vector<double>{0.9, 0.6, 0.2, 0.4, 0.7}, std::vector<int>{1, 0, 0, 1, 1});
        CHECK(m.tp == 2);
        CHECK(m.fp == 1);
        CHECK(m.tn == 1);
        CHECK(m.fn == 1);
        CHECK(m.acc == doctest::Approx(0.6));
        CHECK(m.fpr == doctest::Approx(0.5));
        CHECK(m.fnr == doctest::Approx(1.0 / 3));
    }
    SUBCASE("threshold is exclusive") {
        const auto m = compute_metrics(std::vector<double>{0.5}, std::vector<int>{1});
        CHECK(m.fn == 1);
    }
}

TEST_CASE("raising the threshold never raises the false-positive rate") {
    std::mt19937_64 gen(21);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> p(200);
    std::vector<int> y(200);
    for (std::size_t i = 0; i < 200; ++i) {
        y[i] = int(gen() % 2);
        p[i] = u(gen);
    }
    double last_fpr = 2.0, last_tpr = 2.0;
    for (int k = 0; k <= 20; ++k) {
        const auto m = compute_metrics(p, y, k / 20.0);
        CHECK(m.fpr <= last_fpr);
        CHECK(m.tpr <= last_tpr);
        last_fpr = m.fpr;
        last_tpr = m.tpr;
    }
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
    auto toy = blobs(10, 1);
    auto model = model_for(toy, 2);
    const auto before = model.snapshot();
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.seed = 4;
    train(model, toy.train, toy.val, cfg);
    const auto after = model.snapshot();
    CHECK(after.values == before.values);
}

TEST_CASE("training is reproducible under a seed") {
    auto toy = blobs(16, 2);
    TrainConfig cfg;
    cfg.learning_rate = 1e-2;
    cfg.epochs = 4;
    cfg.batch_size = 7;
    cfg.seed = 11;
    auto a = model_for(toy, 3), b = model_for(toy, 3);
    const auto ra = train(a, toy.train, toy.val, cfg);
    const auto rb = train(b, toy.train, toy.val, cfg);
    REQUIRE(ra.history.size() == rb.history.size());
    for (std::size_t e = 0; e < ra.history.size(); ++e) {
        CHECK(ra.history[e].train_loss == rb.history[e].train_loss);
        CHECK(ra.history[e].val_acc == rb.history[e].val_acc);
    }
    CHECK(a.encode() == b.encode());
}

TEST_CASE("separable toy problem is learned") {
    auto toy = blobs(20, 3);
    auto model = model_for(toy, 5);
    TrainConfig cfg;
    cfg.learning_rate = 1e-2;
    cfg.epochs = 50;
    cfg.patience = 0;
    cfg.batch_size = 8;
    cfg.seed = 1;
    std::size_t calls = 0;
    const auto result = train(model, toy.train, toy.val, cfg, [&](const EpochRecord&) { ++calls; });
    CHECK(calls == result.history.size());
    const auto m = evaluate(model, toy.train);
    CHECK(m.acc == 1.0);
    CHECK(result.best_val_acc == 1.0);
}

TEST_CASE("best validation snapshot is restored") {
    auto toy = blobs(12, 4);
    auto model = model_for(toy, 6);
    TrainConfig cfg;
    cfg.learning_rate = 5e-2;
    cfg.epochs = 10;
    cfg.batch_size = 5;
    cfg.seed = 2;
    const auto result = train(model, toy.train, toy.val, cfg);
    CHECK(evaluate(model, toy.val).acc == doctest::Approx(result.best_val_acc));
}

TEST_CASE("early stopping honours patience") {
    auto toy = blobs(8, 5);
    auto model = model_for(toy, 7);
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.epochs = 30;
    cfg.patience = 3;
    cfg.batch_size = 4;
    const auto result = train(model, toy.train, toy.val, cfg);
    CHECK(result.history.size() == 3);
    CHECK(result.best_epoch == 0);
}

TEST_CASE("a singleton trailing batch is merged") {
    auto toy = blobs(5, 6);  // 10 samples, batch 3 leaves one over
    auto model = model_for(toy, 8);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 3;
    CHECK_NOTHROW(train(model, toy.train, toy.val, cfg));
}

TEST_CASE("diverging loss names the epoch and batch") {
    auto toy = blobs(4, 7);
    auto model = model_for(toy, 9);
    model.head_bias(1).mutable_data()[0] = 1e200;  // its square overflows the L2 term
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    try {
        train(model, toy.train, toy.val, cfg);
        FAIL("expected divergence");
    } catch (const NumericalError& e) {
        CHECK(std::string(e.what()) == "loss diverged at epoch 1, batch 1");
    }
}

TEST_CASE("incompatible datasets are rejected") {
    auto toy = blobs(4, 8);
    auto model = model_for(toy, 1);
    auto foreign = toy.train;
    foreign.grid[0] ^= 0xff;
    CHECK_THROWS_AS(train(model, foreign, toy.val, TrainConfig{}), FingerprintError);
    auto wide = toy.train;
    wide.window = 3;
    for (auto& s : wide.samples) s.omega.push_back(0.0);
    CHECK_THROWS_AS(train(model, wide, toy.val, TrainConfig{}), ContractError);
    TrainConfig bad;
    bad.batch_size = 0;
    CHECK_THROWS_AS(train(model, toy.train, toy.val, bad), ContractError);
}

TEST_CASE("history CSV") {
    const std::vector<EpochRecord> h{{1, 0.5, 0.75, 0.25, 0.8}, {2, 0.1, 1.0, 0.2, 0.9}};
    const auto path = test::scratch("history.csv");
    write_history_csv(h, path);
    std::ifstream in(path);
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header == "epoch,train_loss,train_acc,val_loss,val_acc");
    CHECK(row == "1,0.5,0.75,0.25,0.80000000000000004");
}
