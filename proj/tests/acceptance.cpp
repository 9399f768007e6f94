// Acceptance suite. Each criterion prints one PASS/FAIL line with the
// measured values; the exit code is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "synchrony/adjacency.hpp"
#include "synchrony/binary_io.hpp"
#include "synchrony/dynamics.hpp"
#include "synchrony/error.hpp"
#include "synchrony/grid.hpp"
#include "synchrony/model.hpp"
#include "synchrony/sampling.hpp"
#include "synchrony/tensor.hpp"
#include "synchrony/training.hpp"

using namespace synchrony;
using nn::Tensor;
using Clock = std::chrono::steady_clock;

namespace {

std::string data(const char* name) { return std::string(SYNCHRONY_DATA_DIR) + "/" + name; }

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

PowerGrid make_grid(std::vector<double> alpha, std::vector<double> power, std::vector<GridEdge> edges) {
    PowerGrid g;
    g.name = "acceptance";
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        GridNode node;
        node.alpha = alpha[i];
        node.power = power[i];
        g.nodes.push_back(node);
    }
    g.edges = std::move(edges);
    return g;
}

// ---------------------------------------------------------------------------

std::mt19937_64 gen(20240601);

Tensor random(nn::Shape shape, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(nn::numel(shape));
    for (auto& x : v) x = u(gen);
    return Tensor(std::move(shape), std::move(v), true);
}

Tensor probe(const Tensor& y) {
    std::mt19937_64 g(99);
    std::uniform_real_distribution<double> u(0.5, 1.5);
    std::vector<double> w(y.size());
    for (auto& x : w) x = u(g);
    return nn::sum(nn::matmul(nn::reshape(y, {1, y.size()}), Tensor({y.size(), 1}, w)));
}

Outcome gradient_suite() {
    const auto t0 = Clock::now();
    using Fn = std::function<Tensor(const std::vector<Tensor>&)>;
    nn::BatchNormState bn(3);
    static const double labels[] = {1, 0, 1, 0};
    const std::vector<std::tuple<const char*, Fn, std::vector<Tensor>>> cases{
        {"add", [](auto& in) { return probe(nn::add(in[0], in[1])); }, {random({2, 3}), random({2, 3})}},
        {"add_broadcast", [](auto& in) { return probe(nn::add_broadcast(in[0], in[1])); },
         {random({2, 3, 4}), random({3, 4})}},
        {"scale", [](auto& in) { return probe(nn::scale(in[0], -2.5)); }, {random({5})}},
        {"relu", [](auto& in) { return probe(nn::relu(in[0])); }, {random({6}, 0.1, 1.0)}},
        {"sigmoid", [](auto& in) { return probe(nn::sigmoid(in[0])); }, {random({6}, -3, 3)}},
        {"reshape", [](auto& in) { return probe(nn::reshape(in[0], {3, 2})); }, {random({2, 3})}},
        {"flatten", [](auto& in) { return probe(nn::flatten(in[0])); }, {random({2, 3, 2})}},
        {"transpose", [](auto& in) { return probe(nn::transpose_last2(in[0])); }, {random({2, 3, 4})}},
        {"select_last", [](auto& in) { return probe(nn::select_last(in[0])); }, {random({2, 3, 4})}},
        {"matmul", [](auto& in) { return probe(nn::matmul(in[0], in[1])); }, {random({3, 4}), random({4, 2})}},
        {"dense", [](auto& in) { return probe(nn::dense(in[0], in[1], in[2])); },
         {random({3, 4}), random({4, 2}), random({2})}},
        {"node_mix",
         [](auto& in) { return probe(nn::node_mix(Tensor({3, 3}, {1, .5, 0, .5, 1, .2, 0, .2, 1}), in[0])); },
         {random({2, 3, 4})}},
        {"causal_conv1d", [](auto& in) { return probe(nn::causal_conv1d(in[0], in[1], in[2], 2)); },
         {random({2, 3, 9}), random({4, 3, 2}), random({4})}},
        {"batch_norm", [&bn](auto& in) { return probe(nn::batch_norm(in[0], in[1], in[2], bn, nn::Mode::Train)); },
         {random({5, 3}), random({3}, 0.5, 1.5), random({3})}},
        {"layer_norm", [](auto& in) { return probe(nn::layer_norm(in[0], in[1], in[2], 1e-5, 1)); },
         {random({2, 4, 3}), random({4}, 0.5, 1.5), random({4})}},
        {"sum", [](auto& in) { return nn::scale(nn::sum(in[0]), 1.7); }, {random({4})}},
        {"sum_squares", [](auto& in) { return nn::sum_squares(in[0]); }, {random({4})}},
        {"weighted_bce", [](auto& in) { return nn::weighted_bce(in[0], labels, 1.0, 2.5); }, {random({4}, 0.05, 0.95)}},
    };
    double worst = 0.0;
    std::string worst_name;
    for (const auto& [name, f, inputs] : cases) {
        const double err = nn::grad_check(f, inputs);
        if (err > worst) {
            worst = err;
            worst_name = name;
        }
    }

    // Whole network plus the class-weighted loss with its L2 term.
    const auto g = make_grid({1, 1, 1, 1}, {0.2, -0.2, 0.1, -0.1}, {{0, 1, 1}, {1, 2, 2}, {2, 3, 1}, {3, 0, 1.5}});
    ModelConfig c;
    c.nodes = 4;
    c.window = 16;
    c.gc_width = 3;
    c.fc_width = 8;
    c.blocks = 2;
    c.filters = 4;
    c.mlp_hidden = 4;
    TtednnModel model(c, graph_operator(g, c.adjacency).normalized, fingerprint(g), 3);
    std::normal_distribution<double> nd;
    std::vector<double> xv(3 * 4 * 16);
    for (auto& v : xv) v = nd(gen);
    const Tensor x({3, 4, 16}, xv);
    const double y[] = {1, 0, 1};
    const auto reg = model.regularized_parameters();
    const double model_err = nn::grad_check(
        [&](const std::vector<Tensor>&) {
            return weighted_bce_loss(model.forward(x, nn::Mode::Train), y, 1.0, alpha1_for_batch(y), 5e-4, reg);
        },
        model.parameters());
    const double elapsed = seconds_since(t0);
    return {worst <= 1e-6 && model_err <= 1e-4 && elapsed < 60.0,
            fmt("worst primitive %s rel err %.2e (<= 1e-6), network rel err %.2e (<= 1e-4), %.1f s (< 60 s)",
                worst_name.c_str(), worst, model_err, elapsed)};
}

// ---------------------------------------------------------------------------

double isolated_error(double dt) {
    const double a = 2.0, p = 0.7, w0 = 1.5, t = 1.0;
    const auto g = make_grid({a}, {p}, {});
    SystemState s(1);
    s.omega[0] = w0;
    const auto last = integrate(g, s, dt, t).states.back();
    const double w_inf = p / a;
    const double omega = w_inf + (w0 - w_inf) * std::exp(-a * t);
    const double delta = w_inf * t + (w0 - w_inf) * (1.0 - std::exp(-a * t)) / a;
    return std::max(std::abs(last.delta[0] - delta), std::abs(last.omega[0] - omega));
}

Outcome integrator_order() {
    const auto t0 = Clock::now();
    const double e1 = isolated_error(0.1), e2 = isolated_error(0.05), e3 = isolated_error(0.025);
    const double o1 = std::log2(e1 / e2), o2 = std::log2(e2 / e3);
    double drift = 0.0;
    for (const char* name : {"two_node.grid", "ten_node.grid", "ieee39.grid"}) {
        const auto g = load_grid(data(name));
        const auto eq = solve_equilibrium(g);
        const auto end = integrate(g, eq, 0.0125, 10.0).states.back();
        for (std::size_t i = 0; i < g.size(); ++i)
            drift = std::max({drift, std::abs(end.delta[i] - eq.delta[i]), std::abs(end.omega[i] - eq.omega[i])});
    }
    const double elapsed = seconds_since(t0);
    const bool ok = o1 >= 3.7 && o1 <= 4.3 && o2 >= 3.7 && o2 <= 4.3 && drift <= 1e-8 && elapsed < 10.0;
    return {ok, fmt("orders %.3f, %.3f (in [3.7, 4.3]), equilibrium drift %.2e (<= 1e-8), %.1f s (< 10 s)", o1, o2,
                    drift, elapsed)};
}

// ---------------------------------------------------------------------------

Outcome synchronization_oracle() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi), freq(-5, 5);
    int agree = 0, total = 0;
    for (int k = 1; k <= 19; ++k) {
        if (k == 10) continue;
        const double ratio = 0.1 * k;
        const auto g = make_grid({0.5, 0.5}, {ratio, -ratio}, {{0, 1, 1.0}});
        const int expected = ratio <= 1.0 ? 1 : 0;
        SystemState s(2);
        if (expected == 1) {
            s = solve_equilibrium(g);
            s.omega[0] = 0.05;
        } else {
            s.delta = {angle(rng), angle(rng)};
            s.omega = {freq(rng), freq(rng)};
        }
        agree += classify_stability(g, s).label == expected ? 1 : 0;
        ++total;
    }
    const double elapsed = seconds_since(t0);
    return {agree == 18 && total == 18 && elapsed < 60.0,
            fmt("%d of %d cases agree with |P/K| <= 1, %.1f s (< 60 s)", agree, total, elapsed)};
}

// ---------------------------------------------------------------------------

Outcome dataset_protocol() {
    const auto g = load_grid(data("ieee39.grid"));
    const auto eq = solve_equilibrium(g);
    PerturbationSpec single;
    single.per_node = 10;
    single.seed = 101;
    PerturbationSpec multi;
    multi.mode = PerturbationMode::Multi;
    multi.nodes_per_combo = 3;
    multi.combos = 5;
    multi.per_combo = 10;
    multi.seed = 202;
    const auto s = generate_dataset(g, eq, single, 0);
    const auto m = generate_dataset(g, eq, multi, 0);
    const auto split = split_dataset(s, m, 7);

    bool all_multi_in_test = true;
    std::size_t multi_in_test = 0;
    for (const auto& x : split.test.samples) multi_in_test += x.nodes.size() == 3 ? 1 : 0;
    for (const auto* part : {&split.train, &split.val})
        for (const auto& x : part->samples) all_multi_in_test = all_multi_in_test && x.nodes.size() == 1;
    all_multi_in_test = all_multi_in_test && multi_in_test == 50;

    const bool identical = encode_dataset(generate_dataset(g, eq, single, 1)) == encode_dataset(s) &&
                           encode_dataset(generate_dataset(g, eq, multi, 1)) == encode_dataset(m);
    const bool ok = s.size() == 390 && m.size() == 50 && split.train.size() == 234 && split.val.size() == 78 &&
                    split.test.size() == 128 && all_multi_in_test && identical;
    return {ok, fmt("single %zu (390), multi %zu (50), split %zu/%zu/%zu (234/78/78+50), multi only in test: %s, "
                    "byte-identical regeneration: %s",
                    s.size(), m.size(), split.train.size(), split.val.size(), split.test.size(),
                    all_multi_in_test ? "yes" : "no", identical ? "yes" : "no")};
}

// ---------------------------------------------------------------------------

Outcome class_weight_cases() {
    const std::vector<double> all(256, 1.0), none(256, 0.0);
    std::vector<double> half(256, 0.0);
    std::fill(half.begin(), half.begin() + 128, 1.0);
    const double a = alpha1_for_batch(all), b = alpha1_for_batch(half), c = alpha1_for_batch(none);
    return {a == 0.0 && b == 1.0 && c == 0.0,
            fmt("sum y = 256 -> %.17g (0), 128 -> %.17g (1), 0 -> %.17g (0)", a, b, c)};
}

// ---------------------------------------------------------------------------

Outcome adjacency_oracles() {
    const auto g = load_grid(data("two_node.grid"));
    const auto eq = solve_equilibrium(g);
    // Hand values: K = 1, P = (0.5, -0.5), phase gap asin(0.5).
    const auto topo = build_adjacency(g, AdjacencyVariant::Topology);
    const auto flow = build_adjacency(g, AdjacencyVariant::PowerFlow, eq);
    const auto cap = build_adjacency(g, AdjacencyVariant::Capacity);
    const double expected_flow = std::abs(std::sin(eq.delta[1] - eq.delta[0]));
    const bool topo_ok = topo.data == std::vector<double>{1, 1, 1, 1};
    const bool flow_ok = flow(0, 0) == 0.0 && flow(1, 1) == 0.0 && flow(0, 1) == expected_flow &&
                         flow(1, 0) == expected_flow && std::abs(expected_flow - 0.5) <= 1e-12;
    const bool cap_ok = cap.data == std::vector<double>{0.5, 1, 1, -0.5};

    const auto norm = graph_operator(g, AdjacencyVariant::Topology).normalized;
    const double target[] = {2.0 / 3, 1.0 / 3, 1.0 / 3, 2.0 / 3};
    double err = 0.0;
    for (int k = 0; k < 4; ++k) err = std::max(err, std::abs(norm.data[k] - target[k]));
    return {topo_ok && flow_ok && cap_ok && err <= 1e-15,
            fmt("topology %s, power flow %s (%.15f), capacity %s, renormalized max err %.1e (<= 1e-15)",
                topo_ok ? "exact" : "WRONG", flow_ok ? "exact" : "WRONG", flow(0, 1), cap_ok ? "exact" : "WRONG",
                err)};
}

// ---------------------------------------------------------------------------

struct EndToEnd {
    DatasetSplit split;
    PowerGrid grid;
    double generate_seconds = 0.0;
};

EndToEnd end_to_end_data() {
    EndToEnd e;
    e.grid = load_grid(data("ten_node.grid"));
    PerturbationSpec spec;
    spec.per_node = 400;
    spec.seed = 1;
    const auto t0 = Clock::now();
    const auto ds = generate_dataset(e.grid, spec, 0);
    e.generate_seconds = seconds_since(t0);
    e.split = split_dataset(ds, Dataset{}, 0);
    return e;
}

TtednnModel fresh_model(const PowerGrid& g, std::uint64_t seed) {
    ModelConfig c;
    c.nodes = g.size();
    c.window = 101;
    const auto eq = solve_equilibrium(g);
    return TtednnModel(c, graph_operator(g, c.adjacency, eq).normalized, fingerprint(g), seed);
}

Metrics run_training(const EndToEnd& e, bool class_weighting, std::size_t epochs, double& seconds) {
    auto model = fresh_model(e.grid, 1);
    TrainConfig cfg;  // lr 1e-3, batch 256, beta 5e-4, alpha0 1
    cfg.epochs = epochs;
    cfg.seed = 1;
    cfg.class_weighting = class_weighting;
    const auto t0 = Clock::now();
    train(model, e.split.train, e.split.val, cfg);
    seconds = seconds_since(t0);
    return evaluate(model, e.split.test);
}

Outcome scaled_end_to_end(const EndToEnd& e, Metrics& weighted) {
    double seconds = 0.0;
    weighted = run_training(e, true, 50, seconds);
    const double wall = seconds + e.generate_seconds;
    const auto counts = e.split.test.counts();
    return {weighted.acc >= 0.95 && weighted.auc_defined && weighted.auc >= 0.97 && wall <= 1800.0,
            fmt("test ACC %.4f (>= 0.95), AUC %.6f (>= 0.97) on %zu samples (%zu unstable), wall %.0f s (<= 1800 s)",
                weighted.acc, weighted.auc, e.split.test.size(), counts.unstable, wall)};
}

Outcome imbalance_handling(const EndToEnd& e, const Metrics& weighted) {
    ClassCounts all{};
    for (const auto* part : {&e.split.train, &e.split.val, &e.split.test}) {
        const auto c = part->counts();
        all.stable += c.stable;
        all.unstable += c.unstable;
    }
    const double unstable_share = double(all.unstable) / double(all.stable + all.unstable);
    double seconds = 0.0;
    const auto plain = run_training(e, false, 50, seconds);
    return {unstable_share <= 0.10 && weighted.fpr < plain.fpr,
            fmt("unstable share %.3f (<= 0.10), FPR weighted %.4f (%zu FP) vs unweighted %.4f (%zu FP), must be "
                "strictly lower",
                unstable_share, weighted.fpr, weighted.fp, plain.fpr, plain.fp)};
}

// ---------------------------------------------------------------------------

Outcome inference_latency() {
    const auto g = load_grid(data("ieee39.grid"));
    auto model = fresh_model(g, 2);
    std::normal_distribution<double> nd(0.0, 5.0);
    std::vector<double> omega(g.size() * 101);
    for (auto& v : omega) v = nd(gen);
    model.predict(omega);  // warm-up
    std::vector<double> ms;
    for (int k = 0; k < 25; ++k) {
        const auto t0 = Clock::now();
        model.predict(omega);
        ms.push_back(1e3 * seconds_since(t0));
    }
    std::sort(ms.begin(), ms.end());
    const double median = ms[ms.size() / 2], worst = ms.back();
    return {worst <= 50.0, fmt("median %.2f ms, worst %.2f ms over 25 runs (<= 50 ms)", median, worst)};
}

// ---------------------------------------------------------------------------

Outcome auc_oracle() {
    std::mt19937_64 rng(77);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng() % 19;
        std::vector<double> s(n);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = trial % 2 == 0 ? double(rng() % 7) / 6.0 : std::uniform_real_distribution<double>(0, 1)(rng);
            y[i] = int(rng() % 2);
        }
        y[0] = 0;
        y[1] = 1;
        double wins = 0.0;
        std::size_t pos = 0, neg = 0;
        for (std::size_t i = 0; i < n; ++i) {
            (y[i] == 1 ? pos : neg) += 1;
            if (y[i] != 1) continue;
            for (std::size_t j = 0; j < n; ++j)
                if (y[j] == 0) wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
        }
        worst = std::max(worst, std::abs(roc_auc(s, y) - wins / double(pos * neg)));
    }
    return {worst <= 1e-12, fmt("max |trapezoid - pairwise| %.1e over 100 instances (<= 1e-12)", worst)};
}

int report(int index, const char* name, const std::function<Outcome()>& run) {
    Outcome o;
    try {
        o = run();
    } catch (const std::exception& e) {
        o = {false, std::string("threw: ") + e.what()};
    }
    std::printf("[%s] criterion %d: %s: %s\n", o.pass ? "PASS" : "FAIL", index, name, o.detail.c_str());
    std::fflush(stdout);
    return o.pass ? 0 : 1;
}

}  // namespace

int main() {
    int failures = 0;
    failures += report(1, "gradient suite", gradient_suite);
    failures += report(2, "integrator order", integrator_order);
    failures += report(3, "synchronization oracle", synchronization_oracle);
    failures += report(4, "dataset protocol", dataset_protocol);
    failures += report(5, "class weight", class_weight_cases);
    failures += report(6, "adjacency oracles", adjacency_oracles);

    EndToEnd e;
    Metrics weighted;
    bool have_data = false, have_weighted = false;
    failures += report(7, "scaled end-to-end", [&] {
        e = end_to_end_data();
        have_data = true;
        auto o = scaled_end_to_end(e, weighted);
        have_weighted = true;
        return o;
    });
    failures += report(8, "imbalance handling", [&] {
        if (!have_data || !have_weighted) return Outcome{false, "end-to-end run unavailable"};
        return imbalance_handling(e, weighted);
    });
    failures += report(9, "inference latency", inference_latency);
    failures += report(10, "AUC oracle", auc_oracle);
    std::printf("%d of 10 criteria failed\n", failures);
    return failures;
}
