#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "synchrony/synchrony.h"

namespace {

std::string data(const char* name) { return std::string(SYNCHRONY_DATA_DIR) + "/" + name; }

std::string scratch(const char* name) {
    auto dir = std::filesystem::temp_directory_path() / "synchrony_capi";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

sy_grid* load(const char* name) {
    sy_grid* g = nullptr;
    REQUIRE(sy_grid_load(data(name).c_str(), &g) == SY_OK);
    return g;
}

sy_sampling_spec quick_spec(size_t per_node, uint64_t seed) {
    sy_sampling_spec s;
    sy_sampling_defaults(&s);
    s.per_node = per_node;
    s.seed = seed;
    s.label.t_label = 20.0;
    return s;
}

sy_model_config small_model() {
    sy_model_config c;
    sy_model_config_defaults(&c);
    c.gc_width = 4;
    c.fc_width = 8;
    c.blocks = 2;
    c.filters = 4;
    c.mlp_hidden = 4;
    return c;
}

}  // namespace

TEST_CASE("version and error reporting") {
    CHECK(std::strlen(sy_version()) > 0);
    sy_grid* g = nullptr;
    CHECK(sy_grid_load(data("missing.grid").c_str(), &g) == SY_ERR_INPUT);
    CHECK(g == nullptr);
    CHECK(std::string(sy_last_error()).find("missing.grid") != std::string::npos);
    CHECK(sy_grid_load(nullptr, &g) == SY_ERR_CONTRACT);
}

TEST_CASE("grid queries") {
    sy_grid* g = load("two_node.grid");
    size_t n = 0, e = 0;
    CHECK(sy_grid_size(g, &n, &e) == SY_OK);
    CHECK(n == 2);
    CHECK(e == 1);

    double alpha = 0, power = 0;
    CHECK(sy_grid_node(g, 1, &alpha, &power) == SY_OK);
    CHECK(alpha == 0.5);
    CHECK(power == -0.5);
    CHECK(sy_grid_node(g, 2, &alpha, &power) == SY_ERR_CONTRACT);

    size_t needed = 0;
    CHECK(sy_grid_name(g, nullptr, 0, &needed) == SY_OK);
    std::vector<char> name(needed);
    CHECK(sy_grid_name(g, name.data(), name.size(), &needed) == SY_OK);
    CHECK(std::strlen(name.data()) + 1 == needed);

    char hex[65];
    CHECK(sy_grid_fingerprint(g, hex) == SY_OK);
    CHECK(std::strlen(hex) == 64);

    double delta[2];
    CHECK(sy_grid_equilibrium(g, delta) == SY_OK);
    CHECK(delta[0] - delta[1] == doctest::Approx(std::asin(0.5)));

    double raw[4], norm[4];
    CHECK(sy_grid_adjacency(g, 1, raw, norm) == SY_OK);
    CHECK(raw[1] == 1.0);
    CHECK(norm[0] == doctest::Approx(2.0 / 3));
    CHECK(sy_grid_adjacency(g, 4, raw, norm) == SY_ERR_CONTRACT);
    sy_grid_free(g);
}

TEST_CASE("simulation and classification") {
    sy_grid* g = load("two_node.grid");
    size_t states = 0;
    const auto csv = scratch("capi_traj.csv");
    const double omega0[] = {2.0, 0.0};
    CHECK(sy_simulate(g, nullptr, omega0, 0.0125, 1.25, csv.c_str(), &states) == SY_OK);
    CHECK(states == 101);
    CHECK(std::filesystem::exists(csv));

    sy_label_config cfg;
    sy_label_config_defaults(&cfg);
    CHECK(cfg.t_label == 50.0);
    CHECK(cfg.dt == 0.0125);
    int label = -1;
    double w = 0, gap = 0;
    CHECK(sy_classify(g, nullptr, nullptr, &cfg, &label, &w, &gap) == SY_OK);
    CHECK(label == 1);
    CHECK(sy_simulate(g, nullptr, nullptr, 0.0, 1.0, csv.c_str(), &states) == SY_ERR_CONTRACT);
    sy_grid_free(g);

    sy_grid* overloaded = nullptr;
    const auto path = scratch("capi_overloaded.grid");
    std::ofstream(path) << R"({"version": 1, "nodes": [{"id": 0, "alpha": 0.5, "power": 1.5},
        {"id": 1, "alpha": 0.5, "power": -1.5}], "edges": [{"from": 0, "to": 1, "k": 1}]})";
    REQUIRE(sy_grid_load(path.c_str(), &overloaded) == SY_OK);
    double delta[2];
    CHECK(sy_grid_equilibrium(overloaded, delta) == SY_ERR_NUMERICAL);
    sy_grid_free(overloaded);
}

TEST_CASE("dataset lifecycle") {
    sy_grid* g = load("ten_node.grid");
    const auto spec = quick_spec(2, 3);
    sy_dataset* ds = nullptr;
    REQUIRE(sy_dataset_generate(g, &spec, 2, &ds) == SY_OK);
    size_t count = 0, nodes = 0, window = 0, stable = 0, unstable = 0;
    CHECK(sy_dataset_info(ds, &count, &nodes, &window, &stable, &unstable) == SY_OK);
    CHECK(count == 20);
    CHECK(nodes == 10);
    CHECK(window == 101);
    CHECK(stable + unstable == 20);

    std::vector<double> omega(nodes * window);
    int label = -1;
    CHECK(sy_dataset_sample(ds, 0, omega.data(), &label) == SY_OK);
    CHECK((label == 0 || label == 1));
    CHECK(sy_dataset_sample(ds, 20, omega.data(), &label) == SY_ERR_CONTRACT);

    const auto path = scratch("capi.ttds");
    CHECK(sy_dataset_save(ds, path.c_str(), &spec) == SY_OK);
    sy_dataset* back = nullptr;
    CHECK(sy_dataset_load(path.c_str(), &back) == SY_OK);
    char a[65], b[65], gf[65];
    sy_dataset_fingerprint(ds, a);
    sy_dataset_fingerprint(back, b);
    sy_grid_fingerprint(g, gf);
    CHECK(std::string(a) == b);
    CHECK(std::string(a) == gf);

    sy_dataset *train = nullptr, *val = nullptr, *test = nullptr;
    CHECK(sy_dataset_split(ds, nullptr, 1, &train, &val, &test) == SY_OK);
    size_t nt = 0, nv = 0, ne = 0;
    sy_dataset_info(train, &nt, nullptr, nullptr, nullptr, nullptr);
    sy_dataset_info(val, &nv, nullptr, nullptr, nullptr, nullptr);
    sy_dataset_info(test, &ne, nullptr, nullptr, nullptr, nullptr);
    CHECK(nt == 12);
    CHECK(nv == 4);
    CHECK(ne == 4);

    sy_dataset* both = nullptr;
    CHECK(sy_dataset_concat(ds, back, &both) == SY_OK);
    sy_dataset_info(both, &count, nullptr, nullptr, nullptr, nullptr);
    CHECK(count == 40);

    char h1[65], h2[65];
    CHECK(sy_file_sha256(path.c_str(), h1) == SY_OK);
    const auto again = scratch("capi_again.ttds");
    sy_dataset* regen = nullptr;
    REQUIRE(sy_dataset_generate(g, &spec, 1, &regen) == SY_OK);
    sy_dataset_save(regen, again.c_str(), &spec);
    CHECK(sy_file_sha256(again.c_str(), h2) == SY_OK);
    CHECK(std::string(h1) == h2);

    std::ofstream(path, std::ios::binary | std::ios::trunc) << "TTDS";
    sy_dataset* broken = nullptr;
    CHECK(sy_dataset_load(path.c_str(), &broken) == SY_ERR_INPUT);

    for (auto* d : {ds, back, train, val, test, both, regen}) sy_dataset_free(d);
    sy_grid_free(g);
}

TEST_CASE("model lifecycle") {
    sy_grid* g = load("ten_node.grid");
    const auto spec = quick_spec(3, 5);
    sy_dataset* ds = nullptr;
    REQUIRE(sy_dataset_generate(g, &spec, 2, &ds) == SY_OK);

    const auto cfg = small_model();
    sy_model* m = nullptr;
    REQUIRE(sy_model_create(g, &cfg, 101, 1, &m) == SY_OK);
    size_t nodes = 0, window = 0, params = 0;
    CHECK(sy_model_info(m, &nodes, &window, &params) == SY_OK);
    CHECK(nodes == 10);
    CHECK(window == 101);
    CHECK(params > 0);
    sy_model_config round;
    sy_model_config_of(m, &round);
    CHECK(round.filters == 4);
    CHECK(round.adjacency == 3);

    sy_train_config tc;
    sy_train_defaults(&tc);
    CHECK(tc.learning_rate == 1e-3);
    CHECK(tc.batch_size == 256);
    tc.epochs = 2;
    tc.batch_size = 8;
    int calls = 0;
    const auto on_epoch = [](const sy_epoch_record* r, void* user) {
        ++*static_cast<int*>(user);
        CHECK(r->epoch >= 1);
    };
    size_t best = 0;
    double best_acc = 0;
    const auto history = scratch("capi_history.csv");
    CHECK(sy_model_train(m, ds, ds, &tc, on_epoch, &calls, history.c_str(), &best, &best_acc) == SY_OK);
    CHECK(calls == 2);
    CHECK(std::filesystem::exists(history));

    sy_metrics metrics;
    CHECK(sy_model_evaluate(m, ds, 0.5, &metrics) == SY_OK);
    CHECK(metrics.tp + metrics.tn + metrics.fp + metrics.fn == 30);
    size_t needed = 0;
    sy_metrics_json(&metrics, nullptr, 0, &needed);
    std::vector<char> json(needed);
    CHECK(sy_metrics_json(&metrics, json.data(), json.size(), &needed) == SY_OK);
    CHECK(std::string(json.data()).find("\"acc\"") != std::string::npos);

    std::vector<double> probs(30);
    CHECK(sy_model_predict_dataset(m, ds, probs.data()) == SY_OK);
    std::vector<double> omega(10 * 101);
    sy_dataset_sample(ds, 4, omega.data(), nullptr);
    double p = -1;
    CHECK(sy_model_predict(m, omega.data(), &p) == SY_OK);
    CHECK(p == probs[4]);

    const auto path = scratch("capi.ttnn");
    CHECK(sy_model_save(m, path.c_str()) == SY_OK);
    sy_model* back = nullptr;
    CHECK(sy_model_load(path.c_str(), g, &back) == SY_OK);
    double q = -1;
    sy_model_predict(back, omega.data(), &q);
    CHECK(q == p);

    sy_grid* other = load("two_node.grid");
    sy_model* wrong = nullptr;
    CHECK(sy_model_load(path.c_str(), other, &wrong) == SY_ERR_CONTRACT);
    CHECK(wrong == nullptr);

    // A trajectory CSV from the simulator feeds straight into prediction.
    const auto csv = scratch("capi_predict.csv");
    const double kick[] = {0, 0, 0, 4.0, 0, 0, 0, 0, 0, 0};
    REQUIRE(sy_simulate(g, nullptr, kick, 0.0125, 1.25, csv.c_str(), nullptr) == SY_OK);
    CHECK(sy_model_predict_csv(m, csv.c_str(), &p) == SY_OK);
    CHECK(p > 0.0);
    CHECK(p < 1.0);
    const auto short_csv = scratch("capi_short.csv");
    REQUIRE(sy_simulate(g, nullptr, kick, 0.0125, 0.5, short_csv.c_str(), nullptr) == SY_OK);
    CHECK(sy_model_predict_csv(m, short_csv.c_str(), &p) == SY_ERR_INPUT);
    const auto two_csv = scratch("capi_two.csv");
    REQUIRE(sy_simulate(other, nullptr, nullptr, 0.0125, 1.25, two_csv.c_str(), nullptr) == SY_OK);
    CHECK(sy_model_predict_csv(m, two_csv.c_str(), &p) == SY_ERR_CONTRACT);

    sy_model_free(back);
    sy_model_free(m);
    sy_grid_free(other);
    sy_dataset_free(ds);
    sy_grid_free(g);
}

TEST_CASE("null handles are rejected, not dereferenced") {
    size_t n = 0;
    CHECK(sy_grid_size(nullptr, &n, nullptr) == SY_ERR_CONTRACT);
    CHECK(sy_dataset_info(nullptr, &n, nullptr, nullptr, nullptr, nullptr) == SY_ERR_CONTRACT);
    double p = 0;
    CHECK(sy_model_predict(nullptr, &p, &p) == SY_ERR_CONTRACT);
    sy_grid_free(nullptr);
    sy_dataset_free(nullptr);
    sy_model_free(nullptr);
}
