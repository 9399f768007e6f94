// synchrony: command-line front end over the C API.
//
//   synchrony gridinfo GRID [--adjacency 1|2|3]
//   synchrony simulate --grid G --out traj.csv [--kick NODE=W ...]
//   synchrony generate --grid G --out data.ttds [--mode single|multi ...]
//   synchrony train    --grid G --data single.ttds [--multi multi.ttds] --out model.ttnn
//   synchrony eval     --model model.ttnn --data test.ttds
//   synchrony predict  --model model.ttnn --trajectory traj.csv
//   synchrony replay   run.json
//
// Exit codes: 0 success, 2 input, 3 numerical, 4 contract/fingerprint.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "synchrony/synchrony.h"

namespace {

using json = nlohmann::ordered_json;

struct Failure {
    int code;
    std::string message;
};

void check(sy_status s) {
    if (s != SY_OK) throw Failure{static_cast<int>(s), sy_last_error()};
}

template <class T, void (*Free)(T*)>
struct Handle {
    T* p = nullptr;
    Handle() = default;
    Handle(const Handle&) = delete;
    Handle& operator=(const Handle&) = delete;
    ~Handle() { Free(p); }
    T** out() { return &p; }
    T* get() const { return p; }
};
using Grid = Handle<sy_grid, sy_grid_free>;
using Data = Handle<sy_dataset, sy_dataset_free>;
using Model = Handle<sy_model, sy_model_free>;

std::string hash_of(const std::string& path) {
    char hex[65];
    check(sy_file_sha256(path.c_str(), hex));
    return hex;
}

std::string grid_fp(const Grid& g) {
    char hex[65];
    check(sy_grid_fingerprint(g.get(), hex));
    return hex;
}

std::uint64_t default_seed() {
    if (const char* env = std::getenv("SYNCHRONY_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw Failure{2, std::string("SYNCHRONY_SEED is not an unsigned integer: ") + env};
        }
    }
    return 0;
}

std::string utc_now() {
    const auto t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Everything needed to rerun a command and check that it reproduced.
struct Manifest {
    std::string subcommand;
    std::vector<std::string> argv;
    json config = json::object();
    json seeds = json::object();
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::string grid_fingerprint;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    json to_json() const {
        json j;
        j["tool"] = "synchrony";
        j["version"] = sy_version();
        j["subcommand"] = subcommand;
        j["argv"] = argv;
        j["config"] = config;
        j["seeds"] = seeds;
        j["grid_fingerprint"] = grid_fingerprint;
        json in = json::array();
        for (const auto& p : inputs) in.push_back({{"path", p}, {"sha256", hash_of(p)}});
        j["inputs"] = in;
        json out = json::array();
        for (const auto& p : outputs) out.push_back({{"path", p}, {"sha256", hash_of(p)}});
        j["outputs"] = out;
        j["started_at"] = utc_now();
        j["wall_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return j;
    }
};

void write_manifest(const Manifest& m, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw Failure{2, "cannot write manifest " + path};
    f << m.to_json().dump(2) << "\n";
}

void print_matrix(const std::vector<double>& m, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) std::printf(j ? ",%.17g" : "%.17g", m[i * n + j]);
        std::printf("\n");
    }
}

std::string read_string(sy_status (*fn)(const sy_grid*, char*, size_t, size_t*), const sy_grid* g) {
    size_t needed = 0;
    check(fn(g, nullptr, 0, &needed));
    std::string s(needed, '\0');
    check(fn(g, s.data(), s.size(), &needed));
    s.resize(needed - 1);
    return s;
}

struct Options {
    // shared
    std::string grid, out, data, multi, model, trajectory, history, manifest;
    std::uint64_t seed = 0;
    unsigned threads = 0;
    // gridinfo
    int adjacency_dump = 0;
    // simulate
    std::vector<std::string> kicks;
    double dt = 0.0125, t_end = 1.25;
    bool classify = false;
    // generate
    std::string mode = "single";
    sy_sampling_spec spec{};
    // train
    sy_model_config mcfg{};
    sy_train_config tcfg{};
    std::string flow = "literal", optimizer = "adam";
    std::uint64_t split_seed = 0;
    bool no_class_weighting = false;
    // eval
    double threshold = 0.5;
    // replay
    std::string replay_path;
};

int run(const std::vector<std::string>& args);

void describe_counts(const sy_dataset* ds, const char* what) {
    size_t n = 0, stable = 0, unstable = 0;
    check(sy_dataset_info(ds, &n, nullptr, nullptr, &stable, &unstable));
    std::printf("%s: %zu samples (%zu stable, %zu unstable)\n", what, n, stable, unstable);
}

int cmd_gridinfo(const Options& o, Manifest& m) {
    Grid g;
    check(sy_grid_load(o.grid.c_str(), g.out()));
    size_t n = 0, e = 0;
    check(sy_grid_size(g.get(), &n, &e));
    m.inputs.push_back(o.grid);
    m.grid_fingerprint = grid_fp(g);
    const auto violations = read_string(sy_grid_validate, g.get());
    std::printf("name: %s\n", read_string(sy_grid_name, g.get()).c_str());
    std::printf("N=%zu E=%zu %s\n", n, e, violations.empty() ? "connected" : "invalid");
    std::printf("fingerprint: %s\n", m.grid_fingerprint.c_str());
    for (size_t i = 0; i < n; ++i) {
        double alpha = 0, power = 0;
        check(sy_grid_node(g.get(), i, &alpha, &power));
        const char* kind = power > 0 ? "generator" : power < 0 ? "load" : "passive";
        std::printf("node %zu %s alpha=%.17g power=%.17g\n", i, kind, alpha, power);
    }
    if (!violations.empty()) std::printf("violations:\n%s\n", violations.c_str());
    const auto warn = read_string(sy_grid_warnings, g.get());
    if (!warn.empty()) std::fprintf(stderr, "warning: %s\n", warn.c_str());
    if (o.adjacency_dump != 0) {
        std::vector<double> raw(n * n), norm(n * n);
        check(sy_grid_adjacency(g.get(), o.adjacency_dump, raw.data(), norm.data()));
        std::printf("# adjacency variant %d\n", o.adjacency_dump);
        print_matrix(raw, n);
        std::printf("# renormalized\n");
        print_matrix(norm, n);
    }
    m.config = {{"adjacency", o.adjacency_dump}};
    return 0;
}

int cmd_simulate(const Options& o, Manifest& m) {
    Grid g;
    check(sy_grid_load(o.grid.c_str(), g.out()));
    size_t n = 0;
    check(sy_grid_size(g.get(), &n, nullptr));
    std::vector<double> delta(n);
    check(sy_grid_equilibrium(g.get(), delta.data()));
    std::vector<double> omega(n, 0.0);
    for (const auto& k : o.kicks) {
        const auto eq = k.find('=');
        std::size_t node = 0;
        double value = 0.0;
        try {
            if (eq == std::string::npos) throw std::invalid_argument(k);
            node = std::stoul(k.substr(0, eq));
            value = std::stod(k.substr(eq + 1));
        } catch (const std::exception&) {
            throw Failure{2, "--kick expects NODE=OMEGA, got '" + k + "'"};
        }
        if (node >= n) throw Failure{2, "--kick node " + std::to_string(node) + " out of range"};
        omega[node] += value;
    }
    size_t states = 0;
    check(sy_simulate(g.get(), delta.data(), omega.data(), o.dt, o.t_end, o.out.c_str(), &states));
    std::printf("wrote %zu states to %s\n", states, o.out.c_str());
    if (o.classify) {
        int label = 0;
        double w = 0, gap = 0;
        check(sy_classify(g.get(), delta.data(), omega.data(), &o.spec.label, &label, &w, &gap));
        std::printf("label=%d (%s) terminal_max_omega=%.6g terminal_max_gap=%.6g\n", label,
                    label ? "stable" : "unstable", w, gap);
    }
    m.inputs.push_back(o.grid);
    m.outputs.push_back(o.out);
    m.grid_fingerprint = grid_fp(g);
    m.config = {{"dt", o.dt}, {"t_end", o.t_end}, {"kicks", o.kicks}};
    return 0;
}

json spec_json(const sy_sampling_spec& s) {
    return {{"mode", s.mode == SY_MODE_MULTI ? "multi" : "single"},
            {"omega_bound", s.omega_bound},
            {"nodes_per_combo", s.nodes_per_combo},
            {"per_node", s.per_node},
            {"combos", s.combos},
            {"per_combo", s.per_combo},
            {"window", s.window},
            {"perturb_delta", s.perturb_delta != 0},
            {"t_label", s.label.t_label},
            {"dt", s.label.dt},
            {"eps_omega", s.label.eps_omega},
            {"label_window", s.label.window},
            {"gamma", s.label.gamma}};
}

int cmd_generate(Options o, Manifest& m) {
    Grid g;
    check(sy_grid_load(o.grid.c_str(), g.out()));
    if (o.mode != "single" && o.mode != "multi") throw Failure{2, "--mode must be single or multi"};
    o.spec.mode = o.mode == "multi" ? SY_MODE_MULTI : SY_MODE_SINGLE;
    o.spec.seed = o.seed;
    Data ds;
    check(sy_dataset_generate(g.get(), &o.spec, o.threads, ds.out()));
    check(sy_dataset_save(ds.get(), o.out.c_str(), &o.spec));
    describe_counts(ds.get(), o.out.c_str());
    m.inputs.push_back(o.grid);
    m.outputs = {o.out, o.out + ".json"};
    m.grid_fingerprint = grid_fp(g);
    m.config = spec_json(o.spec);
    m.seeds = {{"seed", o.seed}};
    return 0;
}

void on_epoch(const sy_epoch_record* r, void*) {
    std::fprintf(stderr, "epoch %zu train_loss=%.6f train_acc=%.4f val_loss=%.6f val_acc=%.4f\n", r->epoch,
                 r->train_loss, r->train_acc, r->val_loss, r->val_acc);
}

json metrics_json(const sy_metrics& mt) {
    size_t needed = 0;
    check(sy_metrics_json(&mt, nullptr, 0, &needed));
    std::string s(needed, '\0');
    check(sy_metrics_json(&mt, s.data(), s.size(), &needed));
    s.resize(needed - 1);
    return json::parse(s);
}

int cmd_train(Options o, Manifest& m) {
    Grid g;
    check(sy_grid_load(o.grid.c_str(), g.out()));
    Data single, multi;
    check(sy_dataset_load(o.data.c_str(), single.out()));
    m.inputs = {o.grid, o.data};
    if (!o.multi.empty()) {
        check(sy_dataset_load(o.multi.c_str(), multi.out()));
        m.inputs.push_back(o.multi);
    }
    Data train, val, test;
    check(sy_dataset_split(single.get(), multi.get(), o.split_seed, train.out(), val.out(), test.out()));
    describe_counts(train.get(), "train");
    describe_counts(val.get(), "val");
    describe_counts(test.get(), "test");

    if (o.flow != "literal" && o.flow != "temporal") throw Failure{2, "--flow must be literal or temporal"};
    if (o.optimizer != "adam" && o.optimizer != "sgd") throw Failure{2, "--optimizer must be adam or sgd"};
    o.mcfg.flow = o.flow == "temporal" ? SY_FLOW_TEMPORAL : SY_FLOW_LITERAL;
    o.tcfg.optimizer = o.optimizer == "sgd" ? SY_OPT_SGD : SY_OPT_ADAM;
    o.tcfg.class_weighting = o.no_class_weighting ? 0 : 1;
    o.tcfg.seed = o.seed;

    size_t window = 0;
    check(sy_dataset_info(single.get(), nullptr, nullptr, &window, nullptr, nullptr));
    Model model;
    check(sy_model_create(g.get(), &o.mcfg, window, o.seed, model.out()));
    const std::string history = o.history.empty() ? o.out + ".history.csv" : o.history;
    size_t best_epoch = 0;
    double best_acc = 0.0;
    check(sy_model_train(model.get(), train.get(), val.get(), &o.tcfg, on_epoch, nullptr, history.c_str(),
                         &best_epoch, &best_acc));
    check(sy_model_save(model.get(), o.out.c_str()));
    std::printf("best epoch %zu, validation ACC %.4f\n", best_epoch, best_acc);

    size_t test_count = 0;
    check(sy_dataset_info(test.get(), &test_count, nullptr, nullptr, nullptr, nullptr));
    m.outputs = {o.out, history};
    if (test_count > 0) {
        sy_metrics mt{};
        check(sy_model_evaluate(model.get(), test.get(), 0.5, &mt));
        const std::string metrics_path = o.out + ".metrics.json";
        std::ofstream(metrics_path) << metrics_json(mt).dump(2) << "\n";
        std::printf("test ACC=%.4f FPR=%.4f FNR=%.4f AUC=%s\n", mt.acc, mt.fpr, mt.fnr,
                    mt.auc_defined ? std::to_string(mt.auc).c_str() : "undefined");
        m.outputs.push_back(metrics_path);
    }
    m.grid_fingerprint = grid_fp(g);
    m.config = {{"model",
                 {{"gc_layers", o.mcfg.gc_layers},
                  {"gc_width", o.mcfg.gc_width},
                  {"fc_width", o.mcfg.fc_width},
                  {"blocks", o.mcfg.blocks},
                  {"kernel", o.mcfg.kernel},
                  {"filters", o.mcfg.filters},
                  {"mlp_hidden", o.mcfg.mlp_hidden},
                  {"adjacency", o.mcfg.adjacency},
                  {"flow", o.flow}}},
                {"train",
                 {{"lr", o.tcfg.learning_rate},
                  {"batch", o.tcfg.batch_size},
                  {"l2", o.tcfg.l2},
                  {"alpha0", o.tcfg.alpha0},
                  {"class_weighting", o.tcfg.class_weighting != 0},
                  {"epochs", o.tcfg.epochs},
                  {"patience", o.tcfg.patience},
                  {"optimizer", o.optimizer}}},
                {"best_epoch", best_epoch}};
    m.seeds = {{"seed", o.seed}, {"split_seed", o.split_seed}};
    return 0;
}

int cmd_eval(const Options& o, Manifest& m) {
    Grid g;
    if (!o.grid.empty()) check(sy_grid_load(o.grid.c_str(), g.out()));
    Model model;
    check(sy_model_load(o.model.c_str(), g.get(), model.out()));
    Data ds;
    check(sy_dataset_load(o.data.c_str(), ds.out()));
    sy_metrics mt{};
    check(sy_model_evaluate(model.get(), ds.get(), o.threshold, &mt));
    const auto text = metrics_json(mt).dump(2);
    std::printf("%s\n", text.c_str());
    m.inputs = {o.model, o.data};
    if (!o.out.empty()) {
        std::ofstream(o.out) << text << "\n";
        m.outputs.push_back(o.out);
    }
    char hex[65];
    check(sy_model_fingerprint(model.get(), hex));
    m.grid_fingerprint = hex;
    m.config = {{"threshold", o.threshold}};
    return 0;
}

int cmd_predict(const Options& o, Manifest& m) {
    Grid g;
    if (!o.grid.empty()) check(sy_grid_load(o.grid.c_str(), g.out()));
    Model model;
    check(sy_model_load(o.model.c_str(), g.get(), model.out()));
    double p = 0.0;
    check(sy_model_predict_csv(model.get(), o.trajectory.c_str(), &p));
    std::printf("p=%.17g verdict=%s\n", p, p > o.threshold ? "stable" : "unstable");
    m.inputs = {o.model, o.trajectory};
    char hex[65];
    check(sy_model_fingerprint(model.get(), hex));
    m.grid_fingerprint = hex;
    m.config = {{"threshold", o.threshold}};
    return 0;
}

int cmd_replay(const Options& o) {
    std::ifstream f(o.replay_path);
    if (!f) throw Failure{2, "cannot read manifest " + o.replay_path};
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw Failure{2, o.replay_path + ": " + e.what()};
    }
    if (!j.contains("argv") || !j["argv"].is_array()) throw Failure{2, o.replay_path + ": missing argv"};
    const auto argv = j["argv"].get<std::vector<std::string>>();
    const int rc = run(argv);
    if (rc != 0) return rc;
    bool same = true;
    for (const auto& out : j.value("outputs", json::array())) {
        const auto path = out.at("path").get<std::string>();
        const auto now = hash_of(path);
        const bool match = now == out.at("sha256").get<std::string>();
        same = same && match;
        std::printf("%s %s\n", match ? "identical" : "DIFFERS  ", path.c_str());
    }
    if (!same) throw Failure{4, "replay did not reproduce the recorded outputs"};
    return 0;
}

int run(const std::vector<std::string>& args) {
    Options o;
    sy_sampling_defaults(&o.spec);
    sy_model_config_defaults(&o.mcfg);
    sy_train_defaults(&o.tcfg);
    o.seed = default_seed();

    CLI::App app{"Transient-stability simulation, dataset generation and TTEDNN training", "synchrony"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(sy_version()));

    auto seed_opt = [&](CLI::App* sc) {
        return sc->add_option("--seed", o.seed, "Random seed (default: $SYNCHRONY_SEED or 0)");
    };
    auto manifest_opt = [&](CLI::App* sc) {
        sc->add_option("--manifest", o.manifest, "Write a run manifest to this path");
    };
    std::map<CLI::App*, CLI::Option*> seeds;

    auto* gi = app.add_subcommand("gridinfo", "Summarize a grid file");
    gi->add_option("grid", o.grid, "Grid file")->required();
    gi->add_option("--adjacency", o.adjacency_dump, "Dump adjacency variant B and its renormalized form")
        ->check(CLI::IsMember({1, 2, 3}));
    manifest_opt(gi);

    auto* sim = app.add_subcommand("simulate", "Integrate from the equilibrium plus frequency kicks");
    sim->add_option("--grid", o.grid, "Grid file")->required();
    sim->add_option("--out", o.out, "Trajectory CSV")->required();
    sim->add_option("--kick", o.kicks, "NODE=OMEGA frequency kick (repeatable)");
    sim->add_option("--dt", o.dt, "Step size (s)")->capture_default_str();
    sim->add_option("--t-end", o.t_end, "Horizon (s)")->capture_default_str();
    sim->add_flag("--classify", o.classify, "Also report the stability label");
    manifest_opt(sim);

    auto* gen = app.add_subcommand("generate", "Generate a labeled perturbation dataset");
    gen->add_option("--grid", o.grid, "Grid file")->required();
    gen->add_option("--out", o.out, "Dataset file")->required();
    gen->add_option("--mode", o.mode, "single | multi")->capture_default_str();
    gen->add_option("--per-node", o.spec.per_node, "Samples per node (single mode)")->capture_default_str();
    gen->add_option("--m", o.spec.nodes_per_combo, "Nodes perturbed together (multi mode)")
        ->capture_default_str();
    gen->add_option("--combos", o.spec.combos, "Node combinations (multi mode)")->capture_default_str();
    gen->add_option("--per-combo", o.spec.per_combo, "Samples per combination")->capture_default_str();
    gen->add_option("--window", o.spec.window, "Recorded steps per sample")->capture_default_str();
    gen->add_option("--omega-bound", o.spec.omega_bound, "Kick bound (rad/s)")->capture_default_str();
    gen->add_flag("--perturb-delta", o.spec.perturb_delta, "Also kick phases uniformly in [-pi, pi]");
    gen->add_option("--t-label", o.spec.label.t_label, "Labeling horizon (s)")->capture_default_str();
    gen->add_option("--dt", o.spec.label.dt, "Step size (s)")->capture_default_str();
    gen->add_option("--eps-omega", o.spec.label.eps_omega, "Terminal frequency tolerance")
        ->capture_default_str();
    gen->add_option("--label-window", o.spec.label.window, "Terminal window (s)")->capture_default_str();
    gen->add_option("--gamma", o.spec.label.gamma, "Edge phase-gap bound (rad)")->capture_default_str();
    gen->add_option("--threads", o.threads, "Worker threads (0 = all cores)")->capture_default_str();
    seeds[gen] = seed_opt(gen);
    manifest_opt(gen);

    auto* tr = app.add_subcommand("train", "Split a dataset, train a model and report test metrics");
    tr->add_option("--grid", o.grid, "Grid file")->required();
    tr->add_option("--data", o.data, "Single-node dataset")->required();
    tr->add_option("--multi", o.multi, "Multi-node dataset (test only)");
    tr->add_option("--out", o.out, "Checkpoint file")->required();
    tr->add_option("--history", o.history, "History CSV (default: <out>.history.csv)");
    tr->add_option("--gc-layers", o.mcfg.gc_layers)->capture_default_str();
    tr->add_option("--gc-width", o.mcfg.gc_width)->capture_default_str();
    tr->add_option("--fc-width", o.mcfg.fc_width)->capture_default_str();
    tr->add_option("--blocks", o.mcfg.blocks)->capture_default_str();
    tr->add_option("--kernel", o.mcfg.kernel)->capture_default_str();
    tr->add_option("--filters", o.mcfg.filters)->capture_default_str();
    tr->add_option("--mlp-hidden", o.mcfg.mlp_hidden)->capture_default_str();
    tr->add_option("--adjacency", o.mcfg.adjacency)->check(CLI::IsMember({1, 2, 3}))->capture_default_str();
    tr->add_option("--flow", o.flow, "literal | temporal")->capture_default_str();
    tr->add_option("--lr", o.tcfg.learning_rate)->capture_default_str();
    tr->add_option("--batch", o.tcfg.batch_size)->capture_default_str();
    tr->add_option("--l2", o.tcfg.l2)->capture_default_str();
    tr->add_option("--alpha0", o.tcfg.alpha0)->capture_default_str();
    tr->add_flag("--no-class-weighting", o.no_class_weighting, "Use alpha1 = 1 instead of the batch ratio");
    tr->add_option("--epochs", o.tcfg.epochs)->capture_default_str();
    tr->add_option("--patience", o.tcfg.patience)->capture_default_str();
    tr->add_option("--optimizer", o.optimizer, "adam | sgd")->capture_default_str();
    tr->add_option("--split-seed", o.split_seed, "Seed of the train/val/test shuffle")->capture_default_str();
    seeds[tr] = seed_opt(tr);
    manifest_opt(tr);

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    ev->add_option("--model", o.model, "Checkpoint")->required();
    ev->add_option("--data", o.data, "Dataset")->required();
    ev->add_option("--grid", o.grid, "Grid the checkpoint must belong to");
    ev->add_option("--threshold", o.threshold)->capture_default_str();
    ev->add_option("--out", o.out, "Also write the metrics JSON here");
    manifest_opt(ev);

    auto* pr = app.add_subcommand("predict", "Classify one exported trajectory");
    pr->add_option("--model", o.model, "Checkpoint")->required();
    pr->add_option("--trajectory", o.trajectory, "Trajectory CSV")->required();
    pr->add_option("--grid", o.grid, "Grid the checkpoint must belong to");
    pr->add_option("--threshold", o.threshold)->capture_default_str();
    manifest_opt(pr);

    auto* rp = app.add_subcommand("replay", "Rerun a manifest and compare output hashes");
    rp->add_option("manifest", o.replay_path, "Run manifest")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    CLI::App* sc = app.get_subcommands().front();
    Manifest m;
    m.subcommand = sc->get_name();
    m.argv = args;
    if (auto it = seeds.find(sc); it != seeds.end() && it->second->count() == 0) {
        m.argv.push_back("--seed");
        m.argv.push_back(std::to_string(o.seed));
    }
    if (!o.manifest.empty()) {
        // The stored command line should not rewrite the manifest on replay.
        std::vector<std::string> kept;
        for (std::size_t i = 0; i < m.argv.size(); ++i) {
            if (m.argv[i] == "--manifest") {
                ++i;
                continue;
            }
            if (m.argv[i].rfind("--manifest=", 0) == 0) continue;
            kept.push_back(m.argv[i]);
        }
        m.argv = std::move(kept);
    }

    int rc = 0;
    if (sc == gi) rc = cmd_gridinfo(o, m);
    else if (sc == sim) rc = cmd_simulate(o, m);
    else if (sc == gen) rc = cmd_generate(o, m);
    else if (sc == tr) rc = cmd_train(o, m);
    else if (sc == ev) rc = cmd_eval(o, m);
    else if (sc == pr) rc = cmd_predict(o, m);
    else if (sc == rp) return cmd_replay(o);

    std::string manifest_path = o.manifest;
    if (manifest_path.empty() && (sc == gen || sc == tr)) manifest_path = o.out + ".run.json";
    if (!manifest_path.empty()) write_manifest(m, manifest_path);
    return rc;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        return run(args);
    } catch (const Failure& f) {
        std::fprintf(stderr, "error: %s\n", f.message.c_str());
        return f.code;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
