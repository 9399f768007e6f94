#include "synchrony/synchrony.h"

#include <algorithm>
#include <cstring>
#include <memory>
#include <new>
#include <optional>
#include <string>

#include "synchrony/adjacency.hpp"
#include "synchrony/binary_io.hpp"
#include "synchrony/dynamics.hpp"
#include "synchrony/error.hpp"
#include "synchrony/grid.hpp"
#include "synchrony/model.hpp"
#include "synchrony/sampling.hpp"
#include "synchrony/training.hpp"

struct sy_grid {
    synchrony::PowerGrid grid;
    synchrony::Fingerprint fp{};
};

struct sy_dataset {
    synchrony::Dataset ds;
};

struct sy_model {
    std::unique_ptr<synchrony::TtednnModel> model;
};

namespace {

thread_local std::string last_error;

template <class F>
sy_status guarded(F&& body) {
    try {
        last_error.clear();
        body();
        return SY_OK;
    } catch (const synchrony::Error& e) {
        last_error = e.what();
        return static_cast<sy_status>(static_cast<int>(e.kind()));
    } catch (const std::bad_alloc&) {
        last_error = "out of memory";
        return SY_ERR_INTERNAL;
    } catch (const std::exception& e) {
        last_error = e.what();
        return SY_ERR_INTERNAL;
    }
}

template <class T>
void require(const T* p, const char* what) {
    if (p == nullptr) throw synchrony::ContractError(std::string(what) + " must not be null");
}

void copy_string(const std::string& s, char* buf, size_t cap, size_t* needed) {
    if (needed) *needed = s.size() + 1;
    if (buf && cap > 0) {
        const size_t n = std::min(cap - 1, s.size());
        std::memcpy(buf, s.data(), n);
        buf[n] = '\0';
    }
}

void copy_hex(const synchrony::Fingerprint& fp, char hex[65]) {
    const auto s = synchrony::to_hex(fp);
    std::memcpy(hex, s.c_str(), 65);
}

std::string join_lines(const std::vector<std::string>& lines) {
    std::string out;
    for (const auto& l : lines) {
        if (!out.empty()) out += '\n';
        out += l;
    }
    return out;
}

synchrony::LabelConfig to_label(const sy_label_config& c) {
    return {c.t_label, c.dt, c.eps_omega, c.window, c.gamma};
}

sy_label_config from_label(const synchrony::LabelConfig& c) {
    return {c.t_label, c.dt, c.eps_omega, c.window, c.gamma};
}

synchrony::PerturbationSpec to_spec(const sy_sampling_spec& s) {
    synchrony::PerturbationSpec spec;
    if (s.mode != SY_MODE_SINGLE && s.mode != SY_MODE_MULTI)
        throw synchrony::ContractError("unknown perturbation mode " + std::to_string(s.mode));
    spec.mode = s.mode == SY_MODE_MULTI ? synchrony::PerturbationMode::Multi : synchrony::PerturbationMode::Single;
    spec.omega_bound = s.omega_bound;
    spec.nodes_per_combo = s.nodes_per_combo;
    spec.per_node = s.per_node;
    spec.combos = s.combos;
    spec.per_combo = s.per_combo;
    spec.seed = s.seed;
    spec.window = s.window;
    spec.perturb_delta = s.perturb_delta != 0;
    spec.label = to_label(s.label);
    return spec;
}

synchrony::ModelConfig to_model_config(const sy_model_config& c, size_t nodes, size_t window) {
    synchrony::ModelConfig m;
    m.nodes = nodes;
    m.window = window;
    m.gc_layers = c.gc_layers;
    m.gc_width = c.gc_width;
    m.fc_width = c.fc_width;
    m.blocks = c.blocks;
    m.kernel = c.kernel;
    m.filters = c.filters;
    m.mlp_hidden = c.mlp_hidden;
    m.adjacency = synchrony::adjacency_variant_from_int(c.adjacency);
    if (c.flow != SY_FLOW_LITERAL && c.flow != SY_FLOW_TEMPORAL)
        throw synchrony::ContractError("unknown data flow " + std::to_string(c.flow));
    m.flow = c.flow == SY_FLOW_TEMPORAL ? synchrony::DataFlow::TemporalPreserving : synchrony::DataFlow::Literal;
    return m;
}

std::optional<synchrony::SystemState> start_state(const synchrony::PowerGrid& g, const double* delta0,
                                                  const double* omega0) {
    const size_t n = g.size();
    synchrony::SystemState s = delta0 ? synchrony::SystemState(n) : synchrony::solve_equilibrium(g);
    if (delta0) s.delta.assign(delta0, delta0 + n);
    if (omega0) s.omega.assign(omega0, omega0 + n);
    return s;
}

}  // namespace

extern "C" {

const char* sy_version(void) { return "0.3.0"; }

const char* sy_last_error(void) { return last_error.c_str(); }

// ---- grid -----------------------------------------------------------------

sy_status sy_grid_load(const char* path, sy_grid** out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        auto g = std::make_unique<sy_grid>();
        g->grid = synchrony::load_grid(path);
        g->fp = synchrony::fingerprint(g->grid);
        *out = g.release();
    });
}

void sy_grid_free(sy_grid* grid) { delete grid; }

sy_status sy_grid_size(const sy_grid* grid, size_t* nodes, size_t* edges) {
    return guarded([&] {
        require(grid, "grid");
        if (nodes) *nodes = grid->grid.size();
        if (edges) *edges = grid->grid.edge_count();
    });
}

sy_status sy_grid_name(const sy_grid* grid, char* buf, size_t cap, size_t* needed) {
    return guarded([&] {
        require(grid, "grid");
        copy_string(grid->grid.name, buf, cap, needed);
    });
}

sy_status sy_grid_node(const sy_grid* grid, size_t index, double* alpha, double* power) {
    return guarded([&] {
        require(grid, "grid");
        if (index >= grid->grid.size())
            throw synchrony::ContractError("node index " + std::to_string(index) + " out of range");
        if (alpha) *alpha = grid->grid.nodes[index].alpha;
        if (power) *power = grid->grid.nodes[index].power;
    });
}

sy_status sy_grid_fingerprint(const sy_grid* grid, char hex[65]) {
    return guarded([&] {
        require(grid, "grid");
        require(hex, "hex");
        copy_hex(grid->fp, hex);
    });
}

sy_status sy_grid_validate(const sy_grid* grid, char* buf, size_t cap, size_t* needed) {
    return guarded([&] {
        require(grid, "grid");
        copy_string(join_lines(synchrony::validate(grid->grid)), buf, cap, needed);
    });
}

sy_status sy_grid_warnings(const sy_grid* grid, char* buf, size_t cap, size_t* needed) {
    return guarded([&] {
        require(grid, "grid");
        copy_string(join_lines(synchrony::warnings(grid->grid)), buf, cap, needed);
    });
}

sy_status sy_grid_equilibrium(const sy_grid* grid, double* delta) {
    return guarded([&] {
        require(grid, "grid");
        require(delta, "delta");
        const auto eq = synchrony::solve_equilibrium(grid->grid);
        std::copy(eq.delta.begin(), eq.delta.end(), delta);
    });
}

sy_status sy_grid_adjacency(const sy_grid* grid, int variant, double* raw, double* normalized) {
    return guarded([&] {
        require(grid, "grid");
        const auto v = synchrony::adjacency_variant_from_int(variant);
        std::optional<synchrony::SystemState> eq;
        if (v == synchrony::AdjacencyVariant::PowerFlow) eq = synchrony::solve_equilibrium(grid->grid);
        const auto op = synchrony::graph_operator(grid->grid, v, eq);
        if (raw) std::copy(op.adjacency.data.begin(), op.adjacency.data.end(), raw);
        if (normalized) std::copy(op.normalized.data.begin(), op.normalized.data.end(), normalized);
    });
}

// ---- dynamics -------------------------------------------------------------

void sy_label_config_defaults(sy_label_config* cfg) {
    if (cfg) *cfg = from_label(synchrony::LabelConfig{});
}

sy_status sy_simulate(const sy_grid* grid, const double* delta0, const double* omega0, double dt, double t_end,
                      const char* csv_path, size_t* states) {
    return guarded([&] {
        require(grid, "grid");
        require(csv_path, "csv_path");
        const auto s0 = start_state(grid->grid, delta0, omega0);
        const auto traj = synchrony::integrate(grid->grid, *s0, dt, t_end);
        synchrony::write_trajectory_csv(traj, csv_path);
        if (states) *states = traj.states.size();
    });
}

sy_status sy_classify(const sy_grid* grid, const double* delta0, const double* omega0, const sy_label_config* cfg,
                      int* label, double* max_omega, double* max_gap) {
    return guarded([&] {
        require(grid, "grid");
        const auto s0 = start_state(grid->grid, delta0, omega0);
        const auto lc = cfg ? to_label(*cfg) : synchrony::LabelConfig{};
        const auto v = synchrony::classify_stability(grid->grid, *s0, lc);
        if (label) *label = v.label;
        if (max_omega) *max_omega = v.terminal_max_omega;
        if (max_gap) *max_gap = v.terminal_max_gap;
    });
}

// ---- datasets -------------------------------------------------------------

void sy_sampling_defaults(sy_sampling_spec* spec) {
    if (!spec) return;
    const synchrony::PerturbationSpec d;
    spec->mode = SY_MODE_SINGLE;
    spec->omega_bound = d.omega_bound;
    spec->nodes_per_combo = d.nodes_per_combo;
    spec->per_node = d.per_node;
    spec->combos = d.combos;
    spec->per_combo = d.per_combo;
    spec->seed = d.seed;
    spec->window = d.window;
    spec->perturb_delta = d.perturb_delta ? 1 : 0;
    spec->label = from_label(d.label);
}

sy_status sy_dataset_generate(const sy_grid* grid, const sy_sampling_spec* spec, unsigned threads,
                              sy_dataset** out) {
    return guarded([&] {
        require(grid, "grid");
        require(spec, "spec");
        require(out, "out");
        auto d = std::make_unique<sy_dataset>();
        d->ds = synchrony::generate_dataset(grid->grid, to_spec(*spec), threads);
        *out = d.release();
    });
}

sy_status sy_dataset_save(const sy_dataset* ds, const char* path, const sy_sampling_spec* spec) {
    return guarded([&] {
        require(ds, "dataset");
        require(path, "path");
        if (spec) {
            const auto s = to_spec(*spec);
            synchrony::save_dataset(ds->ds, path, &s);
        } else {
            synchrony::save_dataset(ds->ds, path, nullptr);
        }
    });
}

sy_status sy_dataset_load(const char* path, sy_dataset** out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        auto d = std::make_unique<sy_dataset>();
        d->ds = synchrony::load_dataset(path);
        *out = d.release();
    });
}

void sy_dataset_free(sy_dataset* ds) { delete ds; }

sy_status sy_dataset_info(const sy_dataset* ds, size_t* count, size_t* nodes, size_t* window, size_t* stable,
                          size_t* unstable) {
    return guarded([&] {
        require(ds, "dataset");
        const auto c = ds->ds.counts();
        if (count) *count = ds->ds.size();
        if (nodes) *nodes = ds->ds.nodes;
        if (window) *window = ds->ds.window;
        if (stable) *stable = c.stable;
        if (unstable) *unstable = c.unstable;
    });
}

sy_status sy_dataset_fingerprint(const sy_dataset* ds, char hex[65]) {
    return guarded([&] {
        require(ds, "dataset");
        require(hex, "hex");
        copy_hex(ds->ds.grid, hex);
    });
}

sy_status sy_dataset_sample(const sy_dataset* ds, size_t index, double* omega, int* label) {
    return guarded([&] {
        require(ds, "dataset");
        if (index >= ds->ds.size())
            throw synchrony::ContractError("sample index " + std::to_string(index) + " out of range");
        const auto& s = ds->ds.samples[index];
        if (omega) std::copy(s.omega.begin(), s.omega.end(), omega);
        if (label) *label = s.label;
    });
}

sy_status sy_dataset_split(const sy_dataset* single, const sy_dataset* multi, uint64_t seed, sy_dataset** train,
                           sy_dataset** val, sy_dataset** test) {
    return guarded([&] {
        require(single, "single");
        require(train, "train");
        require(val, "val");
        require(test, "test");
        const synchrony::Dataset none;
        auto parts = synchrony::split_dataset(single->ds, multi ? multi->ds : none, seed);
        auto a = std::make_unique<sy_dataset>(sy_dataset{std::move(parts.train)});
        auto b = std::make_unique<sy_dataset>(sy_dataset{std::move(parts.val)});
        auto c = std::make_unique<sy_dataset>(sy_dataset{std::move(parts.test)});
        *train = a.release();
        *val = b.release();
        *test = c.release();
    });
}

sy_status sy_dataset_concat(const sy_dataset* a, const sy_dataset* b, sy_dataset** out) {
    return guarded([&] {
        require(a, "a");
        require(b, "b");
        require(out, "out");
        if (a->ds.grid != b->ds.grid)
            throw synchrony::FingerprintError("datasets come from different grids");
        if (a->ds.nodes != b->ds.nodes || a->ds.window != b->ds.window)
            throw synchrony::ContractError("datasets have different sample shapes");
        auto d = std::make_unique<sy_dataset>(sy_dataset{a->ds});
        d->ds.samples.insert(d->ds.samples.end(), b->ds.samples.begin(), b->ds.samples.end());
        *out = d.release();
    });
}

// ---- model ----------------------------------------------------------------

void sy_model_config_defaults(sy_model_config* cfg) {
    if (!cfg) return;
    const synchrony::ModelConfig d;
    cfg->gc_layers = d.gc_layers;
    cfg->gc_width = d.gc_width;
    cfg->fc_width = d.fc_width;
    cfg->blocks = d.blocks;
    cfg->kernel = d.kernel;
    cfg->filters = d.filters;
    cfg->mlp_hidden = d.mlp_hidden;
    cfg->adjacency = static_cast<int>(d.adjacency);
    cfg->flow = d.flow == synchrony::DataFlow::TemporalPreserving ? SY_FLOW_TEMPORAL : SY_FLOW_LITERAL;
}

void sy_train_defaults(sy_train_config* cfg) {
    if (!cfg) return;
    const synchrony::TrainConfig d;
    cfg->learning_rate = d.learning_rate;
    cfg->batch_size = d.batch_size;
    cfg->l2 = d.l2;
    cfg->alpha0 = d.alpha0;
    cfg->class_weighting = d.class_weighting ? 1 : 0;
    cfg->epochs = d.epochs;
    cfg->patience = d.patience;
    cfg->seed = d.seed;
    cfg->optimizer = d.optimizer == synchrony::Optimizer::Sgd ? SY_OPT_SGD : SY_OPT_ADAM;
}

sy_status sy_model_create(const sy_grid* grid, const sy_model_config* cfg, size_t window, uint64_t seed,
                          sy_model** out) {
    return guarded([&] {
        require(grid, "grid");
        require(out, "out");
        sy_model_config c;
        sy_model_config_defaults(&c);
        if (cfg) c = *cfg;
        const auto mc = to_model_config(c, grid->grid.size(), window);
        mc.check();
        std::optional<synchrony::SystemState> eq;
        if (mc.adjacency == synchrony::AdjacencyVariant::PowerFlow) eq = synchrony::solve_equilibrium(grid->grid);
        const auto op = synchrony::graph_operator(grid->grid, mc.adjacency, eq);
        auto m = std::make_unique<sy_model>();
        m->model = std::make_unique<synchrony::TtednnModel>(mc, op.normalized, grid->fp, seed);
        *out = m.release();
    });
}

sy_status sy_model_load(const char* path, const sy_grid* grid, sy_model** out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        auto m = std::make_unique<sy_model>();
        m->model = std::make_unique<synchrony::TtednnModel>(
            synchrony::TtednnModel::load(path, grid ? &grid->fp : nullptr));
        *out = m.release();
    });
}

sy_status sy_model_save(const sy_model* model, const char* path) {
    return guarded([&] {
        require(model, "model");
        require(path, "path");
        model->model->save(path);
    });
}

void sy_model_free(sy_model* model) { delete model; }

sy_status sy_model_info(const sy_model* model, size_t* nodes, size_t* window, size_t* parameters) {
    return guarded([&] {
        require(model, "model");
        const auto& c = model->model->config();
        if (nodes) *nodes = c.nodes;
        if (window) *window = c.window;
        if (parameters) {
            size_t total = 0;
            for (const auto& p : model->model->parameters()) total += p.size();
            *parameters = total;
        }
    });
}

sy_status sy_model_config_of(const sy_model* model, sy_model_config* cfg) {
    return guarded([&] {
        require(model, "model");
        require(cfg, "cfg");
        const auto& c = model->model->config();
        cfg->gc_layers = c.gc_layers;
        cfg->gc_width = c.gc_width;
        cfg->fc_width = c.fc_width;
        cfg->blocks = c.blocks;
        cfg->kernel = c.kernel;
        cfg->filters = c.filters;
        cfg->mlp_hidden = c.mlp_hidden;
        cfg->adjacency = static_cast<int>(c.adjacency);
        cfg->flow = c.flow == synchrony::DataFlow::TemporalPreserving ? SY_FLOW_TEMPORAL : SY_FLOW_LITERAL;
    });
}

sy_status sy_model_fingerprint(const sy_model* model, char hex[65]) {
    return guarded([&] {
        require(model, "model");
        require(hex, "hex");
        copy_hex(model->model->grid_fingerprint(), hex);
    });
}

sy_status sy_model_train(sy_model* model, const sy_dataset* train, const sy_dataset* val,
                         const sy_train_config* cfg, sy_epoch_callback callback, void* user,
                         const char* history_csv, size_t* best_epoch, double* best_val_acc) {
    return guarded([&] {
        require(model, "model");
        require(train, "train");
        sy_train_config c;
        sy_train_defaults(&c);
        if (cfg) c = *cfg;
        synchrony::TrainConfig tc;
        tc.learning_rate = c.learning_rate;
        tc.batch_size = c.batch_size;
        tc.l2 = c.l2;
        tc.alpha0 = c.alpha0;
        tc.class_weighting = c.class_weighting != 0;
        tc.epochs = c.epochs;
        tc.patience = c.patience;
        tc.seed = c.seed;
        tc.optimizer = c.optimizer == SY_OPT_SGD ? synchrony::Optimizer::Sgd : synchrony::Optimizer::Adam;
        const synchrony::Dataset none;
        synchrony::EpochCallback cb;
        if (callback)
            cb = [&](const synchrony::EpochRecord& r) {
                const sy_epoch_record rec{r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc};
                callback(&rec, user);
            };
        const auto result = synchrony::train(*model->model, train->ds, val ? val->ds : none, tc, cb);
        if (history_csv) synchrony::write_history_csv(result.history, history_csv);
        if (best_epoch) *best_epoch = result.best_epoch;
        if (best_val_acc) *best_val_acc = result.best_val_acc;
    });
}

sy_status sy_model_evaluate(sy_model* model, const sy_dataset* ds, double threshold, sy_metrics* out) {
    return guarded([&] {
        require(model, "model");
        require(ds, "dataset");
        require(out, "out");
        const auto m = synchrony::evaluate(*model->model, ds->ds, threshold);
        *out = sy_metrics{m.tp, m.tn, m.fp, m.fn, m.acc, m.fpr, m.fnr, m.tpr, m.auc, m.auc_defined ? 1 : 0};
    });
}

sy_status sy_metrics_json(const sy_metrics* metrics, char* buf, size_t cap, size_t* needed) {
    return guarded([&] {
        require(metrics, "metrics");
        synchrony::Metrics m;
        m.tp = metrics->tp;
        m.tn = metrics->tn;
        m.fp = metrics->fp;
        m.fn = metrics->fn;
        m.acc = metrics->acc;
        m.fpr = metrics->fpr;
        m.fnr = metrics->fnr;
        m.tpr = metrics->tpr;
        m.auc = metrics->auc;
        m.auc_defined = metrics->auc_defined != 0;
        copy_string(m.to_json(), buf, cap, needed);
    });
}

sy_status sy_model_predict(sy_model* model, const double* omega, double* p) {
    return guarded([&] {
        require(model, "model");
        require(omega, "omega");
        require(p, "p");
        const auto& c = model->model->config();
        *p = model->model->predict({omega, c.nodes * c.window});
    });
}

sy_status sy_model_predict_dataset(sy_model* model, const sy_dataset* ds, double* out) {
    return guarded([&] {
        require(model, "model");
        require(ds, "dataset");
        require(out, "out");
        const auto p = synchrony::predict(*model->model, ds->ds);
        std::copy(p.begin(), p.end(), out);
    });
}

sy_status sy_model_predict_csv(sy_model* model, const char* csv_path, double* p) {
    return guarded([&] {
        require(model, "model");
        require(csv_path, "csv_path");
        require(p, "p");
        const auto traj = synchrony::read_trajectory_csv(csv_path);
        const auto& c = model->model->config();
        if (traj.states.size() < c.window)
            throw synchrony::ParseError(std::string(csv_path) + ": trajectory has " +
                                        std::to_string(traj.states.size()) + " steps but the model needs " +
                                        std::to_string(c.window));
        if (traj.states.front().size() != c.nodes)
            throw synchrony::ContractError(std::string(csv_path) + ": trajectory has " +
                                           std::to_string(traj.states.front().size()) +
                                           " nodes but the model expects " + std::to_string(c.nodes));
        std::vector<double> omega(c.nodes * c.window);
        for (size_t t = 0; t < c.window; ++t)
            for (size_t i = 0; i < c.nodes; ++i) omega[i * c.window + t] = traj.states[t].omega[i];
        *p = model->model->predict(omega);
    });
}

sy_status sy_file_sha256(const char* path, char hex[65]) {
    return guarded([&] {
        require(path, "path");
        require(hex, "hex");
        const auto bytes = synchrony::io::read_file(path);
        copy_hex(synchrony::sha256(bytes), hex);
    });
}

}  // extern "C"
