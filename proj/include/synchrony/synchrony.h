/* Flat C interface to the synchrony library.
 *
 * Objects are opaque handles owned by the caller and released with the
 * matching *_free function. Every fallible call returns an sy_status; on
 * failure a message is available from sy_last_error() on the same thread.
 * Status values double as process exit codes for the command-line tool.
 */
#ifndef SYNCHRONY_SYNCHRONY_H
#define SYNCHRONY_SYNCHRONY_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  ifdef SYNCHRONY_BUILDING
#    define SY_API __declspec(dllexport)
#  else
#    define SY_API __declspec(dllimport)
#  endif
#else
#  define SY_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sy_status {
    SY_OK = 0,
    SY_ERR_INTERNAL = 1,
    SY_ERR_INPUT = 2,     /* unreadable, malformed or invalid input */
    SY_ERR_NUMERICAL = 3, /* blow-up, divergence, missing equilibrium */
    SY_ERR_CONTRACT = 4   /* fingerprint mismatch, bad arguments */
} sy_status;

typedef struct sy_grid sy_grid;
typedef struct sy_dataset sy_dataset;
typedef struct sy_model sy_model;

SY_API const char* sy_version(void);
/* Message of the most recent failure on this thread ("" if none). */
SY_API const char* sy_last_error(void);

/* Strings are returned through (buf, cap, needed): at most cap bytes
 * including the terminator are written, *needed receives the full length
 * plus one. buf may be NULL when cap is 0. */

/* ---- grid ------------------------------------------------------------- */

SY_API sy_status sy_grid_load(const char* path, sy_grid** out);
SY_API void sy_grid_free(sy_grid* grid);
SY_API sy_status sy_grid_size(const sy_grid* grid, size_t* nodes, size_t* edges);
SY_API sy_status sy_grid_name(const sy_grid* grid, char* buf, size_t cap, size_t* needed);
SY_API sy_status sy_grid_node(const sy_grid* grid, size_t index, double* alpha, double* power);
/* 64 hex digits plus terminator. */
SY_API sy_status sy_grid_fingerprint(const sy_grid* grid, char hex[65]);
/* Newline-separated validation violations and warnings (empty = none). */
SY_API sy_status sy_grid_validate(const sy_grid* grid, char* buf, size_t cap, size_t* needed);
SY_API sy_status sy_grid_warnings(const sy_grid* grid, char* buf, size_t cap, size_t* needed);
/* Synchronized phase angles (N values, node 0 at 0). */
SY_API sy_status sy_grid_equilibrium(const sy_grid* grid, double* delta);
/* variant 1, 2 or 3. raw and normalized receive N*N row-major values;
 * either may be NULL. */
SY_API sy_status sy_grid_adjacency(const sy_grid* grid, int variant, double* raw, double* normalized);

/* ---- dynamics --------------------------------------------------------- */

typedef struct sy_label_config {
    double t_label;
    double dt;
    double eps_omega;
    double window;
    double gamma;
} sy_label_config;

SY_API void sy_label_config_defaults(sy_label_config* cfg);

/* Integrate from (delta0, omega0) and write the trajectory CSV. A NULL
 * delta0 starts from the equilibrium; a NULL omega0 starts at rest. */
SY_API sy_status sy_simulate(const sy_grid* grid, const double* delta0, const double* omega0, double dt,
                             double t_end, const char* csv_path, size_t* states);

SY_API sy_status sy_classify(const sy_grid* grid, const double* delta0, const double* omega0,
                             const sy_label_config* cfg, int* label, double* max_omega, double* max_gap);

/* ---- datasets --------------------------------------------------------- */

typedef enum sy_mode { SY_MODE_SINGLE = 0, SY_MODE_MULTI = 1 } sy_mode;

typedef struct sy_sampling_spec {
    int mode;
    double omega_bound;
    size_t nodes_per_combo;
    size_t per_node;
    size_t combos;
    size_t per_combo;
    uint64_t seed;
    size_t window;
    int perturb_delta;
    sy_label_config label;
} sy_sampling_spec;

SY_API void sy_sampling_defaults(sy_sampling_spec* spec);
SY_API sy_status sy_dataset_generate(const sy_grid* grid, const sy_sampling_spec* spec, unsigned threads,
                                     sy_dataset** out);
/* spec may be NULL; when given it is recorded in the sidecar manifest. */
SY_API sy_status sy_dataset_save(const sy_dataset* ds, const char* path, const sy_sampling_spec* spec);
SY_API sy_status sy_dataset_load(const char* path, sy_dataset** out);
SY_API void sy_dataset_free(sy_dataset* ds);
SY_API sy_status sy_dataset_info(const sy_dataset* ds, size_t* count, size_t* nodes, size_t* window,
                                 size_t* stable, size_t* unstable);
SY_API sy_status sy_dataset_fingerprint(const sy_dataset* ds, char hex[65]);
/* omega receives N*T values (may be NULL). */
SY_API sy_status sy_dataset_sample(const sy_dataset* ds, size_t index, double* omega, int* label);
/* multi may be NULL. Outputs are new handles. */
SY_API sy_status sy_dataset_split(const sy_dataset* single, const sy_dataset* multi, uint64_t seed,
                                  sy_dataset** train, sy_dataset** val, sy_dataset** test);
/* Concatenation of two datasets recorded on the same grid. */
SY_API sy_status sy_dataset_concat(const sy_dataset* a, const sy_dataset* b, sy_dataset** out);

/* ---- model ------------------------------------------------------------ */

typedef enum sy_flow { SY_FLOW_LITERAL = 0, SY_FLOW_TEMPORAL = 1 } sy_flow;

typedef struct sy_model_config {
    size_t gc_layers;
    size_t gc_width;
    size_t fc_width;
    size_t blocks;
    size_t kernel;
    size_t filters;
    size_t mlp_hidden;
    int adjacency;
    int flow;
} sy_model_config;

typedef enum sy_optimizer { SY_OPT_ADAM = 0, SY_OPT_SGD = 1 } sy_optimizer;

typedef struct sy_train_config {
    double learning_rate;
    size_t batch_size;
    double l2;
    double alpha0;
    int class_weighting;
    size_t epochs;
    size_t patience;
    uint64_t seed;
    int optimizer;
} sy_train_config;

typedef struct sy_epoch_record {
    size_t epoch;
    double train_loss;
    double train_acc;
    double val_loss;
    double val_acc;
} sy_epoch_record;

typedef void (*sy_epoch_callback)(const sy_epoch_record* record, void* user);

typedef struct sy_metrics {
    size_t tp, tn, fp, fn;
    double acc, fpr, fnr, tpr;
    double auc;
    int auc_defined;
} sy_metrics;

SY_API void sy_model_config_defaults(sy_model_config* cfg);
SY_API void sy_train_defaults(sy_train_config* cfg);

SY_API sy_status sy_model_create(const sy_grid* grid, const sy_model_config* cfg, size_t window, uint64_t seed,
                                 sy_model** out);
/* grid may be NULL; when given its fingerprint must match the checkpoint. */
SY_API sy_status sy_model_load(const char* path, const sy_grid* grid, sy_model** out);
SY_API sy_status sy_model_save(const sy_model* model, const char* path);
SY_API void sy_model_free(sy_model* model);
SY_API sy_status sy_model_info(const sy_model* model, size_t* nodes, size_t* window, size_t* parameters);
SY_API sy_status sy_model_config_of(const sy_model* model, sy_model_config* cfg);
SY_API sy_status sy_model_fingerprint(const sy_model* model, char hex[65]);

/* val may be NULL. history_csv may be NULL. callback may be NULL. */
SY_API sy_status sy_model_train(sy_model* model, const sy_dataset* train, const sy_dataset* val,
                                const sy_train_config* cfg, sy_epoch_callback callback, void* user,
                                const char* history_csv, size_t* best_epoch, double* best_val_acc);
SY_API sy_status sy_model_evaluate(sy_model* model, const sy_dataset* ds, double threshold, sy_metrics* out);
SY_API sy_status sy_metrics_json(const sy_metrics* metrics, char* buf, size_t cap, size_t* needed);
/* One N*T sample (node-major). */
SY_API sy_status sy_model_predict(sy_model* model, const double* omega, double* p);
/* Probabilities for every sample; out holds sy_dataset_info count values. */
SY_API sy_status sy_model_predict_dataset(sy_model* model, const sy_dataset* ds, double* out);
/* First T rows of the omega columns of a trajectory CSV. */
SY_API sy_status sy_model_predict_csv(sy_model* model, const char* csv_path, double* p);

/* ---- misc ------------------------------------------------------------- */

SY_API sy_status sy_file_sha256(const char* path, char hex[65]);

#ifdef __cplusplus
}
#endif

#endif
