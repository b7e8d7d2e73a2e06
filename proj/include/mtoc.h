/* C API for the multi-task one-class kernel regression library.
 *
 * Every function returns an mtoc_status; MTOC_OK means success. On any
 * failure mtoc_last_error() returns a thread-local human-readable message
 * describing what went wrong. Objects are opaque handles created and
 * destroyed by the matching _create/_load and _free calls; _free accepts
 * NULL. Output parameters are only written on success.
 */
#ifndef MTOC_H
#define MTOC_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mtoc_status {
  MTOC_OK = 0,
  MTOC_ERR_INVALID_ARGUMENT = 1,
  MTOC_ERR_PARSE = 2,
  MTOC_ERR_SCHEMA = 3,
  MTOC_ERR_NUMERICAL = 4,
  MTOC_ERR_TRAINING = 5,
  MTOC_ERR_EVALUATION = 6,
  MTOC_ERR_DEGENERATE_DATA = 7,
  MTOC_ERR_STATE = 8,
  MTOC_ERR_IO = 9,
  MTOC_ERR_CORRUPT_MODEL = 10,
  MTOC_ERR_VERSION_MISMATCH = 11,
  MTOC_ERR_INTERNAL = 12
} mtoc_status;

typedef struct mtoc_config mtoc_config;
typedef struct mtoc_dataset mtoc_dataset;
typedef struct mtoc_model mtoc_model;
typedef struct mtoc_results mtoc_results;

const char* mtoc_version(void);
const char* mtoc_status_name(mtoc_status status);
/* Message for the most recent failure on this thread; empty after success. */
const char* mtoc_last_error(void);

/* ---- configuration -------------------------------------------------- */

/* Key=value file with '#' comments; duplicate keys are rejected. */
mtoc_status mtoc_config_create(mtoc_config** out);
mtoc_status mtoc_config_load(const char* path, mtoc_config** out);
mtoc_status mtoc_config_parse(const char* text, mtoc_config** out);
mtoc_status mtoc_config_set(mtoc_config* config, const char* key,
                            const char* value);
/* Copies the value into buf (NUL-terminated); fails if missing or too long. */
mtoc_status mtoc_config_get(const mtoc_config* config, const char* key,
                            char* buf, size_t buflen);
mtoc_status mtoc_config_has(const mtoc_config* config, const char* key,
                            int* out_present);
mtoc_status mtoc_config_get_int(const mtoc_config* config, const char* key,
                                int fallback, int* out_value);
/* FNV-1a over the sorted key=value entries; pins a model to its config. */
mtoc_status mtoc_config_fingerprint(const mtoc_config* config,
                                    uint64_t* out_fingerprint);
void mtoc_config_free(mtoc_config* config);

/* ---- datasets -------------------------------------------------------- */

/* CSV schema: f0..f{d-1},task,split,label. split is train|test; label is
 * target|nontarget for test rows and empty or target for train rows. */
mtoc_status mtoc_dataset_load_csv(const char* path, mtoc_dataset** out);
mtoc_status mtoc_dataset_save_csv(const mtoc_dataset* dataset,
                                  const char* path);
/* The config's dataset: the CSV named by its `data` key if present, else a
 * synthetic multi-task draw from the synth_* keys using this seed. */
mtoc_status mtoc_dataset_from_config(const mtoc_config* config, uint64_t seed,
                                     mtoc_dataset** out);
/* Reshuffles train/test-target membership per task; negatives stay put. */
mtoc_status mtoc_dataset_resplit(const mtoc_dataset* dataset, uint64_t seed,
                                 mtoc_dataset** out);
mtoc_status mtoc_dataset_info(const mtoc_dataset* dataset, int* task_count,
                              int64_t* train_rows, int64_t* test_rows,
                              int* feature_dim);
void mtoc_dataset_free(mtoc_dataset* dataset);

/* ---- models ---------------------------------------------------------- */

/* variant: ocksr | c-ocksr | ocksr-l | ocksr-n | ocksr-ns */
mtoc_status mtoc_train(const mtoc_dataset* dataset, const mtoc_config* config,
                       const char* variant, mtoc_model** out);

typedef struct mtoc_model_stats {
  char variant[16];
  double sigma;           /* first-layer kernel width actually used */
  double theta;           /* similarity-layer width, 0 for linear variants */
  double train_sse;       /* fit term of the variant's objective */
  int iterations;
  int converged;
  int64_t train_rows;
  int task_count;
  uint64_t config_fingerprint;
} mtoc_model_stats;

mtoc_status mtoc_model_stats_get(const mtoc_model* model,
                                 mtoc_model_stats* out);

/* features: row-major rows x cols, cols must match the training dimension.
 * Responses come back row-major rows x task_count; scores are one
 * dissimilarity per row (lower = more target-like) for the row's task. */
mtoc_status mtoc_predict_responses(const mtoc_model* model,
                                   const double* features, int64_t rows,
                                   int cols, double* out_responses);
mtoc_status mtoc_predict_scores(const mtoc_model* model,
                                const double* features, int64_t rows,
                                int cols, const int* task_ids,
                                double* out_scores);

/* AUC of target-vs-nontarget separation on the dataset's test split, one
 * value per task plus the mean. per_task_auc must hold task_count values. */
mtoc_status mtoc_evaluate(const mtoc_model* model,
                          const mtoc_dataset* dataset, double* per_task_auc,
                          double* mean_auc);

/* Binary model file with format version, config fingerprint and CRC32. */
mtoc_status mtoc_model_save(const mtoc_model* model, const char* path);
mtoc_status mtoc_model_load(const char* path, mtoc_model** out);
mtoc_status mtoc_model_export_json(const mtoc_model* model, const char* path);
void mtoc_model_free(mtoc_model* model);

/* ---- experiment harness ---------------------------------------------- */

/* Trains every configured variant for `repetitions` repetitions on the
 * config's dataset. Deterministic for a fixed seed regardless of workers.
 * A non-NULL, non-empty model_dir saves each trained model there. */
mtoc_status mtoc_run_experiment(const mtoc_config* config, uint64_t seed,
                                int workers, const char* model_dir,
                                mtoc_results** out);

typedef struct mtoc_result_row {
  char variant[64];
  int task;
  int repetition;
  double auc; /* NaN when that repetition failed */
} mtoc_result_row;

mtoc_status mtoc_results_row_count(const mtoc_results* results,
                                   int64_t* out_count);
mtoc_status mtoc_results_row(const mtoc_results* results, int64_t index,
                             mtoc_result_row* out_row);
/* Mean AUC over all non-failed rows of one variant; NaN if there are none. */
mtoc_status mtoc_results_mean_auc(const mtoc_results* results,
                                  const char* variant, double* out_mean);
/* Exactly the columns variant,task,repetition,auc. */
mtoc_status mtoc_results_write_csv(const mtoc_results* results,
                                   const char* path);
mtoc_status mtoc_results_write_traces(const mtoc_results* results,
                                      const char* path);
void mtoc_results_free(mtoc_results* results);

/* Re-runs the experiment at each grid value of the first-layer
 * regularization weight (`gamma` for the two baselines, `gamma1` for the
 * structure-learning variants). The grid comes from the config's
 * sweep_gammas list, defaulting to 1e0..1e-6 decades. Writes the summary
 * (variant,gamma,auc,sse) to csv_path; detail_csv_path and traces_path are
 * optional (NULL to skip) and carry per-run rows tagged variant@gamma. */
mtoc_status mtoc_sweep(const mtoc_config* config, uint64_t seed, int workers,
                       const char* csv_path, const char* detail_csv_path,
                       const char* traces_path);

/* Pooled stratified cross-validation over the training split for every
 * configured variant; fold count from cv_folds (default 5), grid from
 * sweep_gammas. Writes variant,gamma,heldout_sse,selected to csv_path. */
mtoc_status mtoc_cv_select(const mtoc_config* config, uint64_t seed,
                           const char* csv_path);

/* ---- gradient checks -------------------------------------------------- */

/* target: linear-b | nonlinear-a | nonlinear-theta | sparse-a.
 * Compares analytic gradients against central finite differences on random
 * instances; sizes are drawn in n=[6,15], T=[2,4] unless pinned by the
 * _sized form (n, task_count > 0) which also sets the base step h. */
mtoc_status mtoc_gradient_check(const char* target, int instances,
                                uint64_t seed, double* out_max_rel_error,
                                double* out_mean_rel_error,
                                int* out_degenerate_redraws);
mtoc_status mtoc_gradient_check_sized(const char* target, int instances,
                                      int n, int task_count, uint64_t seed,
                                      double h, double* out_max_rel_error,
                                      double* out_mean_rel_error,
                                      int* out_degenerate_redraws);

#ifdef __cplusplus
}
#endif

#endif /* MTOC_H */
