#include "mtoc.h"

#include <cstring>
#include <string>
#include <utility>

#include "config.hpp"
#include "dataset.hpp"
#include "errors.hpp"
#include "experiment.hpp"
#include "gradcheck.hpp"
#include "model.hpp"

struct mtoc_config {
  mtoc::Config impl;
};
struct mtoc_dataset {
  mtoc::DatasetBundle impl;
};
struct mtoc_model {
  mtoc::TrainedModel impl;
};
struct mtoc_results {
  mtoc::ResultTable impl;
};

namespace {

thread_local std::string g_last_error;

mtoc_status to_status(mtoc::ErrorCode code) {
  switch (code) {
    case mtoc::ErrorCode::InvalidArgument: return MTOC_ERR_INVALID_ARGUMENT;
    case mtoc::ErrorCode::Parse: return MTOC_ERR_PARSE;
    case mtoc::ErrorCode::Schema: return MTOC_ERR_SCHEMA;
    case mtoc::ErrorCode::Numerical: return MTOC_ERR_NUMERICAL;
    case mtoc::ErrorCode::Training: return MTOC_ERR_TRAINING;
    case mtoc::ErrorCode::Evaluation: return MTOC_ERR_EVALUATION;
    case mtoc::ErrorCode::DegenerateData: return MTOC_ERR_DEGENERATE_DATA;
    case mtoc::ErrorCode::State: return MTOC_ERR_STATE;
    case mtoc::ErrorCode::Io: return MTOC_ERR_IO;
    case mtoc::ErrorCode::CorruptModel: return MTOC_ERR_CORRUPT_MODEL;
    case mtoc::ErrorCode::VersionMismatch: return MTOC_ERR_VERSION_MISMATCH;
  }
  return MTOC_ERR_INTERNAL;
}

template <typename Fn>
mtoc_status wrap(Fn&& fn) noexcept {
  try {
    fn();
    g_last_error.clear();
    return MTOC_OK;
  } catch (const mtoc::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MTOC_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return MTOC_ERR_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) mtoc::fail(mtoc::ErrorCode::InvalidArgument, what);
}

void copy_name(const char* name, char* buf, size_t buflen) {
  const size_t len = std::strlen(name);
  require(len + 1 <= buflen, "name buffer too small");
  std::memcpy(buf, name, len + 1);
}

std::vector<double> sweep_grid_from(const mtoc::Config& config) {
  if (config.has("sweep_gammas")) {
    return config.get_double_list("sweep_gammas");
  }
  return mtoc::default_sweep_grid();
}

}  // namespace

extern "C" {

const char* mtoc_version(void) { return "1.0.0"; }

const char* mtoc_status_name(mtoc_status status) {
  switch (status) {
    case MTOC_OK: return "ok";
    case MTOC_ERR_INVALID_ARGUMENT: return "invalid-argument";
    case MTOC_ERR_PARSE: return "parse";
    case MTOC_ERR_SCHEMA: return "schema";
    case MTOC_ERR_NUMERICAL: return "numerical";
    case MTOC_ERR_TRAINING: return "training";
    case MTOC_ERR_EVALUATION: return "evaluation";
    case MTOC_ERR_DEGENERATE_DATA: return "degenerate-data";
    case MTOC_ERR_STATE: return "state";
    case MTOC_ERR_IO: return "io";
    case MTOC_ERR_CORRUPT_MODEL: return "corrupt-model";
    case MTOC_ERR_VERSION_MISMATCH: return "version-mismatch";
    case MTOC_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* mtoc_last_error(void) { return g_last_error.c_str(); }

/* ---- configuration -------------------------------------------------- */

mtoc_status mtoc_config_create(mtoc_config** out) {
  return wrap([&] {
    require(out != nullptr, "out must not be NULL");
    *out = new mtoc_config{};
  });
}

mtoc_status mtoc_config_load(const char* path, mtoc_config** out) {
  return wrap([&] {
    require(path != nullptr && out != nullptr,
            "path and out must not be NULL");
    auto* handle = new mtoc_config{};
    try {
      handle->impl = mtoc::Config::from_file(path);
    } catch (...) {
      delete handle;
      throw;
    }
    *out = handle;
  });
}

mtoc_status mtoc_config_parse(const char* text, mtoc_config** out) {
  return wrap([&] {
    require(text != nullptr && out != nullptr,
            "text and out must not be NULL");
    auto* handle = new mtoc_config{};
    try {
      handle->impl = mtoc::Config::from_string(text, "<string>");
    } catch (...) {
      delete handle;
      throw;
    }
    *out = handle;
  });
}

mtoc_status mtoc_config_set(mtoc_config* config, const char* key,
                            const char* value) {
  return wrap([&] {
    require(config != nullptr && key != nullptr && value != nullptr,
            "config, key and value must not be NULL");
    config->impl.set(key, value);
  });
}

mtoc_status mtoc_config_get(const mtoc_config* config, const char* key,
                            char* buf, size_t buflen) {
  return wrap([&] {
    require(config != nullptr && key != nullptr && buf != nullptr,
            "config, key and buf must not be NULL");
    copy_name(config->impl.get_string(key).c_str(), buf, buflen);
  });
}

mtoc_status mtoc_config_has(const mtoc_config* config, const char* key,
                            int* out_present) {
  return wrap([&] {
    require(config != nullptr && key != nullptr && out_present != nullptr,
            "config, key and out must not be NULL");
    *out_present = config->impl.has(key) ? 1 : 0;
  });
}

mtoc_status mtoc_config_get_int(const mtoc_config* config, const char* key,
                                int fallback, int* out_value) {
  return wrap([&] {
    require(config != nullptr && key != nullptr && out_value != nullptr,
            "config, key and out must not be NULL");
    *out_value = config->impl.get_int(key, fallback);
  });
}

mtoc_status mtoc_config_fingerprint(const mtoc_config* config,
                                    uint64_t* out_fingerprint) {
  return wrap([&] {
    require(config != nullptr && out_fingerprint != nullptr,
            "config and out must not be NULL");
    *out_fingerprint = config->impl.fingerprint();
  });
}

void mtoc_config_free(mtoc_config* config) { delete config; }

/* ---- datasets -------------------------------------------------------- */

mtoc_status mtoc_dataset_load_csv(const char* path, mtoc_dataset** out) {
  return wrap([&] {
    require(path != nullptr && out != nullptr,
            "path and out must not be NULL");
    auto* handle = new mtoc_dataset{};
    try {
      handle->impl = mtoc::load_csv(path);
    } catch (...) {
      delete handle;
      throw;
    }
    *out = handle;
  });
}

mtoc_status mtoc_dataset_save_csv(const mtoc_dataset* dataset,
                                  const char* path) {
  return wrap([&] {
    require(dataset != nullptr && path != nullptr,
            "dataset and path must not be NULL");
    mtoc::save_csv(path, dataset->impl);
  });
}

mtoc_status mtoc_dataset_from_config(const mtoc_config* config, uint64_t seed,
                                     mtoc_dataset** out) {
  return wrap([&] {
    require(config != nullptr && out != nullptr,
            "config and out must not be NULL");
    auto* handle = new mtoc_dataset{};
    try {
      handle->impl = mtoc::dataset_from_config(config->impl, seed);
    } catch (...) {
      delete handle;
      throw;
    }
    *out = handle;
  });
}

mtoc_status mtoc_dataset_resplit(const mtoc_dataset* dataset, uint64_t seed,
                                 mtoc_dataset** out) {
  return wrap([&] {
    require(dataset != nullptr && out != nullptr,
            "dataset and out must not be NULL");
    auto* handle = new mtoc_dataset{};
    try {
      handle->impl = mtoc::resplit(dataset->impl, seed);
    } catch (...) {
      delete handle;
      throw;
    }
    *out = handle;
  });
}

mtoc_status mtoc_dataset_info(const mtoc_dataset* dataset, int* task_count,
                              int64_t* train_rows, int64_t* test_rows,
                              int* feature_dim) {
  return wrap([&] {
    require(dataset != nullptr, "dataset must not be NULL");
    if (task_count != nullptr) *task_count = dataset->impl.task_count;
    if (train_rows != nullptr) {
      *train_rows = static_cast<int64_t>(dataset->impl.train_features.rows());
    }
    if (test_rows != nullptr) {
      *test_rows = static_cast<int64_t>(dataset->impl.test_features.rows());
    }
    if (feature_dim != nullptr) {
      *feature_dim = static_cast<int>(dataset->impl.train_features.cols());
    }
  });
}

void mtoc_dataset_free(mtoc_dataset* dataset) { delete dataset; }

/* ---- models ---------------------------------------------------------- */

mtoc_status mtoc_train(const mtoc_dataset* dataset, const mtoc_config* config,
                       const char* variant, mtoc_model** out) {
  return wrap([&] {
    require(dataset != nullptr && config != nullptr && variant != nullptr &&
                out != nullptr,
            "dataset, config, variant and out must not be NULL");
    auto* handle = new mtoc_model{};
    try {
      handle->impl = mtoc::train_variant(dataset->impl, config->impl,
                                         mtoc::parse_variant(variant));
    } catch (...) {
      delete handle;
      throw;
    }
    *out = handle;
  });
}

mtoc_status mtoc_model_stats_get(const mtoc_model* model,
                                 mtoc_model_stats* out) {
  return wrap([&] {
    require(model != nullptr && out != nullptr,
            "model and out must not be NULL");
    const mtoc::TrainedModel& m = model->impl;
    mtoc_model_stats stats{};
    copy_name(mtoc::variant_name(m.variant), stats.variant,
              sizeof(stats.variant));
    stats.sigma = m.sigma;
    stats.theta = m.theta;
    stats.train_sse = m.train_sse;
    stats.iterations = m.trace.iterations;
    stats.converged = m.trace.converged ? 1 : 0;
    stats.train_rows = static_cast<int64_t>(m.train_features.rows());
    stats.task_count = static_cast<int>(m.target_means.size());
    stats.config_fingerprint = m.config_fingerprint;
    *out = stats;
  });
}

mtoc_status mtoc_predict_responses(const mtoc_model* model,
                                   const double* features, int64_t rows,
                                   int cols, double* out_responses) {
  return wrap([&] {
    require(model != nullptr && features != nullptr &&
                out_responses != nullptr,
            "model, features and out must not be NULL");
    require(rows > 0 && cols > 0, "rows and cols must be positive");
    mtoc::Matrix x(rows, cols);
    for (int64_t i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) {
        x(i, j) = features[static_cast<size_t>(i) * cols + j];
      }
    }
    const mtoc::Matrix responses = mtoc::predict_responses(model->impl, x);
    for (mtoc::Index i = 0; i < responses.rows(); ++i) {
      for (mtoc::Index j = 0; j < responses.cols(); ++j) {
        out_responses[static_cast<size_t>(i) * responses.cols() + j] =
            responses(i, j);
      }
    }
  });
}

mtoc_status mtoc_predict_scores(const mtoc_model* model,
                                const double* features, int64_t rows,
                                int cols, const int* task_ids,
                                double* out_scores) {
  return wrap([&] {
    require(model != nullptr && features != nullptr && task_ids != nullptr &&
                out_scores != nullptr,
            "model, features, task_ids and out must not be NULL");
    require(rows > 0 && cols > 0, "rows and cols must be positive");
    mtoc::Matrix x(rows, cols);
    for (int64_t i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) {
        x(i, j) = features[static_cast<size_t>(i) * cols + j];
      }
    }
    const std::vector<int> ids(task_ids, task_ids + rows);
    const mtoc::Vector scores = mtoc::predict_scores(model->impl, x, ids);
    for (mtoc::Index i = 0; i < scores.size(); ++i) out_scores[i] = scores(i);
  });
}

mtoc_status mtoc_evaluate(const mtoc_model* model,
                          const mtoc_dataset* dataset, double* per_task_auc,
                          double* mean_auc) {
  return wrap([&] {
    require(model != nullptr && dataset != nullptr,
            "model and dataset must not be NULL");
    const mtoc::EvalResult eval =
        mtoc::evaluate_model(model->impl, dataset->impl);
    if (per_task_auc != nullptr) {
      for (size_t t = 0; t < eval.per_task_auc.size(); ++t) {
        per_task_auc[t] = eval.per_task_auc[t];
      }
    }
    if (mean_auc != nullptr) *mean_auc = eval.mean_auc;
  });
}

mtoc_status mtoc_model_save(const mtoc_model* model, const char* path) {
  return wrap([&] {
    require(model != nullptr && path != nullptr,
            "model and path must not be NULL");
    mtoc::save_model(path, model->impl);
  });
}

mtoc_status mtoc_model_load(const char* path, mtoc_model** out) {
  return wrap([&] {
    require(path != nullptr && out != nullptr,
            "path and out must not be NULL");
    auto* handle = new mtoc_model{};
    try {
      handle->impl = mtoc::load_model(path);
    } catch (...) {
      delete handle;
      throw;
    }
    *out = handle;
  });
}

mtoc_status mtoc_model_export_json(const mtoc_model* model,
                                   const char* path) {
  return wrap([&] {
    require(model != nullptr && path != nullptr,
            "model and path must not be NULL");
    mtoc::export_model_json(path, model->impl);
  });
}

void mtoc_model_free(mtoc_model* model) { delete model; }

/* ---- experiment harness ---------------------------------------------- */

mtoc_status mtoc_run_experiment(const mtoc_config* config, uint64_t seed,
                                int workers, const char* model_dir,
                                mtoc_results** out) {
  return wrap([&] {
    require(config != nullptr && out != nullptr,
            "config and out must not be NULL");
    const std::string dir = model_dir != nullptr ? model_dir : "";
    auto* handle = new mtoc_results{};
    try {
      handle->impl =
          mtoc::run_experiment(config->impl, seed, workers, dir);
    } catch (...) {
      delete handle;
      throw;
    }
    *out = handle;
  });
}

mtoc_status mtoc_results_row_count(const mtoc_results* results,
                                   int64_t* out_count) {
  return wrap([&] {
    require(results != nullptr && out_count != nullptr,
            "results and out must not be NULL");
    *out_count = static_cast<int64_t>(results->impl.rows.size());
  });
}

mtoc_status mtoc_results_row(const mtoc_results* results, int64_t index,
                             mtoc_result_row* out_row) {
  return wrap([&] {
    require(results != nullptr && out_row != nullptr,
            "results and out must not be NULL");
    require(index >= 0 &&
                index < static_cast<int64_t>(results->impl.rows.size()),
            "row index out of range");
    const mtoc::ResultRow& row =
        results->impl.rows[static_cast<size_t>(index)];
    mtoc_result_row c_row{};
    copy_name(row.variant.c_str(), c_row.variant, sizeof(c_row.variant));
    c_row.task = row.task;
    c_row.repetition = row.repetition;
    c_row.auc = row.auc;
    *out_row = c_row;
  });
}

mtoc_status mtoc_results_mean_auc(const mtoc_results* results,
                                  const char* variant, double* out_mean) {
  return wrap([&] {
    require(results != nullptr && variant != nullptr && out_mean != nullptr,
            "results, variant and out must not be NULL");
    *out_mean = mtoc::mean_auc(results->impl, variant);
  });
}

mtoc_status mtoc_results_write_csv(const mtoc_results* results,
                                   const char* path) {
  return wrap([&] {
    require(results != nullptr && path != nullptr,
            "results and path must not be NULL");
    mtoc::write_results_csv(path, results->impl);
  });
}

mtoc_status mtoc_results_write_traces(const mtoc_results* results,
                                      const char* path) {
  return wrap([&] {
    require(results != nullptr && path != nullptr,
            "results and path must not be NULL");
    mtoc::write_traces_json(path, results->impl);
  });
}

void mtoc_results_free(mtoc_results* results) { delete results; }

mtoc_status mtoc_sweep(const mtoc_config* config, uint64_t seed, int workers,
                       const char* csv_path, const char* detail_csv_path,
                       const char* traces_path) {
  return wrap([&] {
    require(config != nullptr && csv_path != nullptr,
            "config and csv_path must not be NULL");
    const mtoc::SweepResult sweep = mtoc::sweep_regularization(
        config->impl, sweep_grid_from(config->impl), seed, workers);
    mtoc::write_sweep_csv(csv_path, sweep.rows);
    if (detail_csv_path != nullptr) {
      mtoc::write_results_csv(detail_csv_path, sweep.detail);
    }
    if (traces_path != nullptr) {
      mtoc::write_traces_json(traces_path, sweep.detail);
    }
  });
}

mtoc_status mtoc_cv_select(const mtoc_config* config, uint64_t seed,
                           const char* csv_path) {
  return wrap([&] {
    require(config != nullptr && csv_path != nullptr,
            "config and csv_path must not be NULL");
    mtoc::write_cv_csv(csv_path, mtoc::run_cv_selection(config->impl, seed));
  });
}

/* ---- gradient checks -------------------------------------------------- */

mtoc_status mtoc_gradient_check(const char* target, int instances,
                                uint64_t seed, double* out_max_rel_error,
                                double* out_mean_rel_error,
                                int* out_degenerate_redraws) {
  return wrap([&] {
    require(target != nullptr, "target must not be NULL");
    const mtoc::GradCheckReport report = mtoc::gradient_check(
        mtoc::parse_gradcheck_target(target), instances, seed);
    if (out_max_rel_error != nullptr) {
      *out_max_rel_error = report.max_rel_error;
    }
    if (out_mean_rel_error != nullptr) {
      *out_mean_rel_error = report.mean_rel_error;
    }
    if (out_degenerate_redraws != nullptr) {
      *out_degenerate_redraws = report.degenerate_redraws;
    }
  });
}

mtoc_status mtoc_gradient_check_sized(const char* target, int instances,
                                      int n, int task_count, uint64_t seed,
                                      double h, double* out_max_rel_error,
                                      double* out_mean_rel_error,
                                      int* out_degenerate_redraws) {
  return wrap([&] {
    require(target != nullptr, "target must not be NULL");
    const mtoc::GradCheckReport report = mtoc::gradient_check_sized(
        mtoc::parse_gradcheck_target(target), instances, n, task_count, seed,
        h);
    if (out_max_rel_error != nullptr) {
      *out_max_rel_error = report.max_rel_error;
    }
    if (out_mean_rel_error != nullptr) {
      *out_mean_rel_error = report.mean_rel_error;
    }
    if (out_degenerate_redraws != nullptr) {
      *out_degenerate_redraws = report.degenerate_redraws;
    }
  });
}

}  // extern "C"
