// Command-line front end for the multi-task one-class training library.
// Talks to the library exclusively through the C API in mtoc.h.

#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mtoc.h"

namespace {

constexpr double kGradCheckHardBound = 1e-4;

int exit_code_for(mtoc_status status) {
  switch (status) {
    case MTOC_OK:
      return 0;
    case MTOC_ERR_INVALID_ARGUMENT:
    case MTOC_ERR_PARSE:
    case MTOC_ERR_SCHEMA:
      return 1;
    case MTOC_ERR_NUMERICAL:
    case MTOC_ERR_TRAINING:
    case MTOC_ERR_EVALUATION:
    case MTOC_ERR_DEGENERATE_DATA:
    case MTOC_ERR_STATE:
    case MTOC_ERR_INTERNAL:
      return 2;
    case MTOC_ERR_IO:
    case MTOC_ERR_CORRUPT_MODEL:
    case MTOC_ERR_VERSION_MISMATCH:
      return 3;
  }
  return 2;
}

// Reports the failure and converts it to the documented exit code.
int fail_with(mtoc_status status) {
  std::fprintf(stderr, "error (%s): %s\n", mtoc_status_name(status),
               mtoc_last_error());
  return exit_code_for(status);
}

#define CHECK_STATUS(call)                    \
  do {                                        \
    const mtoc_status status_ = (call);       \
    if (status_ != MTOC_OK) {                 \
      return fail_with(status_);              \
    }                                         \
  } while (0)

struct ConfigHandle {
  mtoc_config* ptr = nullptr;
  ~ConfigHandle() { mtoc_config_free(ptr); }
};
struct DatasetHandle {
  mtoc_dataset* ptr = nullptr;
  ~DatasetHandle() { mtoc_dataset_free(ptr); }
};
struct ModelHandle {
  mtoc_model* ptr = nullptr;
  ~ModelHandle() { mtoc_model_free(ptr); }
};
struct ResultsHandle {
  mtoc_results* ptr = nullptr;
  ~ResultsHandle() { mtoc_results_free(ptr); }
};

int ensure_out_dir(const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    std::fprintf(stderr, "error (io): cannot create output directory '%s': %s\n",
                 out_dir.c_str(), ec.message().c_str());
    return 3;
  }
  return 0;
}

void print_variant_means(const mtoc_results* results) {
  int64_t count = 0;
  if (mtoc_results_row_count(results, &count) != MTOC_OK) return;
  std::vector<std::string> seen;
  for (int64_t i = 0; i < count; ++i) {
    mtoc_result_row row;
    if (mtoc_results_row(results, i, &row) != MTOC_OK) return;
    bool known = false;
    for (const auto& name : seen) {
      if (name == row.variant) {
        known = true;
        break;
      }
    }
    if (!known) seen.emplace_back(row.variant);
  }
  for (const auto& name : seen) {
    double mean = 0.0;
    if (mtoc_results_mean_auc(results, name.c_str(), &mean) != MTOC_OK) return;
    std::printf("%-10s mean AUC %.4f\n", name.c_str(), mean);
  }
}

int cmd_train(const std::string& config_path, uint64_t seed, int workers,
              const std::string& out_dir) {
  if (const int rc = ensure_out_dir(out_dir)) return rc;
  ConfigHandle config;
  CHECK_STATUS(mtoc_config_load(config_path.c_str(), &config.ptr));
  ResultsHandle results;
  CHECK_STATUS(mtoc_run_experiment(config.ptr, seed, workers, out_dir.c_str(),
                                   &results.ptr));
  const std::string csv = out_dir + "/results.csv";
  const std::string traces = out_dir + "/traces.json";
  CHECK_STATUS(mtoc_results_write_csv(results.ptr, csv.c_str()));
  CHECK_STATUS(mtoc_results_write_traces(results.ptr, traces.c_str()));
  print_variant_means(results.ptr);
  std::printf("wrote %s, %s and the trained models\n", csv.c_str(),
              traces.c_str());
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data_path,
             const std::string& out_dir) {
  if (const int rc = ensure_out_dir(out_dir)) return rc;
  ModelHandle model;
  CHECK_STATUS(mtoc_model_load(model_path.c_str(), &model.ptr));
  DatasetHandle data;
  CHECK_STATUS(mtoc_dataset_load_csv(data_path.c_str(), &data.ptr));

  mtoc_model_stats stats;
  CHECK_STATUS(mtoc_model_stats_get(model.ptr, &stats));
  std::vector<double> per_task(static_cast<size_t>(stats.task_count), 0.0);
  double mean = 0.0;
  CHECK_STATUS(mtoc_evaluate(model.ptr, data.ptr, per_task.data(), &mean));

  const std::string csv = out_dir + "/eval.csv";
  std::ofstream out(csv);
  if (!out) {
    std::fprintf(stderr, "error (io): cannot open '%s' for writing\n",
                 csv.c_str());
    return 3;
  }
  out << "variant,task,repetition,auc\n";
  for (size_t t = 0; t < per_task.size(); ++t) {
    char value[40];
    std::snprintf(value, sizeof(value), "%.17g", per_task[t]);
    out << stats.variant << "," << t << ",0," << value << "\n";
    std::printf("task %zu AUC %.4f\n", t, per_task[t]);
  }
  std::printf("%s mean AUC %.4f\n", stats.variant, mean);
  std::printf("wrote %s\n", csv.c_str());
  return 0;
}

int cmd_sweep(const std::string& config_path, uint64_t seed, int workers,
              const std::string& out_dir) {
  if (const int rc = ensure_out_dir(out_dir)) return rc;
  ConfigHandle config;
  CHECK_STATUS(mtoc_config_load(config_path.c_str(), &config.ptr));
  const std::string csv = out_dir + "/sweep.csv";
  const std::string detail = out_dir + "/sweep-results.csv";
  const std::string traces = out_dir + "/sweep-traces.json";
  CHECK_STATUS(mtoc_sweep(config.ptr, seed, workers, csv.c_str(),
                          detail.c_str(), traces.c_str()));
  std::printf("wrote %s, %s and %s\n", csv.c_str(), detail.c_str(),
              traces.c_str());
  int folds = 0;
  CHECK_STATUS(mtoc_config_get_int(config.ptr, "cv_folds", 0, &folds));
  if (folds > 0) {
    const std::string cv = out_dir + "/cv.csv";
    CHECK_STATUS(mtoc_cv_select(config.ptr, seed, cv.c_str()));
    std::printf("wrote %s\n", cv.c_str());
  }
  return 0;
}

int cmd_synth(const std::string& config_path, uint64_t seed,
              const std::string& out_dir) {
  if (const int rc = ensure_out_dir(out_dir)) return rc;
  ConfigHandle config;
  CHECK_STATUS(mtoc_config_load(config_path.c_str(), &config.ptr));
  DatasetHandle data;
  CHECK_STATUS(mtoc_dataset_from_config(config.ptr, seed, &data.ptr));
  const std::string csv = out_dir + "/synth.csv";
  CHECK_STATUS(mtoc_dataset_save_csv(data.ptr, csv.c_str()));
  int tasks = 0;
  int64_t train_rows = 0;
  int64_t test_rows = 0;
  int dim = 0;
  CHECK_STATUS(
      mtoc_dataset_info(data.ptr, &tasks, &train_rows, &test_rows, &dim));
  std::printf("wrote %s: %d tasks, %" PRId64 " train rows, %" PRId64
              " test rows, %d features\n",
              csv.c_str(), tasks, train_rows, test_rows, dim);
  return 0;
}

int cmd_gradcheck(const std::string& target, int instances, int n, int tasks,
                  double h, uint64_t seed) {
  std::vector<std::string> targets;
  if (target == "all") {
    targets = {"linear-b", "nonlinear-a", "nonlinear-theta", "sparse-a"};
  } else {
    targets = {target};
  }
  bool ok = true;
  for (const auto& name : targets) {
    double max_rel = 0.0;
    double mean_rel = 0.0;
    int redraws = 0;
    const mtoc_status status =
        (n > 0 || tasks > 0)
            ? mtoc_gradient_check_sized(name.c_str(), instances, n, tasks,
                                        seed, h, &max_rel, &mean_rel,
                                        &redraws)
            : mtoc_gradient_check(name.c_str(), instances, seed, &max_rel,
                                  &mean_rel, &redraws);
    if (status != MTOC_OK) return fail_with(status);
    const bool pass = max_rel < kGradCheckHardBound;
    if (redraws > 0) {
      std::printf("note: %s skipped %d degenerate instance(s)\n", name.c_str(),
                  redraws);
    }
    std::printf("%-15s instances=%d max_rel=%.3e mean_rel=%.3e %s\n",
                name.c_str(), instances, max_rel, mean_rel,
                pass ? "ok" : "FAIL");
    ok = ok && pass;
  }
  if (!ok) {
    std::fprintf(stderr,
                 "error (numerical): gradient check exceeded %.0e\n",
                 kGradCheckHardBound);
    return 2;
  }
  return 0;
}

int cmd_export(const std::string& model_path, const std::string& out_path) {
  ModelHandle model;
  CHECK_STATUS(mtoc_model_load(model_path.c_str(), &model.ptr));
  CHECK_STATUS(mtoc_model_export_json(model.ptr, out_path.c_str()));
  std::printf("wrote %s\n", out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Multi-task one-class kernel regression: train, evaluate and inspect "
      "single-task, joint and structure-learning variants."};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  std::string config_path;
  std::string model_path;
  std::string data_path;
  std::string out_dir = ".";
  std::string out_path;
  std::string target = "all";
  uint64_t seed = 42;
  int workers = 1;
  int instances = 20;
  int size_n = 0;
  int size_t_tasks = 0;
  double fd_step = 1e-5;

  CLI::App* train = app.add_subcommand(
      "train", "Train every configured variant and write models + results");
  train->add_option("--config", config_path, "config file")->required();
  train->add_option("--seed", seed, "base RNG seed");
  train->add_option("--workers", workers, "concurrent training jobs");
  train->add_option("--out-dir", out_dir, "output directory");

  CLI::App* eval = app.add_subcommand(
      "eval", "Evaluate a saved model on a dataset's test split");
  eval->add_option("--model", model_path, "model file")->required();
  eval->add_option("--data", data_path, "dataset CSV")->required();
  eval->add_option("--out-dir", out_dir, "output directory");

  CLI::App* sweep = app.add_subcommand(
      "sweep", "Sweep the first-layer regularization weight over a grid");
  sweep->add_option("--config", config_path, "config file")->required();
  sweep->add_option("--seed", seed, "base RNG seed");
  sweep->add_option("--workers", workers, "concurrent training jobs");
  sweep->add_option("--out-dir", out_dir, "output directory");

  CLI::App* synth = app.add_subcommand(
      "synth", "Generate the config's dataset and save it as CSV");
  synth->add_option("--config", config_path, "config file")->required();
  synth->add_option("--seed", seed, "RNG seed");
  synth->add_option("--out-dir", out_dir, "output directory");

  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "Compare analytic gradients with finite differences");
  gradcheck->add_option("--target", target,
                        "linear-b | nonlinear-a | nonlinear-theta | sparse-a "
                        "| all");
  gradcheck->add_option("--instances", instances, "instances per target");
  gradcheck->add_option("--n", size_n, "fixed sample count (0 = random)");
  gradcheck->add_option("--tasks", size_t_tasks,
                        "fixed task count (0 = random)");
  gradcheck->add_option("--step", fd_step, "finite-difference base step");
  gradcheck->add_option("--seed", seed, "base RNG seed");

  CLI::App* export_cmd =
      app.add_subcommand("export", "Dump a saved model as JSON");
  export_cmd->add_option("--model", model_path, "model file")->required();
  export_cmd->add_option("--out", out_path, "output JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;  // bad usage is a validation failure
  }

  if (train->parsed()) return cmd_train(config_path, seed, workers, out_dir);
  if (eval->parsed()) return cmd_eval(model_path, data_path, out_dir);
  if (sweep->parsed()) return cmd_sweep(config_path, seed, workers, out_dir);
  if (synth->parsed()) return cmd_synth(config_path, seed, out_dir);
  if (gradcheck->parsed()) {
    if ((size_n > 0) != (size_t_tasks > 0)) {
      std::fprintf(stderr,
                   "error (invalid-argument): --n and --tasks go together\n");
      return 1;
    }
    return cmd_gradcheck(target, instances, size_n, size_t_tasks, fd_step,
                         seed);
  }
  if (export_cmd->parsed()) return cmd_export(model_path, out_path);
  return 1;
}
