#include "experiment.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "model.hpp"
#include "rng.hpp"
#include "sparse_mtl.hpp"

namespace mtoc {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<Variant> variants_from(const Config& config) {
  std::vector<Variant> variants;
  if (config.has("variants")) {
    for (const auto& name : config.get_string_list("variants")) {
      variants.push_back(parse_variant(name));
    }
  } else if (config.has("variant")) {
    variants.push_back(parse_variant(config.get_string("variant")));
  } else {
    variants = {Variant::Ocksr, Variant::COcksr, Variant::OcksrL,
                Variant::OcksrN, Variant::OcksrNs};
  }
  return variants;
}

SynthSpec synth_spec_from(const Config& config) {
  SynthSpec spec;
  spec.tasks = config.get_int("synth_tasks", spec.tasks);
  spec.per_task = config.get_int("synth_per_task", spec.per_task);
  spec.dim = config.get_int("synth_dim", spec.dim);
  spec.relatedness = config.get_double("synth_relatedness", spec.relatedness);
  spec.test_pos_per_task = config.get_int("synth_test_pos",
                                          spec.test_pos_per_task);
  spec.test_neg_per_task = config.get_int("synth_test_neg",
                                          spec.test_neg_per_task);
  spec.unrelated_tasks = config.get_int("synth_unrelated",
                                        spec.unrelated_tasks);
  spec.mean_scale = config.get_double("synth_mean_scale", spec.mean_scale);
  spec.noise = config.get_double("synth_noise", spec.noise);
  return spec;
}

}  // namespace

void write_results_csv(const std::string& path, const ResultTable& table) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << "variant,task,repetition,auc\n";
  for (const auto& row : table.rows) {
    out << row.variant << "," << row.task << "," << row.repetition << ","
        << format_value(row.auc) << "\n";
  }
  if (!out) fail(ErrorCode::Io, "write to '" + path + "' failed");
}

void write_traces_json(const std::string& path, const ResultTable& table) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& run : table.runs) {
    nlohmann::json entry = {
        {"variant", run.variant},
        {"repetition", run.repetition},
        {"failed", run.failed},
        {"sigma", run.sigma},
        {"theta", run.theta},
        {"train_sse", run.train_sse},
        {"mean_auc", run.mean_auc},
        {"iterations", run.iterations},
        {"converged", run.converged},
        {"objective", run.objective},
        {"warnings", run.warnings},
    };
    if (run.failed) entry["error"] = run.error;
    if (run.nonzero_fraction >= 0.0) {
      entry["nonzero_fraction"] = run.nonzero_fraction;
      entry["zero_columns"] = run.zero_columns;
    }
    runs.push_back(std::move(entry));
  }
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << runs.dump(2) << "\n";
  if (!out) fail(ErrorCode::Io, "write to '" + path + "' failed");
}

double mean_auc(const ResultTable& table, const std::string& variant) {
  double total = 0.0;
  size_t count = 0;
  for (const auto& row : table.rows) {
    if (row.variant != variant || std::isnan(row.auc)) continue;
    total += row.auc;
    ++count;
  }
  return count > 0 ? total / static_cast<double>(count) : kNan;
}

ResultTable run_experiment(const Config& config, uint64_t seed, int workers,
                           const std::string& model_dir) {
  config.validate_keys();
  const std::vector<Variant> variants = variants_from(config);
  const int repetitions = config.get_int("repetitions", 1);
  if (repetitions < 1) {
    fail(ErrorCode::InvalidArgument, "repetitions must be at least 1");
  }
  if (workers < 1) {
    fail(ErrorCode::InvalidArgument, "workers must be at least 1");
  }

  // Materialize every repetition's data up front so generation order (and
  // thus every random draw) is independent of scheduling.
  std::vector<DatasetBundle> datasets;
  datasets.reserve(static_cast<size_t>(repetitions));
  datasets.push_back(dataset_from_config(config, seed));
  if (config.has("data")) {
    for (int r = 1; r < repetitions; ++r) {
      datasets.push_back(
          resplit(datasets.front(), seed + static_cast<uint64_t>(r)));
    }
  } else {
    const SynthSpec spec = synth_spec_from(config);
    for (int r = 1; r < repetitions; ++r) {
      datasets.push_back(
          synth_tasks(spec, seed + static_cast<uint64_t>(r)));
    }
  }
  const int task_count = datasets.front().task_count;

  struct Job {
    size_t variant_index;
    int repetition;
  };
  std::vector<Job> jobs;
  for (size_t v = 0; v < variants.size(); ++v) {
    for (int r = 0; r < repetitions; ++r) jobs.push_back({v, r});
  }

  std::vector<RunRecord> records(jobs.size());
  std::vector<std::vector<double>> per_task_auc(jobs.size());

  auto run_job = [&](size_t index) {
    const Job& job = jobs[index];
    const Variant variant = variants[job.variant_index];
    const DatasetBundle& data = datasets[static_cast<size_t>(job.repetition)];
    RunRecord record;
    record.variant = variant_name(variant);
    record.repetition = job.repetition;
    try {
      const TrainedModel model = train_variant(data, config, variant);
      const EvalResult eval = evaluate_model(model, data);
      record.sigma = model.sigma;
      record.theta = model.theta;
      record.train_sse = model.train_sse;
      record.mean_auc = eval.mean_auc;
      record.iterations = model.trace.iterations;
      record.converged = model.trace.converged;
      record.objective = model.trace.objective;
      record.warnings = model.trace.warnings;
      if (variant == Variant::OcksrNs) {
        const SparsityReport report = sparsity_report(model.structure);
        record.nonzero_fraction = report.nonzero_fraction;
        record.zero_columns = report.zero_columns;
      }
      if (!model_dir.empty()) {
        std::ostringstream name;
        name << model_dir << "/model-" << record.variant << "-rep"
             << job.repetition << ".mtoc";
        save_model(name.str(), model);
      }
      per_task_auc[index] = eval.per_task_auc;
    } catch (const Error& e) {
      record.failed = true;
      record.error = std::string(error_code_name(e.code())) + ": " + e.what();
      record.mean_auc = kNan;
      per_task_auc[index].assign(static_cast<size_t>(task_count), kNan);
    }
    records[index] = std::move(record);
  };

  if (workers == 1 || jobs.size() == 1) {
    for (size_t i = 0; i < jobs.size(); ++i) run_job(i);
  } else {
    std::atomic<size_t> next{0};
    const size_t thread_count =
        std::min(static_cast<size_t>(workers), jobs.size());
    std::vector<std::thread> pool;
    pool.reserve(thread_count);
    for (size_t t = 0; t < thread_count; ++t) {
      pool.emplace_back([&]() {
        while (true) {
          const size_t index = next.fetch_add(1);
          if (index >= jobs.size()) return;
          run_job(index);
        }
      });
    }
    for (auto& thread : pool) thread.join();
  }

  ResultTable table;
  for (size_t i = 0; i < jobs.size(); ++i) {
    const Job& job = jobs[i];
    for (int t = 0; t < task_count; ++t) {
      table.rows.push_back({records[i].variant, t, job.repetition,
                            per_task_auc[i][static_cast<size_t>(t)]});
    }
    table.runs.push_back(std::move(records[i]));
  }
  return table;
}

std::vector<double> default_sweep_grid() {
  return {1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6};
}

SweepResult sweep_regularization(const Config& config,
                                 const std::vector<double>& grid,
                                 uint64_t seed, int workers) {
  if (grid.empty()) {
    fail(ErrorCode::InvalidArgument, "sweep grid must not be empty");
  }
  const std::vector<Variant> variants = variants_from(config);

  SweepResult result;
  for (const Variant variant : variants) {
    const bool baseline =
        variant == Variant::Ocksr || variant == Variant::COcksr;
    const std::string key = baseline ? "gamma" : "gamma1";
    for (const double gamma : grid) {
      Config point = config;
      point.set("variants", variant_name(variant));
      point.set(key, format_value(gamma));
      const ResultTable table = run_experiment(point, seed, workers);

      SweepRow row;
      row.variant = variant_name(variant);
      row.gamma = gamma;
      row.auc = mean_auc(table, row.variant);
      double sse_total = 0.0;
      size_t sse_count = 0;
      const std::string tag =
          row.variant + "@" + format_value(gamma);
      for (const auto& run : table.runs) {
        if (!run.failed) {
          sse_total += run.train_sse;
          ++sse_count;
        }
        RunRecord detail_run = run;
        detail_run.variant = tag;
        result.detail.runs.push_back(std::move(detail_run));
      }
      for (const auto& table_row : table.rows) {
        ResultRow detail_row = table_row;
        detail_row.variant = tag;
        result.detail.rows.push_back(std::move(detail_row));
      }
      row.sse = sse_count > 0
                    ? sse_total / static_cast<double>(sse_count)
                    : kNan;
      result.rows.push_back(std::move(row));
    }
  }
  return result;
}

void write_sweep_csv(const std::string& path,
                     const std::vector<SweepRow>& rows) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << "variant,gamma,auc,sse\n";
  for (const auto& row : rows) {
    out << row.variant << "," << format_value(row.gamma) << ","
        << format_value(row.auc) << "," << format_value(row.sse) << "\n";
  }
  if (!out) fail(ErrorCode::Io, "write to '" + path + "' failed");
}

CvSelection cv_select_gamma(const Config& config, Variant variant,
                            const DatasetBundle& data,
                            const std::vector<double>& grid, int folds,
                            uint64_t seed) {
  if (folds < 2) {
    fail(ErrorCode::InvalidArgument, "cross-validation needs >= 2 folds");
  }
  if (grid.empty()) {
    fail(ErrorCode::InvalidArgument, "cross-validation grid must not be empty");
  }
  const Index n = data.train_features.rows();
  const int task_count = data.task_count;

  // Pooled stratified folds: shuffle each task's rows once, then deal them
  // round-robin so every fold sees a proportional share of every task.
  std::vector<std::vector<Index>> by_task(static_cast<size_t>(task_count));
  for (Index i = 0; i < n; ++i) {
    by_task[static_cast<size_t>(data.train_task_ids[static_cast<size_t>(i)])]
        .push_back(i);
  }
  Rng rng(seed);
  std::vector<int> fold_of(static_cast<size_t>(n), 0);
  for (auto& rows : by_task) {
    if (rows.size() < 2) {
      fail(ErrorCode::InvalidArgument,
           "every task needs at least 2 training rows for cross-validation");
    }
    for (size_t i = rows.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(
          rng.uniform_int(0, static_cast<int>(i) - 1));
      std::swap(rows[i - 1], rows[j]);
    }
    for (size_t pos = 0; pos < rows.size(); ++pos) {
      fold_of[static_cast<size_t>(rows[pos])] =
          static_cast<int>(pos % static_cast<size_t>(folds));
    }
  }

  const bool baseline =
      variant == Variant::Ocksr || variant == Variant::COcksr;
  const std::string key = baseline ? "gamma" : "gamma1";

  CvSelection selection;
  selection.variant = variant_name(variant);
  for (const double gamma : grid) {
    Config point = config;
    point.set(key, format_value(gamma));
    double sse_total = 0.0;
    Index held_total = 0;
    for (int f = 0; f < folds; ++f) {
      std::vector<Index> held;
      std::vector<Index> kept;
      for (Index i = 0; i < n; ++i) {
        (fold_of[static_cast<size_t>(i)] == f ? held : kept).push_back(i);
      }
      if (held.empty()) continue;

      DatasetBundle fold;
      fold.task_count = task_count;
      fold.source = data.source + "#cv";
      fold.train_features.resize(static_cast<Index>(kept.size()),
                                 data.train_features.cols());
      for (size_t i = 0; i < kept.size(); ++i) {
        fold.train_features.row(static_cast<Index>(i)) =
            data.train_features.row(kept[i]);
        fold.train_task_ids.push_back(
            data.train_task_ids[static_cast<size_t>(kept[i])]);
      }

      const TrainedModel model = train_variant(fold, point, variant);
      Matrix held_features(static_cast<Index>(held.size()),
                           data.train_features.cols());
      for (size_t i = 0; i < held.size(); ++i) {
        held_features.row(static_cast<Index>(i)) =
            data.train_features.row(held[i]);
      }
      const Matrix responses = predict_responses(model, held_features);
      for (size_t i = 0; i < held.size(); ++i) {
        const int task = data.train_task_ids[static_cast<size_t>(held[i])];
        Vector target = Vector::Zero(task_count);
        target(task) = 1.0;
        sse_total +=
            (responses.row(static_cast<Index>(i)).transpose() - target)
                .squaredNorm();
      }
      held_total += static_cast<Index>(held.size());
    }
    selection.curve.push_back(
        {gamma, sse_total / static_cast<double>(held_total)});
  }

  selection.best_gamma = selection.curve.front().gamma;
  double best = selection.curve.front().heldout_sse;
  for (const auto& point : selection.curve) {
    if (point.heldout_sse < best) {
      best = point.heldout_sse;
      selection.best_gamma = point.gamma;
    }
  }
  return selection;
}

DatasetBundle dataset_from_config(const Config& config, uint64_t seed) {
  if (config.has("data")) return load_csv(config.get_string("data"));
  return synth_tasks(synth_spec_from(config), seed);
}

std::vector<CvSelection> run_cv_selection(const Config& config,
                                          uint64_t seed) {
  config.validate_keys();
  const int folds = config.get_int("cv_folds", 5);
  std::vector<double> grid;
  if (config.has("sweep_gammas")) {
    grid = config.get_double_list("sweep_gammas");
  } else {
    grid = default_sweep_grid();
  }
  const DatasetBundle data = dataset_from_config(config, seed);
  std::vector<CvSelection> selections;
  for (const Variant variant : variants_from(config)) {
    selections.push_back(
        cv_select_gamma(config, variant, data, grid, folds, seed));
  }
  return selections;
}

void write_cv_csv(const std::string& path,
                  const std::vector<CvSelection>& selections) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << "variant,gamma,heldout_sse,selected\n";
  for (const auto& selection : selections) {
    for (const auto& point : selection.curve) {
      out << selection.variant << "," << format_value(point.gamma) << ","
          << format_value(point.heldout_sse) << ","
          << (point.gamma == selection.best_gamma ? 1 : 0) << "\n";
    }
  }
  if (!out) fail(ErrorCode::Io, "write to '" + path + "' failed");
}

}  // namespace mtoc
