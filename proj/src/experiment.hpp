#ifndef MTOC_EXPERIMENT_HPP
#define MTOC_EXPERIMENT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "config.hpp"
#include "dataset.hpp"

namespace mtoc {

struct ResultRow {
  std::string variant;
  int task = 0;
  int repetition = 0;
  double auc = 0.0;  // NaN when the repetition failed
};

// Per (variant, repetition) run record backing the JSON trace sidecar.
struct RunRecord {
  std::string variant;
  int repetition = 0;
  bool failed = false;
  std::string error;
  double sigma = 0.0;
  double theta = 0.0;
  double train_sse = 0.0;
  double mean_auc = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective;
  std::vector<std::string> warnings;
  // Structure-matrix sparsity, filled for the sparse variant only.
  double nonzero_fraction = -1.0;
  std::vector<int> zero_columns;
};

struct ResultTable {
  std::vector<ResultRow> rows;
  std::vector<RunRecord> runs;
};

// Exactly the columns variant,task,repetition,auc.
void write_results_csv(const std::string& path, const ResultTable& table);
void write_traces_json(const std::string& path, const ResultTable& table);

// Mean AUC over all non-failed rows of one variant; NaN if none.
double mean_auc(const ResultTable& table, const std::string& variant);

// Trains every requested variant for `repetitions` repetitions. Data comes
// from the config: a CSV path under `data`, else a generated task set from
// the synth_* keys. Repetition r reshuffles the CSV split (or regenerates
// the synthetic data) with seed + r; repetition 0 uses the base seed/split.
// Failed repetitions keep their rows with auc = NaN and carry the error in
// the run record. `workers` > 1 trains runs concurrently with identical
// results. A non-empty `model_dir` saves each trained model there as
// model-<variant>-rep<k>.mtoc.
ResultTable run_experiment(const Config& config, uint64_t seed, int workers,
                           const std::string& model_dir = "");

struct SweepRow {
  std::string variant;
  double gamma = 0.0;
  double auc = 0.0;  // mean over tasks and successful repetitions
  double sse = 0.0;  // mean training SSE over successful repetitions
};

struct SweepResult {
  std::vector<SweepRow> rows;
  // Per-point detail; the variant field is suffixed "@<gamma>".
  ResultTable detail;
};

// Re-runs the experiment at each grid value of the first-layer
// regularization weight (`gamma` for the baselines, `gamma1` otherwise).
SweepResult sweep_regularization(const Config& config,
                                 const std::vector<double>& grid,
                                 uint64_t seed, int workers);

void write_sweep_csv(const std::string& path,
                     const std::vector<SweepRow>& rows);

std::vector<double> default_sweep_grid();

struct CvPoint {
  double gamma = 0.0;
  double heldout_sse = 0.0;  // mean per-row held-out squared error
};

struct CvSelection {
  std::string variant;
  double best_gamma = 0.0;
  std::vector<CvPoint> curve;
};

// Picks the first-layer regularization weight by pooled stratified
// cross-validation on the training split: every task contributes a
// proportional share of rows to each fold, folds are scored by the squared
// error of held-out responses against their one-hot targets, and the grid
// value with the smallest mean error wins (first grid entry on ties).
CvSelection cv_select_gamma(const Config& config, Variant variant,
                            const DatasetBundle& data,
                            const std::vector<double>& grid, int folds,
                            uint64_t seed);

// The experiment's repetition-0 dataset: the CSV named by `data`, else a
// synthetic task set drawn from the synth_* keys with this seed.
DatasetBundle dataset_from_config(const Config& config, uint64_t seed);

// cv_select_gamma for every configured variant, with the fold count from
// `cv_folds` (default 5) and the grid from `sweep_gammas` (default grid).
std::vector<CvSelection> run_cv_selection(const Config& config,
                                          uint64_t seed);

// Columns variant,gamma,heldout_sse,selected; selected marks the winner.
void write_cv_csv(const std::string& path,
                  const std::vector<CvSelection>& selections);

}  // namespace mtoc

#endif
