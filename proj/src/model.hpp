#ifndef MTOC_MODEL_HPP
#define MTOC_MODEL_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"
#include "config.hpp"
#include "dataset.hpp"

namespace mtoc {

// A trained variant plus everything prediction needs: the training features
// (for cross kernels), per-task reference responses, and the fitted blocks.
struct TrainedModel {
  Variant variant = Variant::Ocksr;
  double sigma = 0.0;  // first-layer kernel width actually used
  double theta = 0.0;  // similarity-layer width (nonlinear variants)
  Matrix train_features;
  std::vector<int> task_ids;
  Matrix coeffs;        // first-layer coefficients A
  Matrix structure;     // structure matrix B where the variant has one
  Matrix train_y;       // K A on the training set (nonlinear variants)
  Vector target_means;  // per-task mean training response, scoring reference
  TrainingTrace trace;
  uint64_t config_fingerprint = 0;
  double train_sse = 0.0;  // fit term of the variant's own objective
};

TrainedModel train_variant(const DatasetBundle& data, const Config& config,
                           Variant variant);

// Per-task responses for held-out samples, one column per task.
Matrix predict_responses(const TrainedModel& model,
                         const Matrix& test_features);

// Dissimilarity score per row: distance of the row's own-task response from
// that task's training reference. Lower means more target-like.
Vector predict_scores(const TrainedModel& model, const Matrix& test_features,
                      const std::vector<int>& test_task_ids);

struct EvalResult {
  std::vector<double> per_task_auc;
  double mean_auc = 0.0;
};

EvalResult evaluate_model(const TrainedModel& model,
                          const DatasetBundle& data);

// Binary model file: magic, format version, variant tag, config fingerprint,
// widths, named float64 matrices, warnings, CRC32 trailer.
void save_model(const std::string& path, const TrainedModel& model);
TrainedModel load_model(const std::string& path);

// Human-readable JSON dump of a trained model, matrices as nested arrays.
void export_model_json(const std::string& path, const TrainedModel& model);

}  // namespace mtoc

#endif
