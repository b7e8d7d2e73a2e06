#ifndef MTOC_DATASET_HPP
#define MTOC_DATASET_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"

namespace mtoc {

// One multi-task one-class problem: training rows are target samples only,
// test rows carry a target/non-target label per task. Rows are kept grouped
// by task id in ascending order.
struct DatasetBundle {
  Matrix train_features;
  std::vector<int> train_task_ids;
  Matrix test_features;
  std::vector<int> test_task_ids;
  std::vector<uint8_t> test_is_target;
  int task_count = 0;
  std::string source;
  uint64_t seed = 0;
  // Row i of the stored split came from position train_permutation[i] in the
  // original file order (identity for generated data).
  std::vector<Index> train_permutation;
  std::vector<Index> test_permutation;
};

// Columns: f0..f{d-1}, task, split (train|test), label (target|nontarget;
// required for test rows, empty or "target" for train rows). Rows are
// regrouped by task with the original within-task order preserved.
DatasetBundle load_csv(const std::string& path);

void save_csv(const std::string& path, const DatasetBundle& bundle);

// Gaussian task clusters: each task mean blends a shared mean with its own,
// so `relatedness` in [0, 1] controls how much structure tasks share.
// Non-target test samples mix sibling-task draws with broad background noise.
struct SynthSpec {
  int tasks = 5;
  int per_task = 10;  // training targets per task
  int dim = 8;
  double relatedness = 0.8;
  int test_pos_per_task = 15;
  int test_neg_per_task = 35;
  int unrelated_tasks = 0;  // trailing tasks generated with relatedness 0
  double mean_scale = 3.0;  // stddev of the task-mean draw
  double noise = 1.0;       // stddev of samples around their task mean
};

DatasetBundle synth_tasks(const SynthSpec& spec, uint64_t seed);

// New train/test split for repetitions: within each task the training rows
// and test target rows are pooled and reshuffled keeping the original
// counts; non-target test rows are left untouched.
DatasetBundle resplit(const DatasetBundle& base, uint64_t seed);

}  // namespace mtoc

#endif
