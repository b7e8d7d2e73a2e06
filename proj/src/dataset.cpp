#include "dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "errors.hpp"
#include "rng.hpp"

namespace mtoc {

namespace {

[[noreturn]] void parse_fail(const std::string& path, size_t line,
                             const std::string& what) {
  std::ostringstream msg;
  msg << path << ":" << line << ": " << what;
  fail(ErrorCode::Parse, msg.str());
}

// Header problems are schema errors; malformed data rows are parse errors.
[[noreturn]] void schema_fail(const std::string& path,
                              const std::string& what) {
  fail(ErrorCode::Schema, path + ":1: " + what);
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

double parse_double(const std::string& path, size_t line,
                    const std::string& field, const std::string& column) {
  const char* begin = field.c_str();
  char* end = nullptr;
  const double value = std::strtod(begin, &end);
  if (end == begin || *end != '\0') {
    parse_fail(path, line, "cannot parse '" + field + "' in column " + column);
  }
  if (!std::isfinite(value)) {
    parse_fail(path, line, "non-finite value in column " + column);
  }
  return value;
}

long parse_task(const std::string& path, size_t line,
                const std::string& field) {
  const char* begin = field.c_str();
  char* end = nullptr;
  const long value = std::strtol(begin, &end, 10);
  if (end == begin || *end != '\0' || value < 0) {
    parse_fail(path, line,
               "task must be a nonnegative integer, got '" + field + "'");
  }
  return value;
}

struct RawRow {
  std::vector<double> features;
  int task = 0;
  bool train = false;
  bool target = false;
  size_t file_position = 0;  // position among rows of its split
};

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void validate_bundle(const DatasetBundle& b, const std::string& source) {
  std::vector<int> train_targets(static_cast<size_t>(b.task_count), 0);
  for (int id : b.train_task_ids) ++train_targets[static_cast<size_t>(id)];
  std::vector<int> test_target(static_cast<size_t>(b.task_count), 0);
  std::vector<int> test_nontarget(static_cast<size_t>(b.task_count), 0);
  for (size_t i = 0; i < b.test_task_ids.size(); ++i) {
    auto& counter = b.test_is_target[i] ? test_target : test_nontarget;
    ++counter[static_cast<size_t>(b.test_task_ids[i])];
  }
  for (int t = 0; t < b.task_count; ++t) {
    if (train_targets[static_cast<size_t>(t)] == 0) {
      fail(ErrorCode::Schema, source + ": task " + std::to_string(t) +
                                  " has no training rows");
    }
    if (test_target[static_cast<size_t>(t)] == 0 ||
        test_nontarget[static_cast<size_t>(t)] == 0) {
      fail(ErrorCode::Schema,
           source + ": task " + std::to_string(t) +
               " needs both target and nontarget test rows");
    }
  }
}

}  // namespace

DatasetBundle load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path + "' for reading");

  std::string line;
  size_t line_no = 0;
  if (!std::getline(in, line)) {
    fail(ErrorCode::Parse, path + ":1: empty file");
  }
  ++line_no;
  const auto header = split_fields(line);
  if (header.size() < 4) {
    schema_fail(path, "header needs f0..f{d-1},task,split,label columns");
  }
  const size_t dim = header.size() - 3;
  for (size_t i = 0; i < dim; ++i) {
    const std::string expect = "f" + std::to_string(i);
    if (header[i] != expect) {
      schema_fail(path, "expected column '" + expect + "', got '" +
                            header[i] + "'");
    }
  }
  if (header[dim] != "task" || header[dim + 1] != "split" ||
      header[dim + 2] != "label") {
    schema_fail(path, "trailing columns must be task,split,label");
  }

  std::vector<RawRow> rows;
  size_t train_seen = 0;
  size_t test_seen = 0;
  long max_task = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      std::ostringstream msg;
      msg << "expected " << header.size() << " fields, got " << fields.size();
      parse_fail(path, line_no, msg.str());
    }
    RawRow row;
    row.features.resize(dim);
    for (size_t i = 0; i < dim; ++i) {
      row.features[i] = parse_double(path, line_no, fields[i], header[i]);
    }
    const long task = parse_task(path, line_no, fields[dim]);
    max_task = std::max(max_task, task);
    row.task = static_cast<int>(task);
    const std::string& split = fields[dim + 1];
    if (split == "train") {
      row.train = true;
    } else if (split == "test") {
      row.train = false;
    } else {
      parse_fail(path, line_no,
                 "split must be 'train' or 'test', got '" + split + "'");
    }
    const std::string& label = fields[dim + 2];
    if (row.train) {
      if (!label.empty() && label != "target") {
        parse_fail(path, line_no,
                   "training rows are target-only; label must be empty or "
                   "'target', got '" + label + "'");
      }
      row.target = true;
      row.file_position = train_seen++;
    } else {
      if (label == "target") {
        row.target = true;
      } else if (label == "nontarget") {
        row.target = false;
      } else {
        parse_fail(path, line_no,
                   "test rows need label 'target' or 'nontarget', got '" +
                       label + "'");
      }
      row.file_position = test_seen++;
    }
    rows.push_back(std::move(row));
  }
  if (train_seen == 0) fail(ErrorCode::Schema, path + ": no training rows");
  if (test_seen == 0) fail(ErrorCode::Schema, path + ": no test rows");

  const int task_count = static_cast<int>(max_task + 1);
  std::vector<uint8_t> seen_task(static_cast<size_t>(task_count), 0);
  for (const auto& row : rows) seen_task[static_cast<size_t>(row.task)] = 1;
  for (int t = 0; t < task_count; ++t) {
    if (!seen_task[static_cast<size_t>(t)]) {
      fail(ErrorCode::Schema, path + ": task ids must be dense 0.." +
                                  std::to_string(task_count - 1) +
                                  "; missing " + std::to_string(t));
    }
  }

  // Group rows by task, preserving the within-task file order.
  std::vector<size_t> train_order;
  std::vector<size_t> test_order;
  for (int t = 0; t < task_count; ++t) {
    for (size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].task != t) continue;
      (rows[i].train ? train_order : test_order).push_back(i);
    }
  }

  DatasetBundle bundle;
  bundle.task_count = task_count;
  bundle.source = path;
  bundle.train_features.resize(static_cast<Index>(train_order.size()),
                               static_cast<Index>(dim));
  bundle.test_features.resize(static_cast<Index>(test_order.size()),
                              static_cast<Index>(dim));
  for (size_t i = 0; i < train_order.size(); ++i) {
    const RawRow& row = rows[train_order[i]];
    for (size_t c = 0; c < dim; ++c) {
      bundle.train_features(static_cast<Index>(i), static_cast<Index>(c)) =
          row.features[c];
    }
    bundle.train_task_ids.push_back(row.task);
    bundle.train_permutation.push_back(
        static_cast<Index>(row.file_position));
  }
  for (size_t i = 0; i < test_order.size(); ++i) {
    const RawRow& row = rows[test_order[i]];
    for (size_t c = 0; c < dim; ++c) {
      bundle.test_features(static_cast<Index>(i), static_cast<Index>(c)) =
          row.features[c];
    }
    bundle.test_task_ids.push_back(row.task);
    bundle.test_is_target.push_back(row.target ? 1 : 0);
    bundle.test_permutation.push_back(static_cast<Index>(row.file_position));
  }

  validate_bundle(bundle, path);
  return bundle;
}

void save_csv(const std::string& path, const DatasetBundle& bundle) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
  const Index dim = bundle.train_features.cols();
  for (Index c = 0; c < dim; ++c) out << "f" << c << ",";
  out << "task,split,label\n";
  for (Index i = 0; i < bundle.train_features.rows(); ++i) {
    for (Index c = 0; c < dim; ++c) {
      out << format_value(bundle.train_features(i, c)) << ",";
    }
    out << bundle.train_task_ids[static_cast<size_t>(i)] << ",train,target\n";
  }
  for (Index i = 0; i < bundle.test_features.rows(); ++i) {
    for (Index c = 0; c < dim; ++c) {
      out << format_value(bundle.test_features(i, c)) << ",";
    }
    out << bundle.test_task_ids[static_cast<size_t>(i)] << ",test,"
        << (bundle.test_is_target[static_cast<size_t>(i)] ? "target"
                                                          : "nontarget")
        << "\n";
  }
  if (!out) fail(ErrorCode::Io, "write to '" + path + "' failed");
}

DatasetBundle synth_tasks(const SynthSpec& spec, uint64_t seed) {
  if (spec.tasks < 1 || spec.per_task < 1 || spec.dim < 1 ||
      spec.test_pos_per_task < 1 || spec.test_neg_per_task < 1) {
    fail(ErrorCode::InvalidArgument, "synthetic sizes must be positive");
  }
  if (spec.relatedness < 0.0 || spec.relatedness > 1.0) {
    fail(ErrorCode::InvalidArgument, "relatedness must lie in [0, 1]");
  }
  if (spec.unrelated_tasks < 0 || spec.unrelated_tasks > spec.tasks) {
    fail(ErrorCode::InvalidArgument,
         "unrelated task count must lie in [0, tasks]");
  }
  // Zero noise is allowed (samples sit exactly on their task means).
  if (!(spec.mean_scale > 0.0) || spec.noise < 0.0) {
    fail(ErrorCode::InvalidArgument, "scales must be positive");
  }

  Rng rng(seed);
  const Index d = spec.dim;
  const Vector shared_mean = rng.normal_vector(d, spec.mean_scale);
  std::vector<Vector> means;
  means.reserve(static_cast<size_t>(spec.tasks));
  for (int t = 0; t < spec.tasks; ++t) {
    const bool unrelated = t >= spec.tasks - spec.unrelated_tasks;
    const double rho = unrelated ? 0.0 : spec.relatedness;
    const Vector own = rng.normal_vector(d, spec.mean_scale);
    means.push_back(rho * shared_mean + (1.0 - rho) * own);
  }

  DatasetBundle bundle;
  bundle.task_count = spec.tasks;
  bundle.source = "synth";
  bundle.seed = seed;

  const Index n_train = static_cast<Index>(spec.tasks) * spec.per_task;
  const Index n_test = static_cast<Index>(spec.tasks) *
                       (spec.test_pos_per_task + spec.test_neg_per_task);
  bundle.train_features.resize(n_train, d);
  bundle.test_features.resize(n_test, d);

  Index train_row = 0;
  Index test_row = 0;
  const double background =
      std::sqrt(spec.noise * spec.noise + spec.mean_scale * spec.mean_scale);
  for (int t = 0; t < spec.tasks; ++t) {
    const Vector& mean = means[static_cast<size_t>(t)];
    for (int i = 0; i < spec.per_task; ++i) {
      bundle.train_features.row(train_row++) =
          (mean + rng.normal_vector(d, spec.noise)).transpose();
      bundle.train_task_ids.push_back(t);
    }
    for (int i = 0; i < spec.test_pos_per_task; ++i) {
      bundle.test_features.row(test_row++) =
          (mean + rng.normal_vector(d, spec.noise)).transpose();
      bundle.test_task_ids.push_back(t);
      bundle.test_is_target.push_back(1);
    }
    for (int i = 0; i < spec.test_neg_per_task; ++i) {
      Vector sample;
      // Negatives are dominated by sibling-task draws (the hard,
      // discriminative cases, mirroring the usual one-vs-rest protocol)
      // with a small share of broad background probes; a single task only
      // has the background available.
      const bool sibling = spec.tasks > 1 && rng.uniform() < 0.9;
      if (sibling) {
        int other = rng.uniform_int(0, spec.tasks - 2);
        if (other >= t) ++other;
        sample = means[static_cast<size_t>(other)] +
                 rng.normal_vector(d, spec.noise);
      } else {
        sample = rng.normal_vector(d, background);
      }
      bundle.test_features.row(test_row++) = sample.transpose();
      bundle.test_task_ids.push_back(t);
      bundle.test_is_target.push_back(0);
    }
  }

  bundle.train_permutation.resize(static_cast<size_t>(n_train));
  bundle.test_permutation.resize(static_cast<size_t>(n_test));
  for (Index i = 0; i < n_train; ++i) {
    bundle.train_permutation[static_cast<size_t>(i)] = i;
  }
  for (Index i = 0; i < n_test; ++i) {
    bundle.test_permutation[static_cast<size_t>(i)] = i;
  }
  validate_bundle(bundle, "synth");
  return bundle;
}

DatasetBundle resplit(const DatasetBundle& base, uint64_t seed) {
  DatasetBundle out = base;
  out.seed = seed;
  Rng rng(seed);
  const Index d = base.train_features.cols();
  if (base.test_features.cols() != d) {
    fail(ErrorCode::InvalidArgument,
         "train and test feature dimensions differ");
  }

  for (int t = 0; t < base.task_count; ++t) {
    // Pool this task's training rows with its target test rows.
    std::vector<Index> train_rows;
    std::vector<Index> test_rows;
    for (size_t i = 0; i < base.train_task_ids.size(); ++i) {
      if (base.train_task_ids[i] == t) {
        train_rows.push_back(static_cast<Index>(i));
      }
    }
    for (size_t i = 0; i < base.test_task_ids.size(); ++i) {
      if (base.test_task_ids[i] == t && base.test_is_target[i]) {
        test_rows.push_back(static_cast<Index>(i));
      }
    }
    Matrix pool(static_cast<Index>(train_rows.size() + test_rows.size()), d);
    Index p = 0;
    for (Index row : train_rows) pool.row(p++) = base.train_features.row(row);
    for (Index row : test_rows) pool.row(p++) = base.test_features.row(row);

    // Fisher-Yates over the pooled rows.
    std::vector<Index> order(static_cast<size_t>(pool.rows()));
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Index>(i);
    for (size_t i = order.size(); i > 1; --i) {
      const size_t j =
          static_cast<size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }

    size_t next = 0;
    for (Index row : train_rows) {
      out.train_features.row(row) = pool.row(order[next++]);
    }
    for (Index row : test_rows) {
      out.test_features.row(row) = pool.row(order[next++]);
    }
  }
  return out;
}

}  // namespace mtoc
