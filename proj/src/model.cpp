#include "model.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "kernels.hpp"
#include "linear_mtl.hpp"
#include "nonlinear_mtl.hpp"
#include "ocksr.hpp"
#include "sparse_mtl.hpp"

namespace mtoc {

namespace {

constexpr char kMagic[4] = {'M', 'T', 'O', 'C'};
constexpr uint16_t kFormatVersion = 1;

LinearHyperparams linear_hp(const Config& config) {
  LinearHyperparams hp;
  hp.gamma1 = config.get_double("gamma1", hp.gamma1);
  hp.gamma2 = config.get_double("gamma2", hp.gamma2);
  hp.gamma3 = config.get_double("gamma3", hp.gamma3);
  hp.eta_b = config.get_double("eta_b", hp.eta_b);
  hp.epsilon = config.get_double("epsilon", hp.epsilon);
  hp.max_outer_iters = config.get_int("max_iters", hp.max_outer_iters);
  hp.backtracking = config.get_bool("backtracking", hp.backtracking);
  hp.max_halvings = config.get_int("max_halvings", hp.max_halvings);
  hp.project_psd = config.get_bool("project_psd", hp.project_psd);
  return hp;
}

NonlinearHyperparams nonlinear_hp(const Config& config) {
  NonlinearHyperparams hp;
  hp.gamma1 = config.get_double("gamma1", hp.gamma1);
  hp.gamma2 = config.get_double("gamma2", hp.gamma2);
  hp.eta_a = config.get_double("eta_a", hp.eta_a);
  hp.eta_theta = config.get_double("eta_theta", hp.eta_theta);
  hp.epsilon = config.get_double("epsilon", hp.epsilon);
  hp.max_outer_iters = config.get_int("max_iters", hp.max_outer_iters);
  hp.backtracking = config.get_bool("backtracking", hp.backtracking);
  hp.max_halvings = config.get_int("max_halvings", hp.max_halvings);
  return hp;
}

SparseHyperparams sparse_hp(const Config& config) {
  SparseHyperparams hp;
  hp.gamma1 = config.get_double("gamma1", hp.gamma1);
  hp.gamma2 = config.get_double("gamma2", hp.gamma2);
  hp.gamma3 = config.get_double("gamma3", hp.gamma3);
  hp.eta_a = config.get_double("eta_a", hp.eta_a);
  hp.eta_theta = config.get_double("eta_theta", hp.eta_theta);
  hp.epsilon = config.get_double("epsilon", hp.epsilon);
  hp.max_outer_iters = config.get_int("max_iters", hp.max_outer_iters);
  hp.prox_max_iters = config.get_int("prox_max_iters", hp.prox_max_iters);
  hp.prox_tol = config.get_double("prox_tol", hp.prox_tol);
  hp.squared_group = config.get_bool("squared_group", hp.squared_group);
  hp.backtracking = config.get_bool("backtracking", hp.backtracking);
  hp.max_halvings = config.get_int("max_halvings", hp.max_halvings);
  return hp;
}

Vector compute_target_means(const Matrix& train_responses,
                            const std::vector<int>& task_ids,
                            int task_count) {
  Vector means = Vector::Zero(task_count);
  Vector counts = Vector::Zero(task_count);
  for (size_t i = 0; i < task_ids.size(); ++i) {
    const int t = task_ids[i];
    means(t) += train_responses(static_cast<Index>(i), t);
    counts(t) += 1.0;
  }
  for (int t = 0; t < task_count; ++t) {
    if (counts(t) == 0.0) {
      fail(ErrorCode::DegenerateData,
           "task " + std::to_string(t) + " has no training rows");
    }
    means(t) /= counts(t);
  }
  return means;
}

// --- binary writer/reader helpers -----------------------------------------

void put_bytes(std::string& out, const void* data, size_t size) {
  out.append(static_cast<const char*>(data), size);
}

void put_u16(std::string& out, uint16_t v) { put_bytes(out, &v, sizeof v); }
void put_u32(std::string& out, uint32_t v) { put_bytes(out, &v, sizeof v); }
void put_u64(std::string& out, uint64_t v) { put_bytes(out, &v, sizeof v); }
void put_f64(std::string& out, double v) { put_bytes(out, &v, sizeof v); }

void put_string(std::string& out, const std::string& s) {
  put_u32(out, static_cast<uint32_t>(s.size()));
  put_bytes(out, s.data(), s.size());
}

void put_matrix(std::string& out, const std::string& name, const Matrix& m) {
  put_string(out, name);
  put_u64(out, static_cast<uint64_t>(m.rows()));
  put_u64(out, static_cast<uint64_t>(m.cols()));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) put_f64(out, m(i, j));
  }
}

class Reader {
public:
  Reader(const std::string& data, const std::string& path)
      : data_(data), path_(path) {}

  void raw(void* out, size_t size) {
    if (pos_ + size > data_.size()) {
      fail(ErrorCode::CorruptModel,
           path_ + ": truncated model file (wanted " + std::to_string(size) +
               " bytes at offset " + std::to_string(pos_) + ")");
    }
    std::memcpy(out, data_.data() + pos_, size);
    pos_ += size;
  }

  uint16_t u16() { uint16_t v; raw(&v, sizeof v); return v; }
  uint32_t u32() { uint32_t v; raw(&v, sizeof v); return v; }
  uint64_t u64() { uint64_t v; raw(&v, sizeof v); return v; }
  double f64() { double v; raw(&v, sizeof v); return v; }

  std::string str() {
    const uint32_t len = u32();
    if (len > data_.size() - pos_) {
      fail(ErrorCode::CorruptModel, path_ + ": truncated string field");
    }
    std::string s(data_.data() + pos_, len);
    pos_ += len;
    return s;
  }

  Matrix matrix() {
    const uint64_t rows = u64();
    const uint64_t cols = u64();
    if (rows > (1u << 24) || cols > (1u << 24)) {
      fail(ErrorCode::CorruptModel, path_ + ": implausible matrix shape");
    }
    Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) m(i, j) = f64();
    }
    return m;
  }

  size_t pos() const { return pos_; }

private:
  const std::string& data_;
  std::string path_;
  size_t pos_ = 0;
};

}  // namespace

TrainedModel train_variant(const DatasetBundle& data, const Config& config,
                           Variant variant) {
  config.validate_keys();
  if (data.train_features.rows() < 2) {
    fail(ErrorCode::DegenerateData, "need at least two training rows");
  }

  TrainedModel model;
  model.variant = variant;
  model.config_fingerprint = config.fingerprint();
  model.train_features = data.train_features;
  model.task_ids = data.train_task_ids;

  double sigma = config.get_double("sigma", 0.0);
  if (sigma < 0.0) {
    fail(ErrorCode::InvalidArgument, "sigma must be positive or 0 (auto)");
  }
  if (sigma == 0.0) sigma = median_heuristic_width(data.train_features);
  model.sigma = sigma;

  const Matrix k = rbf_gram(data.train_features, sigma);
  const Matrix r = build_responses(data.train_task_ids, data.task_count,
                                   ResponseMode::JointOneHot);
  const auto spans = task_spans(data.train_task_ids, data.task_count);

  Matrix train_responses;
  switch (variant) {
    case Variant::Ocksr: {
      const double gamma = config.get_double("gamma", 0.1);
      model.coeffs = Matrix::Zero(k.rows(), data.task_count);
      double sse = 0.0;
      for (int t = 0; t < data.task_count; ++t) {
        const auto [start, len] = spans[static_cast<size_t>(t)];
        const Matrix kt = k.block(start, start, len, len);
        const Vector at = fit_single(kt, Vector::Ones(len), gamma);
        model.coeffs.block(start, t, len, 1) = at;
        sse += (kt * at - Vector::Ones(len)).squaredNorm();
      }
      train_responses = k * model.coeffs;
      model.train_sse = sse;
      model.trace.objective.push_back(sse);
      model.trace.converged = true;
      break;
    }
    case Variant::COcksr: {
      const double gamma = config.get_double("gamma", 0.1);
      model.coeffs =
          fit_joint(k, data.train_task_ids, data.task_count, gamma);
      train_responses = k * model.coeffs;
      model.train_sse = (train_responses - r).squaredNorm();
      model.trace.objective.push_back(model.train_sse);
      model.trace.converged = true;
      break;
    }
    case Variant::OcksrL: {
      LinearModel fitted = train_linear(k, r, linear_hp(config));
      model.coeffs = std::move(fitted.coeffs);
      model.structure = std::move(fitted.structure);
      model.trace = std::move(fitted.trace);
      train_responses = k * model.coeffs * model.structure;
      model.train_sse = (train_responses - r).squaredNorm();
      break;
    }
    case Variant::OcksrN: {
      NonlinearModel fitted =
          train_nonlinear(k, r, data.train_task_ids, nonlinear_hp(config));
      model.coeffs = std::move(fitted.coeffs);
      model.structure = std::move(fitted.structure);
      model.theta = fitted.theta;
      model.train_y = std::move(fitted.train_y);
      model.trace = std::move(fitted.trace);
      train_responses = predict_nonlinear_responses(
          k, model.coeffs, model.train_y, model.theta, model.structure);
      model.train_sse = (train_responses - r).squaredNorm();
      break;
    }
    case Variant::OcksrNs: {
      SparseModel fitted =
          train_sparse(k, r, data.train_task_ids, sparse_hp(config));
      model.coeffs = std::move(fitted.coeffs);
      model.structure = std::move(fitted.structure);
      model.theta = fitted.theta;
      model.train_y = std::move(fitted.train_y);
      model.trace = std::move(fitted.trace);
      train_responses = predict_nonlinear_responses(
          k, model.coeffs, model.train_y, model.theta, model.structure);
      model.train_sse = (train_responses - r).squaredNorm();
      break;
    }
  }

  model.target_means =
      compute_target_means(train_responses, data.train_task_ids,
                           data.task_count);
  return model;
}

Matrix predict_responses(const TrainedModel& model,
                         const Matrix& test_features) {
  if (test_features.cols() != model.train_features.cols()) {
    fail(ErrorCode::InvalidArgument,
         "test feature dimension does not match the model");
  }
  const Matrix k_cross =
      rbf_gram_cross(test_features, model.train_features, model.sigma);
  switch (model.variant) {
    case Variant::Ocksr:
    case Variant::COcksr:
      return k_cross * model.coeffs;
    case Variant::OcksrL:
      return k_cross * model.coeffs * model.structure;
    case Variant::OcksrN:
    case Variant::OcksrNs:
      return predict_nonlinear_responses(k_cross, model.coeffs,
                                         model.train_y, model.theta,
                                         model.structure);
  }
  fail(ErrorCode::State, "model has an unknown variant tag");
}

Vector predict_scores(const TrainedModel& model, const Matrix& test_features,
                      const std::vector<int>& test_task_ids) {
  if (static_cast<Index>(test_task_ids.size()) != test_features.rows()) {
    fail(ErrorCode::InvalidArgument,
         "one task id per test row is required");
  }
  const Matrix responses = predict_responses(model, test_features);
  Vector scores(responses.rows());
  for (Index i = 0; i < responses.rows(); ++i) {
    const int t = test_task_ids[static_cast<size_t>(i)];
    if (t < 0 || t >= responses.cols()) {
      fail(ErrorCode::InvalidArgument,
           "test task id " + std::to_string(t) + " outside the model's range");
    }
    scores(i) = std::abs(responses(i, t) - model.target_means(t));
  }
  return scores;
}

EvalResult evaluate_model(const TrainedModel& model,
                          const DatasetBundle& data) {
  const Vector scores =
      predict_scores(model, data.test_features, data.test_task_ids);
  EvalResult result;
  double total = 0.0;
  for (int t = 0; t < data.task_count; ++t) {
    std::vector<double> task_scores;
    std::vector<uint8_t> task_labels;
    for (size_t i = 0; i < data.test_task_ids.size(); ++i) {
      if (data.test_task_ids[i] != t) continue;
      task_scores.push_back(scores(static_cast<Index>(i)));
      task_labels.push_back(data.test_is_target[i]);
    }
    const double auc = auc_score(task_scores, task_labels);
    result.per_task_auc.push_back(auc);
    total += auc;
  }
  result.mean_auc = total / static_cast<double>(data.task_count);
  return result;
}

void save_model(const std::string& path, const TrainedModel& model) {
  std::string buf;
  put_bytes(buf, kMagic, sizeof kMagic);
  put_u16(buf, kFormatVersion);
  buf.push_back(static_cast<char>(model.variant));
  put_u64(buf, model.config_fingerprint);
  put_f64(buf, model.sigma);
  put_f64(buf, model.theta);

  Matrix task_ids(1, static_cast<Index>(model.task_ids.size()));
  for (size_t i = 0; i < model.task_ids.size(); ++i) {
    task_ids(0, static_cast<Index>(i)) = model.task_ids[i];
  }
  Matrix objective(1, static_cast<Index>(model.trace.objective.size()));
  for (size_t i = 0; i < model.trace.objective.size(); ++i) {
    objective(0, static_cast<Index>(i)) = model.trace.objective[i];
  }
  Matrix trace_meta(1, 2);
  trace_meta << static_cast<double>(model.trace.iterations),
      model.trace.converged ? 1.0 : 0.0;
  Matrix sse(1, 1);
  sse << model.train_sse;
  const Matrix target_means = model.target_means;

  const std::vector<std::pair<std::string, const Matrix*>> matrices = {
      {"train_features", &model.train_features},
      {"task_ids", &task_ids},
      {"coeffs", &model.coeffs},
      {"structure", &model.structure},
      {"train_y", &model.train_y},
      {"target_means", &target_means},
      {"objective", &objective},
      {"trace_meta", &trace_meta},
      {"train_sse", &sse},
  };

  put_u32(buf, static_cast<uint32_t>(matrices.size()));
  for (const auto& [name, matrix] : matrices) {
    put_matrix(buf, name, *matrix);
  }

  put_u32(buf, static_cast<uint32_t>(model.trace.warnings.size()));
  for (const auto& warning : model.trace.warnings) put_string(buf, warning);

  const uint32_t crc = static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(buf.data()),
            static_cast<uInt>(buf.size())));
  put_u32(buf, crc);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) fail(ErrorCode::Io, "write to '" + path + "' failed");
}

TrainedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path + "' for reading");
  std::ostringstream raw;
  raw << in.rdbuf();
  const std::string data = raw.str();

  if (data.size() < sizeof(kMagic) + sizeof(uint32_t)) {
    fail(ErrorCode::CorruptModel, path + ": file too short to be a model");
  }
  if (std::memcmp(data.data(), kMagic, sizeof kMagic) != 0) {
    fail(ErrorCode::CorruptModel, path + ": bad magic, not a model file");
  }
  const size_t body_size = data.size() - sizeof(uint32_t);
  uint32_t stored_crc = 0;
  std::memcpy(&stored_crc, data.data() + body_size, sizeof stored_crc);
  const uint32_t actual_crc = static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(data.data()),
            static_cast<uInt>(body_size)));
  if (stored_crc != actual_crc) {
    fail(ErrorCode::CorruptModel,
         path + ": checksum mismatch, file is corrupted");
  }

  Reader reader(data, path);
  char magic[4];
  reader.raw(magic, sizeof magic);
  const uint16_t version = reader.u16();
  if (version != kFormatVersion) {
    std::ostringstream msg;
    msg << path << ": format version " << version << " needs migration (this"
        << " build reads version " << kFormatVersion << ")";
    fail(ErrorCode::VersionMismatch, msg.str());
  }

  TrainedModel model;
  uint8_t variant_tag = 0;
  reader.raw(&variant_tag, 1);
  if (variant_tag > static_cast<uint8_t>(Variant::OcksrNs)) {
    fail(ErrorCode::CorruptModel,
         path + ": unknown variant tag " + std::to_string(variant_tag));
  }
  model.variant = static_cast<Variant>(variant_tag);
  model.config_fingerprint = reader.u64();
  model.sigma = reader.f64();
  model.theta = reader.f64();

  const uint32_t matrix_count = reader.u32();
  for (uint32_t m = 0; m < matrix_count; ++m) {
    const std::string name = reader.str();
    Matrix value = reader.matrix();
    if (name == "train_features") {
      model.train_features = std::move(value);
    } else if (name == "task_ids") {
      model.task_ids.resize(static_cast<size_t>(value.cols()));
      for (Index i = 0; i < value.cols(); ++i) {
        model.task_ids[static_cast<size_t>(i)] =
            static_cast<int>(value(0, i));
      }
    } else if (name == "coeffs") {
      model.coeffs = std::move(value);
    } else if (name == "structure") {
      model.structure = std::move(value);
    } else if (name == "train_y") {
      model.train_y = std::move(value);
    } else if (name == "target_means") {
      model.target_means =
          value.cols() == 1 ? Vector(value) : Vector(value.transpose());
    } else if (name == "objective") {
      model.trace.objective.assign(value.data(),
                                   value.data() + value.size());
    } else if (name == "trace_meta") {
      model.trace.iterations = static_cast<int>(value(0, 0));
      model.trace.converged = value(0, 1) != 0.0;
    } else if (name == "train_sse") {
      model.train_sse = value(0, 0);
    } else {
      fail(ErrorCode::CorruptModel, path + ": unknown section '" + name +
                                        "'");
    }
  }

  const uint32_t warning_count = reader.u32();
  for (uint32_t w = 0; w < warning_count; ++w) {
    model.trace.warnings.push_back(reader.str());
  }
  if (reader.pos() != body_size) {
    fail(ErrorCode::CorruptModel, path + ": trailing bytes after payload");
  }
  return model;
}

namespace {

nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

void export_model_json(const std::string& path, const TrainedModel& model) {
  nlohmann::json doc = {
      {"variant", variant_name(model.variant)},
      {"sigma", model.sigma},
      {"theta", model.theta},
      {"config_fingerprint", std::to_string(model.config_fingerprint)},
      {"train_sse", model.train_sse},
      {"task_ids", model.task_ids},
      {"train_features", matrix_json(model.train_features)},
      {"coeffs", matrix_json(model.coeffs)},
      {"structure", matrix_json(model.structure)},
      {"train_y", matrix_json(model.train_y)},
      {"target_means",
       std::vector<double>(model.target_means.data(),
                           model.target_means.data() +
                               model.target_means.size())},
      {"trace",
       {{"objective", model.trace.objective},
        {"iterations", model.trace.iterations},
        {"converged", model.trace.converged},
        {"warnings", model.trace.warnings}}},
  };
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << doc.dump(2) << "\n";
  if (!out) fail(ErrorCode::Io, "write to '" + path + "' failed");
}

}  // namespace mtoc
