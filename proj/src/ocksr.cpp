#include "ocksr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "errors.hpp"

namespace mtoc {

namespace {

constexpr double kMaxCondition = 1e12;
constexpr double kResidualTol = 1e-10;

Matrix solve_with(const Eigen::LLT<Matrix>& llt, const Matrix& reg,
                  const Matrix& rhs) {
  Matrix x = llt.solve(rhs);
  // One refinement pass keeps the residual near machine precision even for
  // moderately ill-conditioned systems.
  x += llt.solve(rhs - reg * x);
  return x;
}

}  // namespace

Matrix regularized_spd_solve(const Matrix& m, const Matrix& rhs,
                             double gamma) {
  if (m.rows() != m.cols()) {
    fail(ErrorCode::InvalidArgument, "system matrix must be square");
  }
  if (m.rows() != rhs.rows()) {
    fail(ErrorCode::InvalidArgument,
         "system and right-hand side row counts differ");
  }
  if (gamma < 0.0) {
    fail(ErrorCode::InvalidArgument, "regularization must be nonnegative");
  }
  const Index n = m.rows();

  Matrix reg = m;
  reg.diagonal().array() += gamma;
  Eigen::LLT<Matrix> llt(reg);
  double condition = std::numeric_limits<double>::infinity();
  if (llt.info() == Eigen::Success) {
    const double rc = llt.rcond();
    condition = rc > 0.0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
  }

  bool usable = llt.info() == Eigen::Success &&
                !(gamma == 0.0 && condition >= kMaxCondition);
  if (!usable && gamma == 0.0) {
    const double jitter = 1e-10 * m.trace() / static_cast<double>(n);
    reg = m;
    reg.diagonal().array() += jitter;
    llt.compute(reg);
    if (llt.info() == Eigen::Success) {
      const double rc = llt.rcond();
      condition =
          rc > 0.0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
      usable = true;
    }
  }
  if (!usable) {
    std::ostringstream msg;
    msg << "regularized system is not positive definite (condition estimate "
        << condition << ")";
    fail(ErrorCode::Numerical, msg.str());
  }

  Matrix x = solve_with(llt, reg, rhs);
  const double rhs_norm = rhs.norm();
  double residual = (reg * x - rhs).norm();
  if (residual > kResidualTol * rhs_norm) {
    x += llt.solve(rhs - reg * x);
    residual = (reg * x - rhs).norm();
  }
  if (residual > kResidualTol * rhs_norm) {
    std::ostringstream msg;
    msg << "solve residual " << residual << " exceeds " << kResidualTol
        << " * |rhs| (condition estimate " << condition << ")";
    fail(ErrorCode::Numerical, msg.str());
  }
  return x;
}

Matrix build_responses(const std::vector<int>& task_ids, int task_count,
                       ResponseMode mode) {
  if (task_count < 1) {
    fail(ErrorCode::InvalidArgument, "task count must be at least 1");
  }
  const Index n = static_cast<Index>(task_ids.size());
  if (n < 1) {
    fail(ErrorCode::InvalidArgument, "need at least one sample");
  }
  for (int id : task_ids) {
    if (id < 0 || id >= task_count) {
      std::ostringstream msg;
      msg << "task id " << id << " out of range [0, " << task_count << ")";
      fail(ErrorCode::InvalidArgument, msg.str());
    }
  }
  if (mode == ResponseMode::SingleTaskPositive) {
    return Matrix::Ones(n, 1);
  }
  Matrix r = Matrix::Zero(n, task_count);
  for (Index i = 0; i < n; ++i) {
    r(i, task_ids[static_cast<size_t>(i)]) = 1.0;
  }
  return r;
}

std::vector<std::pair<Index, Index>> task_spans(
    const std::vector<int>& task_ids, int task_count) {
  if (task_count < 1) {
    fail(ErrorCode::InvalidArgument, "task count must be at least 1");
  }
  for (int id : task_ids) {
    if (id < 0 || id >= task_count) {
      std::ostringstream msg;
      msg << "task id " << id << " out of range [0, " << task_count << ")";
      fail(ErrorCode::InvalidArgument, msg.str());
    }
  }
  std::vector<std::pair<Index, Index>> spans;
  spans.reserve(static_cast<size_t>(task_count));
  Index start = 0;
  int current = -1;
  const Index n = static_cast<Index>(task_ids.size());
  for (Index i = 0; i <= n; ++i) {
    const int id = i < n ? task_ids[static_cast<size_t>(i)] : task_count;
    if (id == current) continue;
    if (current >= 0) spans.emplace_back(start, i - start);
    if (id != current + 1) {
      std::ostringstream msg;
      msg << "task ids must be grouped contiguously as 0.." << task_count - 1
          << " with no empty task; saw id " << id << " at row " << i;
      fail(ErrorCode::InvalidArgument, msg.str());
    }
    current = id;
    start = i;
  }
  if (static_cast<int>(spans.size()) != task_count) {
    fail(ErrorCode::InvalidArgument,
         "task ids do not cover every task exactly once");
  }
  return spans;
}

Vector fit_single(const Matrix& k, const Vector& r, double gamma) {
  return regularized_spd_solve(k, r, gamma);
}

Matrix fit_joint(const Matrix& k, const std::vector<int>& task_ids,
                 int task_count, double gamma) {
  const Matrix r = build_responses(task_ids, task_count,
                                   ResponseMode::JointOneHot);
  if (static_cast<Index>(task_ids.size()) != k.rows()) {
    fail(ErrorCode::InvalidArgument,
         "task id count does not match kernel size");
  }
  return regularized_spd_solve(k, r, gamma);
}

Matrix project(const Matrix& k_cross, const Matrix& coeffs) {
  if (k_cross.cols() != coeffs.rows()) {
    fail(ErrorCode::InvalidArgument,
         "projection dimension mismatch: " + std::to_string(k_cross.cols()) +
             " vs " + std::to_string(coeffs.rows()));
  }
  return k_cross * coeffs;
}

Vector score_against_mean(const Vector& projections, double target_mean) {
  return (projections.array() - target_mean).abs().matrix();
}

double auc_score(const std::vector<double>& scores,
                 const std::vector<uint8_t>& is_target) {
  if (scores.size() != is_target.size()) {
    fail(ErrorCode::InvalidArgument, "scores and labels differ in length");
  }
  const size_t m = scores.size();
  size_t pos = 0;
  for (auto t : is_target) pos += t ? 1 : 0;
  const size_t neg = m - pos;
  if (pos == 0 || neg == 0) {
    fail(ErrorCode::Evaluation,
         "AUC needs at least one target and one non-target sample");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) {
      fail(ErrorCode::Evaluation, "AUC input score is not finite");
    }
  }

  std::vector<size_t> order(m);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  // Midranks over tie groups; ranks are 1-based.
  std::vector<double> rank(m, 0.0);
  size_t i = 0;
  while (i < m) {
    size_t j = i;
    while (j + 1 < m && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }

  double target_rank_sum = 0.0;
  for (size_t s = 0; s < m; ++s) {
    if (is_target[s]) target_rank_sum += rank[s];
  }
  const double np = static_cast<double>(pos);
  const double nn = static_cast<double>(neg);
  // U counts target-above-non-target pairs (ties at 1/2); scores are
  // dissimilarities, so the AUC is its complement.
  const double u_above = target_rank_sum - np * (np + 1.0) / 2.0;
  return 1.0 - u_above / (np * nn);
}

}  // namespace mtoc
