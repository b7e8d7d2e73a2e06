#ifndef MTOC_OCKSR_HPP
#define MTOC_OCKSR_HPP

#include <cstdint>
#include <vector>

#include "common.hpp"

namespace mtoc {

enum class ResponseMode {
  SingleTaskPositive,  // one column of ones
  JointOneHot,         // R[i, task_ids[i]] = 1, zero elsewhere
};

// Solves (M + gamma I) X = rhs for symmetric PSD M via a Cholesky
// factorization with one refinement pass. When gamma = 0 fails to factorize
// (or is too ill-conditioned), retries once with jitter 1e-10 * trace(M)/n.
Matrix regularized_spd_solve(const Matrix& m, const Matrix& rhs, double gamma);

Matrix build_responses(const std::vector<int>& task_ids, int task_count,
                       ResponseMode mode);

// Start index and length of each task's contiguous block. Errors when ids
// are not grouped as 0..task_count-1 in order or a task is empty.
std::vector<std::pair<Index, Index>> task_spans(
    const std::vector<int>& task_ids, int task_count);

// a = (K + gamma I)^-1 r, the regularized regression coefficients mapping
// every positive sample onto a common response.
Vector fit_single(const Matrix& k, const Vector& r, double gamma);

// Joint fit with one-hot responses: column t is the task-t discriminant and
// every other task's positives act as negatives mapped to zero.
Matrix fit_joint(const Matrix& k, const std::vector<int>& task_ids,
                 int task_count, double gamma);

// Y = K_cross * coeffs.
Matrix project(const Matrix& k_cross, const Matrix& coeffs);

// Dissimilarity of projections from the target-class reference point.
Vector score_against_mean(const Vector& projections, double target_mean);

// Probability that a random target sample scores lower than a random
// non-target sample, ties counted 1/2. Computed with midranks.
double auc_score(const std::vector<double>& scores,
                 const std::vector<uint8_t>& is_target);

}  // namespace mtoc

#endif
