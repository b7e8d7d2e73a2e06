#ifndef MTOC_KERNELS_HPP
#define MTOC_KERNELS_HPP

#include "common.hpp"

namespace mtoc {

// Width floor for the second-layer kernel; below it J degenerates toward the
// all-ones rank-1 matrix and the theta gradient becomes useless.
inline constexpr double kThetaFloor = 1e-8;
inline constexpr double kThetaCeil = 1e6;

// Squared pairwise distances E of the rows of a matrix together with the
// Gram matrix F = Y*Y^T they were expanded from.
struct SquaredDistances {
  Matrix e;  // n x n, symmetric, nonnegative, exact zero diagonal
  Matrix f;  // n x n, F = Y Y^T
};

// K_ij = exp(-|x_i - x_j|^2 / (2 sigma^2)). Symmetric with unit diagonal.
Matrix rbf_gram(const Matrix& x, double sigma);

// Cross-kernel block between two sample sets, rows of `a` vs rows of `b`.
Matrix rbf_gram_cross(const Matrix& a, const Matrix& b, double sigma);

// E_ij = F_ii + F_jj - 2 F_ij with F = Y Y^T. Negative round-off and the
// diagonal are clamped to exact zero.
SquaredDistances pairwise_sq_dist(const Matrix& y);

// Squared distances between rows of `u` (m) and rows of `v` (n), m x n.
Matrix cross_sq_dist(const Matrix& u, const Matrix& v);

// J = exp(-theta * E). theta below the floor is clamped; when a trace is
// supplied the clamp is recorded as a warning.
Matrix second_layer_kernel(const Matrix& e, double theta,
                           TrainingTrace* trace = nullptr);

// sigma = sqrt(median of nonzero pairwise squared distances / 2).
double median_heuristic_width(const Matrix& x);

}  // namespace mtoc

#endif
