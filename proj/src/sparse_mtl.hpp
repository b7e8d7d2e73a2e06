#ifndef MTOC_SPARSE_MTL_HPP
#define MTOC_SPARSE_MTL_HPP

#include <vector>

#include "common.hpp"
#include "nonlinear_mtl.hpp"

namespace mtoc {

// Two-layer model with a sparse-group penalty on the structure matrix:
// entrywise l1 to drop individual couplings and a per-column l2 group term
// to drop whole tasks from the shared representation.
struct SparseHyperparams {
  double gamma1 = 1.0;    // tr(A' K A) weight
  double gamma2 = 0.1;    // entrywise l1 weight on B
  double gamma3 = 0.1;    // per-column group weight on B
  double eta_a = 1e-3;
  double eta_theta = 1e-3;
  double epsilon = 1e-8;
  int max_outer_iters = 500;
  int prox_max_iters = 5000;
  double prox_tol = 1e-9;
  // When set the group term is the squared column norm, which shrinks but
  // never zeroes whole columns; the default unsquared norm does both.
  bool squared_group = false;
  bool backtracking = true;
  int max_halvings = 30;
};

struct SparsityReport {
  double nonzero_fraction = 0.0;
  std::vector<double> column_norms;
  std::vector<int> zero_columns;
};

struct SparseSolveResult {
  Matrix b;
  int iterations = 0;
  bool converged = false;
  int restarts = 0;
  double objective = 0.0;  // |J B - R|^2 plus both penalties
  SparsityReport report;
};

struct SparseModel {
  Matrix coeffs;
  Matrix structure;
  double theta = 0.0;
  Matrix train_y;
  TrainingTrace trace;
  SparsityReport report;
  std::vector<SparsityReport> report_history;  // one entry per structure solve
};

double sparse_objective(const Matrix& k, const Matrix& a,
                        const SecondLayerState& state, const Matrix& b,
                        const Matrix& r, const SparseHyperparams& hp);

// Proximal map of t1 |.|_1 + t2 (group term) applied columnwise:
// entrywise soft threshold by t1, then column shrink by the group term.
Matrix prox_sparse_group(const Matrix& v, double t1, double t2,
                         bool squared_group);

// d objective / d J holding B fixed; the penalties do not involve J.
Matrix second_layer_gradient_sparse(const SecondLayerState& state,
                                    const Matrix& b, const Matrix& r);

// Accelerated proximal gradient (FISTA) with a monotone restart: the
// objective of the accepted iterate never rises above the warm start's.
SparseSolveResult solve_b_sparse(const Matrix& j, const Matrix& r,
                                 const SparseHyperparams& hp,
                                 const Matrix* warm_start = nullptr);

SparsityReport sparsity_report(const Matrix& b);

SparseModel train_sparse(const Matrix& k, const Matrix& r,
                         const std::vector<int>& task_ids,
                         const SparseHyperparams& hp);

}  // namespace mtoc

#endif
