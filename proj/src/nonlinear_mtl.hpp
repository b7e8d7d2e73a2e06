#ifndef MTOC_NONLINEAR_MTL_HPP
#define MTOC_NONLINEAR_MTL_HPP

#include <vector>

#include "common.hpp"

namespace mtoc {

// Two-layer model: first-layer responses Y = K A feed a Gaussian similarity
// J = exp(-theta E) between samples in response space, and a second
// regression J B maps those similarities onto the one-hot task responses.
struct NonlinearHyperparams {
  double gamma1 = 1.0;    // tr(A' K A) weight
  double gamma2 = 0.1;    // tr(B' J B) weight
  double eta_a = 1e-3;    // initial step for the coefficient block
  double eta_theta = 1e-3;  // initial step for the similarity width
  double epsilon = 1e-8;  // relative objective-change stopping threshold
  int max_outer_iters = 500;
  bool backtracking = true;
  int max_halvings = 30;
};

// Quantities derived from (A, theta); kept together so every consumer sees a
// mutually consistent snapshot.
struct SecondLayerState {
  Matrix y;  // K A
  Matrix f;  // Y Y'
  Matrix e;  // squared distances between rows of Y
  Matrix j;  // exp(-theta E)
  double theta = 0.0;
};

struct ChainGradients {
  Matrix wrt_a;  // d objective / d A through the similarity layer
  Matrix wrt_y;  // intermediate d objective / d Y, exposed for verification
};

struct FirstLayerInit {
  Matrix a;
  double theta = 0.0;
  SecondLayerState state;
};

struct NonlinearInit {
  Matrix a;
  Matrix b;
  double theta = 0.0;
  SecondLayerState state;
};

struct NonlinearModel {
  Matrix coeffs;     // A
  Matrix structure;  // B
  double theta = 0.0;
  Matrix train_y;    // K A on the training set, needed at prediction time
  TrainingTrace trace;
};

SecondLayerState make_second_layer(const Matrix& k, const Matrix& a,
                                   double theta);

// Recomputes only J from the stored distances.
void refresh_second_layer_theta(SecondLayerState& state, double theta);

// Same-task indicator matrix, the idealized similarity used to seed B.
Matrix block_ones_kernel(const std::vector<int>& task_ids, int task_count);

double nonlinear_objective(const Matrix& k, const Matrix& a,
                           const SecondLayerState& state, const Matrix& b,
                           const Matrix& r, const NonlinearHyperparams& hp);

// d objective / d J holding B fixed: 2 (J B - R) B' + gamma2 B B'.
Matrix second_layer_gradient_tikhonov(const SecondLayerState& state,
                                      const Matrix& b, const Matrix& r,
                                      double gamma2);

// Propagates d objective / d J back through J = exp(-theta E), E from F,
// F = Y Y', Y = K A.
ChainGradients backprop_chain(const Matrix& k, const SecondLayerState& state,
                              const Matrix& dqdj);

// Chain contribution plus the 2 gamma1 K A regularizer term.
Matrix total_gradient_a(const Matrix& k, const Matrix& a,
                        const SecondLayerState& state, const Matrix& dqdj,
                        double gamma1);

// d objective / d theta = sum_ij dqdj_ij * (-E_ij J_ij).
double theta_gradient(const SecondLayerState& state, const Matrix& dqdj);

// Exact minimizer of |J B - R|^2 + gamma2 tr(B' J B): (J + gamma2 I) B = R.
Matrix solve_b_tikhonov(const Matrix& j, const Matrix& r, double gamma2);

// Per-task first-layer fits and width from the mean squared response
// distance; shared by the Tikhonov and sparse trainers.
FirstLayerInit init_first_layer(const Matrix& k, const Matrix& r,
                                const std::vector<int>& task_ids,
                                double gamma1);

// First-layer init plus B seeded from the same-task indicator similarity.
NonlinearInit init_nonlinear(const Matrix& k, const Matrix& r,
                             const std::vector<int>& task_ids,
                             const NonlinearHyperparams& hp);

NonlinearModel train_nonlinear(const Matrix& k, const Matrix& r,
                               const std::vector<int>& task_ids,
                               const NonlinearHyperparams& hp);

// Second-layer responses for held-out samples given their cross kernel
// against the training set.
Matrix predict_nonlinear_responses(const Matrix& k_cross, const Matrix& coeffs,
                                   const Matrix& train_y, double theta,
                                   const Matrix& structure);

}  // namespace mtoc

#endif
