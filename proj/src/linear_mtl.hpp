#ifndef MTOC_LINEAR_MTL_HPP
#define MTOC_LINEAR_MTL_HPP

#include "common.hpp"

namespace mtoc {

struct LinearHyperparams {
  double gamma1 = 1.0;   // Hilbert-norm penalty on the coefficients A
  double gamma2 = 0.0;   // Frobenius penalty on the structure matrix B
  double gamma3 = 0.0;   // nuclear-norm penalty on B (rank control)
  double eta_b = 1e-2;   // initial gradient step for B
  double epsilon = 1e-8; // convergence tolerance, relative to the initial objective
  int max_outer_iters = 500;
  bool backtracking = true;  // halve eta_b on objective increase
  int max_halvings = 30;
  bool project_psd = false;  // optionally keep B in the PSD cone
};

struct LinearModel {
  Matrix coeffs;     // A, n x T
  Matrix structure;  // B, T x T
  Matrix composed;   // C = A * B, the single-layer test-time discriminants
  TrainingTrace trace;
};

// |KAB - R|_F^2 + g1 tr(A^T K A) + g2 tr(B^T B) + g3 |B|_*
double linear_objective(const Matrix& k, const Matrix& a, const Matrix& b,
                        const Matrix& r, const LinearHyperparams& hp);

// Solves K A (BB) + gamma1 A = R B in the eigenbasis of K, one small T x T
// system per eigen-direction. gamma1 must be positive.
Matrix solve_coeffs_sylvester(const Matrix& k, const Matrix& b,
                              const Matrix& r, double gamma1);

// dQ/dB = 2 (KA)^T (KAB - R) + 2 g2 B + g3 U sign(S) V^T with B = U S V^T.
Matrix structure_gradient(const Matrix& k, const Matrix& a, const Matrix& b,
                          const Matrix& r, const LinearHyperparams& hp);

// Alternating minimization: exact coefficient solve, backtracked gradient
// step on B, starting from B = I.
LinearModel train_linear(const Matrix& k, const Matrix& r,
                         const LinearHyperparams& hp);

}  // namespace mtoc

#endif
