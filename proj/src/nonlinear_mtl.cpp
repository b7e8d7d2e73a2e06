#include "nonlinear_mtl.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "errors.hpp"
#include "kernels.hpp"
#include "ocksr.hpp"

namespace mtoc {

namespace {

constexpr double kTiny = 1e-300;

double accept_tol(double q) { return 1e-12 * std::max(1.0, std::abs(q)); }

double clamp_theta(double theta) {
  return std::min(std::max(theta, kThetaFloor), kThetaCeil);
}

void validate_hyperparams(const NonlinearHyperparams& hp) {
  if (!(hp.gamma1 > 0.0) || hp.gamma2 < 0.0) {
    fail(ErrorCode::InvalidArgument, "invalid regularization weights");
  }
  if (hp.eta_a < 0.0 || hp.eta_theta < 0.0 || !(hp.epsilon > 0.0) ||
      hp.max_outer_iters < 1) {
    fail(ErrorCode::InvalidArgument, "invalid training controls");
  }
}

}  // namespace

SecondLayerState make_second_layer(const Matrix& k, const Matrix& a,
                                   double theta) {
  if (k.rows() != k.cols() || k.cols() != a.rows()) {
    fail(ErrorCode::InvalidArgument,
         "kernel and coefficient dimensions do not match");
  }
  SecondLayerState state;
  state.y = k * a;
  SquaredDistances dist = pairwise_sq_dist(state.y);
  state.e = std::move(dist.e);
  state.f = std::move(dist.f);
  state.theta = theta;
  state.j = second_layer_kernel(state.e, theta);
  return state;
}

void refresh_second_layer_theta(SecondLayerState& state, double theta) {
  state.theta = theta;
  state.j = second_layer_kernel(state.e, theta);
}

Matrix block_ones_kernel(const std::vector<int>& task_ids, int task_count) {
  const auto spans = task_spans(task_ids, task_count);
  const Index n = static_cast<Index>(task_ids.size());
  Matrix j = Matrix::Zero(n, n);
  for (const auto& [start, len] : spans) {
    j.block(start, start, len, len).setOnes();
  }
  return j;
}

double nonlinear_objective(const Matrix& k, const Matrix& a,
                           const SecondLayerState& state, const Matrix& b,
                           const Matrix& r, const NonlinearHyperparams& hp) {
  if (state.j.rows() != r.rows() || b.rows() != state.j.cols() ||
      b.cols() != r.cols() || a.rows() != k.rows()) {
    fail(ErrorCode::InvalidArgument,
         "inconsistent dimensions for objective");
  }
  double q = (state.j * b - r).squaredNorm();
  q += hp.gamma1 * (a.transpose() * k * a).trace();
  q += hp.gamma2 * (b.transpose() * state.j * b).trace();
  return q;
}

Matrix second_layer_gradient_tikhonov(const SecondLayerState& state,
                                      const Matrix& b, const Matrix& r,
                                      double gamma2) {
  return 2.0 * (state.j * b - r) * b.transpose() +
         gamma2 * b * b.transpose();
}

ChainGradients backprop_chain(const Matrix& k, const SecondLayerState& state,
                              const Matrix& dqdj) {
  // J = exp(-theta E): dQ/dE = (-theta J) o dQ/dJ.
  const Matrix dqde = (-state.theta) * state.j.cwiseProduct(dqdj);
  // E_ij = F_ii + F_jj - 2 F_ij.
  const Vector diag = (dqde + dqde.transpose()).rowwise().sum();
  Matrix dqdf = -2.0 * dqde;
  dqdf.diagonal() += diag;
  ChainGradients out;
  // F = Y Y'.
  out.wrt_y = (dqdf + dqdf.transpose()) * state.y;
  // Y = K A with symmetric K.
  out.wrt_a = k * out.wrt_y;
  return out;
}

Matrix total_gradient_a(const Matrix& k, const Matrix& a,
                        const SecondLayerState& state, const Matrix& dqdj,
                        double gamma1) {
  return backprop_chain(k, state, dqdj).wrt_a + 2.0 * gamma1 * (k * a);
}

double theta_gradient(const SecondLayerState& state, const Matrix& dqdj) {
  return -dqdj.cwiseProduct(state.j.cwiseProduct(state.e)).sum();
}

Matrix solve_b_tikhonov(const Matrix& j, const Matrix& r, double gamma2) {
  return regularized_spd_solve(j, r, gamma2);
}

FirstLayerInit init_first_layer(const Matrix& k, const Matrix& r,
                                const std::vector<int>& task_ids,
                                double gamma1) {
  if (!(gamma1 > 0.0)) {
    fail(ErrorCode::InvalidArgument, "initialization requires positive gamma1");
  }
  const Index n = k.rows();
  if (k.cols() != n || r.rows() != n ||
      static_cast<Index>(task_ids.size()) != n) {
    fail(ErrorCode::InvalidArgument,
         "kernel, responses, and task ids disagree on the sample count");
  }
  const int task_count = static_cast<int>(r.cols());
  task_spans(task_ids, task_count);  // enforce contiguous grouping up front

  FirstLayerInit init;
  // Independent per-task fits share the full kernel: each column solves its
  // own ridge regression onto that task's indicator response.
  init.a = regularized_spd_solve(k, r, gamma1);

  const Matrix y0 = k * init.a;
  const SquaredDistances dist = pairwise_sq_dist(y0);
  const double mean_e = dist.e.mean();
  if (!(mean_e > 0.0)) {
    fail(ErrorCode::DegenerateData,
         "first-layer responses are all identical; cannot set a width");
  }
  init.theta = clamp_theta(1.0 / mean_e);
  init.state = make_second_layer(k, init.a, init.theta);
  return init;
}

NonlinearInit init_nonlinear(const Matrix& k, const Matrix& r,
                             const std::vector<int>& task_ids,
                             const NonlinearHyperparams& hp) {
  validate_hyperparams(hp);
  FirstLayerInit first = init_first_layer(k, r, task_ids, hp.gamma1);
  const int task_count = static_cast<int>(r.cols());

  NonlinearInit init;
  init.a = std::move(first.a);
  init.theta = first.theta;
  init.state = std::move(first.state);
  init.b = solve_b_tikhonov(block_ones_kernel(task_ids, task_count), r,
                            hp.gamma2);
  return init;
}

NonlinearModel train_nonlinear(const Matrix& k, const Matrix& r,
                               const std::vector<int>& task_ids,
                               const NonlinearHyperparams& hp) {
  NonlinearInit init = init_nonlinear(k, r, task_ids, hp);

  NonlinearModel model;
  model.coeffs = std::move(init.a);
  model.structure = std::move(init.b);
  model.theta = init.theta;
  SecondLayerState state = std::move(init.state);

  double q = nonlinear_objective(k, model.coeffs, state, model.structure, r,
                                 hp);
  model.trace.objective.push_back(q);
  const double q0 = q;
  const double eps_thr = hp.epsilon * std::max(q0, kTiny);

  double eta_a = hp.eta_a;
  double eta_theta = hp.eta_theta;
  for (int iter = 1; iter <= hp.max_outer_iters; ++iter) {
    // Coefficient block: gradient step through the similarity layer.
    {
      const Matrix dqdj = second_layer_gradient_tikhonov(
          state, model.structure, r, hp.gamma2);
      const Matrix grad =
          total_gradient_a(k, model.coeffs, state, dqdj, hp.gamma1);
      double step = eta_a;
      int halvings = 0;
      bool accepted = false;
      Matrix a_cand;
      SecondLayerState state_cand;
      double q_cand = q;
      while (true) {
        a_cand = model.coeffs - step * grad;
        state_cand = make_second_layer(k, a_cand, state.theta);
        q_cand = nonlinear_objective(k, a_cand, state_cand, model.structure,
                                     r, hp);
        if (!hp.backtracking || q_cand <= q + accept_tol(q)) {
          accepted = true;
          break;
        }
        if (++halvings > hp.max_halvings) break;
        step *= 0.5;
      }
      model.trace.steps.push_back({iter, 'A', step, halvings, accepted});
      if (accepted) {
        model.coeffs = std::move(a_cand);
        state = std::move(state_cand);
        q = q_cand;
        eta_a = halvings == 0 ? std::min(eta_a * 1.2, hp.eta_a * 1e3) : step;
      } else {
        std::ostringstream msg;
        msg << "iteration " << iter << ": coefficient step rejected after "
            << hp.max_halvings << " halvings";
        model.trace.warn(msg.str());
      }
    }

    // Width block: scalar gradient step, only J needs recomputing.
    {
      const Matrix dqdj = second_layer_gradient_tikhonov(
          state, model.structure, r, hp.gamma2);
      const double grad = theta_gradient(state, dqdj);
      double step = eta_theta;
      int halvings = 0;
      bool accepted = false;
      double theta_cand = state.theta;
      double q_cand = q;
      SecondLayerState state_cand = state;
      while (true) {
        theta_cand = clamp_theta(state.theta - step * grad);
        refresh_second_layer_theta(state_cand, theta_cand);
        q_cand = nonlinear_objective(k, model.coeffs, state_cand,
                                     model.structure, r, hp);
        if (!hp.backtracking || q_cand <= q + accept_tol(q)) {
          accepted = true;
          break;
        }
        if (++halvings > hp.max_halvings) break;
        step *= 0.5;
      }
      model.trace.steps.push_back({iter, 'T', step, halvings, accepted});
      if (accepted) {
        model.theta = theta_cand;
        state = std::move(state_cand);
        q = q_cand;
        eta_theta = halvings == 0
                        ? std::min(eta_theta * 1.2, hp.eta_theta * 1e3)
                        : step;
      } else {
        std::ostringstream msg;
        msg << "iteration " << iter << ": width step rejected after "
            << hp.max_halvings << " halvings";
        model.trace.warn(msg.str());
      }
    }

    // Structure block: closed-form minimizer given the current similarity.
    // Guarded so round-off in the solve can never push the trace upward.
    {
      Matrix b_cand = solve_b_tikhonov(state.j, r, hp.gamma2);
      const double q_cand =
          nonlinear_objective(k, model.coeffs, state, b_cand, r, hp);
      if (!hp.backtracking || q_cand <= q + accept_tol(q)) {
        model.structure = std::move(b_cand);
        q = q_cand;
      } else {
        std::ostringstream msg;
        msg << "iteration " << iter
            << ": structure solve skipped (objective would rise by "
            << q_cand - q << ")";
        model.trace.warn(msg.str());
      }
    }

    const double q_prev = model.trace.objective.back();
    model.trace.objective.push_back(q);
    model.trace.iterations = iter;

    if (q > 1e3 * q0) {
      std::ostringstream msg;
      msg << "training diverged at iteration " << iter << ": objective " << q
          << " exceeds 1000x initial " << q0;
      fail(ErrorCode::Training, msg.str());
    }
    if (std::abs(q - q_prev) < eps_thr) {
      model.trace.converged = true;
      break;
    }
  }

  model.theta = state.theta;
  model.train_y = std::move(state.y);
  return model;
}

Matrix predict_nonlinear_responses(const Matrix& k_cross, const Matrix& coeffs,
                                   const Matrix& train_y, double theta,
                                   const Matrix& structure) {
  if (k_cross.cols() != coeffs.rows()) {
    fail(ErrorCode::InvalidArgument,
         "cross kernel and coefficient dimensions do not match");
  }
  const Matrix y_test = k_cross * coeffs;
  if (y_test.cols() != train_y.cols()) {
    fail(ErrorCode::InvalidArgument,
         "train and test response dimensions differ");
  }
  const Matrix e_cross = cross_sq_dist(y_test, train_y);
  const Matrix j_cross = (-theta * e_cross.array()).exp().matrix();
  if (j_cross.cols() != structure.rows()) {
    fail(ErrorCode::InvalidArgument,
         "similarity and structure dimensions do not match");
  }
  return j_cross * structure;
}

}  // namespace mtoc
