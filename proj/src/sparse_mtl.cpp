#include "sparse_mtl.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "errors.hpp"
#include "kernels.hpp"
#include "ocksr.hpp"
#include "rng.hpp"

namespace mtoc {

namespace {

constexpr double kTiny = 1e-300;
constexpr int kPowerIters = 50;
constexpr double kLipschitzMargin = 1.05;

double accept_tol(double q) { return 1e-12 * std::max(1.0, std::abs(q)); }

double clamp_theta(double theta) {
  return std::min(std::max(theta, kThetaFloor), kThetaCeil);
}

void validate_hyperparams(const SparseHyperparams& hp) {
  if (!(hp.gamma1 > 0.0) || hp.gamma2 < 0.0 || hp.gamma3 < 0.0) {
    fail(ErrorCode::InvalidArgument, "invalid regularization weights");
  }
  if (hp.eta_a < 0.0 || hp.eta_theta < 0.0 || !(hp.epsilon > 0.0) ||
      hp.max_outer_iters < 1 || hp.prox_max_iters < 1 ||
      !(hp.prox_tol > 0.0)) {
    fail(ErrorCode::InvalidArgument, "invalid training controls");
  }
}

double group_penalty(const Matrix& b, const SparseHyperparams& hp) {
  double total = 0.0;
  for (Index t = 0; t < b.cols(); ++t) {
    const double norm = b.col(t).norm();
    total += hp.squared_group ? norm * norm : norm;
  }
  return total;
}

double penalized_fit(const Matrix& j, const Matrix& b, const Matrix& r,
                     const SparseHyperparams& hp) {
  return (j * b - r).squaredNorm() + hp.gamma2 * b.lpNorm<1>() +
         hp.gamma3 * group_penalty(b, hp);
}

// Top eigenvalue of the symmetric nonnegative J by 50 power-iteration steps.
double top_eigenvalue(const Matrix& j) {
  const Index n = j.rows();
  Rng rng(0x5ca1ab1eULL);
  Vector v = rng.normal_vector(n);
  double norm = v.norm();
  if (norm == 0.0) v.setOnes(), norm = v.norm();
  v /= norm;
  double lambda = 0.0;
  for (int it = 0; it < kPowerIters; ++it) {
    Vector w = j * v;
    const double wn = w.norm();
    if (wn <= 0.0) return 0.0;
    lambda = v.dot(w);
    v = w / wn;
  }
  return std::max(lambda, 0.0);
}

}  // namespace

double sparse_objective(const Matrix& k, const Matrix& a,
                        const SecondLayerState& state, const Matrix& b,
                        const Matrix& r, const SparseHyperparams& hp) {
  if (state.j.rows() != r.rows() || b.rows() != state.j.cols() ||
      b.cols() != r.cols() || a.rows() != k.rows()) {
    fail(ErrorCode::InvalidArgument, "inconsistent dimensions for objective");
  }
  double q = (state.j * b - r).squaredNorm();
  q += hp.gamma1 * (a.transpose() * k * a).trace();
  q += hp.gamma2 * b.lpNorm<1>();
  q += hp.gamma3 * group_penalty(b, hp);
  return q;
}

Matrix prox_sparse_group(const Matrix& v, double t1, double t2,
                         bool squared_group) {
  if (t1 < 0.0 || t2 < 0.0) {
    fail(ErrorCode::InvalidArgument, "prox thresholds must be nonnegative");
  }
  Matrix u =
      ((v.array().abs() - t1).max(0.0) * v.array().sign()).matrix();
  if (t2 == 0.0) return u;
  for (Index t = 0; t < u.cols(); ++t) {
    if (squared_group) {
      u.col(t) /= 1.0 + 2.0 * t2;
      continue;
    }
    const double norm = u.col(t).norm();
    if (norm <= t2) {
      u.col(t).setZero();
    } else {
      u.col(t) *= 1.0 - t2 / norm;
    }
  }
  return u;
}

Matrix second_layer_gradient_sparse(const SecondLayerState& state,
                                    const Matrix& b, const Matrix& r) {
  return 2.0 * (state.j * b - r) * b.transpose();
}

SparseSolveResult solve_b_sparse(const Matrix& j, const Matrix& r,
                                 const SparseHyperparams& hp,
                                 const Matrix* warm_start) {
  if (j.rows() != j.cols() || j.rows() != r.rows()) {
    fail(ErrorCode::InvalidArgument,
         "similarity and response dimensions do not match");
  }
  if (warm_start != nullptr &&
      (warm_start->rows() != j.cols() || warm_start->cols() != r.cols())) {
    fail(ErrorCode::InvalidArgument, "warm start has the wrong shape");
  }

  const double top = top_eigenvalue(j);
  const double lipschitz = 2.0 * top * top * kLipschitzMargin;
  SparseSolveResult out;
  if (lipschitz <= 0.0) {
    // J = 0: the fit term is constant and the penalties are minimized at 0.
    out.b = Matrix::Zero(j.cols(), r.cols());
    out.converged = true;
    out.objective = penalized_fit(j, out.b, r, hp);
    out.report = sparsity_report(out.b);
    return out;
  }
  const double step = 1.0 / lipschitz;
  const double t1 = step * hp.gamma2;
  const double t2 = step * hp.gamma3;

  Matrix x = warm_start != nullptr ? *warm_start
                                   : Matrix::Zero(j.cols(), r.cols());
  Matrix y = x;
  double fx = penalized_fit(j, x, r, hp);
  double momentum = 1.0;

  auto prox_step = [&](const Matrix& point) {
    const Matrix grad = 2.0 * j * (j * point - r);
    return prox_sparse_group(point - step * grad, t1, t2, hp.squared_group);
  };

  for (int it = 1; it <= hp.prox_max_iters; ++it) {
    Matrix z = prox_step(y);
    double fz = penalized_fit(j, z, r, hp);
    if (fz > fx) {
      // Momentum overshot: fall back to a plain proximal step from the best
      // iterate, which the step bound guarantees not to increase.
      momentum = 1.0;
      z = prox_step(x);
      fz = penalized_fit(j, z, r, hp);
      if (fz > fx) {
        // Step bound violated only by round-off at stationarity; stop.
        out.iterations = it;
        out.converged = true;
        break;
      }
      ++out.restarts;
    }
    const double change = std::abs(fx - fz);
    const double scale = std::max(std::abs(fx), kTiny);
    const double next_momentum =
        0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
    y = z + ((momentum - 1.0) / next_momentum) * (z - x);
    momentum = next_momentum;
    x = std::move(z);
    fx = fz;
    out.iterations = it;
    if (change < hp.prox_tol * scale) {
      out.converged = true;
      break;
    }
  }

  out.b = std::move(x);
  out.objective = fx;
  out.report = sparsity_report(out.b);
  return out;
}

SparsityReport sparsity_report(const Matrix& b) {
  SparsityReport report;
  const Index total = b.size();
  Index nonzero = 0;
  for (Index t = 0; t < b.cols(); ++t) {
    const double norm = b.col(t).norm();
    report.column_norms.push_back(norm);
    if (norm == 0.0) report.zero_columns.push_back(static_cast<int>(t));
    for (Index i = 0; i < b.rows(); ++i) {
      if (b(i, t) != 0.0) ++nonzero;
    }
  }
  report.nonzero_fraction =
      total > 0 ? static_cast<double>(nonzero) / static_cast<double>(total)
                : 0.0;
  return report;
}

SparseModel train_sparse(const Matrix& k, const Matrix& r,
                         const std::vector<int>& task_ids,
                         const SparseHyperparams& hp) {
  validate_hyperparams(hp);
  FirstLayerInit first = init_first_layer(k, r, task_ids, hp.gamma1);
  const int task_count = static_cast<int>(r.cols());

  SparseModel model;
  model.coeffs = std::move(first.a);
  model.theta = first.theta;
  SecondLayerState state = std::move(first.state);
  SparseSolveResult init_solve =
      solve_b_sparse(block_ones_kernel(task_ids, task_count), r, hp);
  model.structure = std::move(init_solve.b);
  model.report_history.push_back(std::move(init_solve.report));

  double q = sparse_objective(k, model.coeffs, state, model.structure, r, hp);
  model.trace.objective.push_back(q);
  const double q0 = q;
  const double eps_thr = hp.epsilon * std::max(q0, kTiny);

  double eta_a = hp.eta_a;
  double eta_theta = hp.eta_theta;
  for (int iter = 1; iter <= hp.max_outer_iters; ++iter) {
    // Coefficient block.
    {
      const Matrix dqdj =
          second_layer_gradient_sparse(state, model.structure, r);
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
        q_cand = sparse_objective(k, a_cand, state_cand, model.structure, r,
                                  hp);
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

    // Width block.
    {
      const Matrix dqdj =
          second_layer_gradient_sparse(state, model.structure, r);
      const double grad = theta_gradient(state, dqdj);
      double step = eta_theta;
      int halvings = 0;
      bool accepted = false;
      SecondLayerState state_cand = state;
      double q_cand = q;
      while (true) {
        const double theta_cand = clamp_theta(state.theta - step * grad);
        refresh_second_layer_theta(state_cand, theta_cand);
        q_cand = sparse_objective(k, model.coeffs, state_cand,
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
        model.theta = state_cand.theta;
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

    // Structure block: warm-started proximal solve; its monotone restarts
    // keep the result no worse than the warm start, so the trace cannot rise.
    {
      SparseSolveResult solved =
          solve_b_sparse(state.j, r, hp, &model.structure);
      const double q_cand =
          sparse_objective(k, model.coeffs, state, solved.b, r, hp);
      if (!solved.converged) {
        std::ostringstream msg;
        msg << "iteration " << iter << ": proximal solve hit the "
            << hp.prox_max_iters << "-iteration cap";
        model.trace.warn(msg.str());
      }
      if (!hp.backtracking || q_cand <= q + accept_tol(q)) {
        model.structure = std::move(solved.b);
        q = q_cand;
        model.report_history.push_back(std::move(solved.report));
      } else {
        std::ostringstream msg;
        msg << "iteration " << iter
            << ": structure solve skipped (objective would rise by "
            << q_cand - q << ")";
        model.trace.warn(msg.str());
        model.report_history.push_back(sparsity_report(model.structure));
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

  model.train_y = std::move(state.y);
  model.report = sparsity_report(model.structure);
  return model;
}

}  // namespace mtoc
