#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "errors.hpp"
#include "kernels.hpp"
#include "linear_mtl.hpp"
#include "nonlinear_mtl.hpp"
#include "ocksr.hpp"
#include "rng.hpp"
#include "sparse_mtl.hpp"

namespace mtoc {

namespace {

constexpr double kDegenerateNorm = 1e-12;
constexpr double kDefaultFdStep = 1e-5;

struct Instance {
  Matrix k;
  Matrix r;
  std::vector<int> task_ids;
  Matrix a;        // n x T
  Matrix b_small;  // T x T (linear structure)
  Matrix b_tall;   // n x T (similarity-layer structure)
  double theta = 0.0;
  double gamma1 = 0.0;
  double gamma2 = 0.0;
  double gamma3 = 0.0;
};

Instance draw_instance(Rng& rng, int fixed_n, int fixed_t) {
  Instance inst;
  const int n = fixed_n > 0 ? fixed_n : rng.uniform_int(6, 15);
  const int t = fixed_t > 0 ? fixed_t : rng.uniform_int(2, 4);
  const int d = rng.uniform_int(3, 8);

  const Matrix x = rng.normal_matrix(n, d);
  inst.k = rbf_gram(x, median_heuristic_width(x));

  inst.task_ids.assign(static_cast<size_t>(n), 0);
  std::vector<int> sizes(static_cast<size_t>(t), 1);
  for (int extra = 0; extra < n - t; ++extra) {
    ++sizes[static_cast<size_t>(rng.uniform_int(0, t - 1))];
  }
  int row = 0;
  for (int task = 0; task < t; ++task) {
    for (int i = 0; i < sizes[static_cast<size_t>(task)]; ++i) {
      inst.task_ids[static_cast<size_t>(row++)] = task;
    }
  }
  inst.r = build_responses(inst.task_ids, t, ResponseMode::JointOneHot);

  inst.a = rng.normal_matrix(n, t, 0.3);
  inst.b_small = rng.normal_matrix(t, t, 0.7);
  inst.b_tall = rng.normal_matrix(n, t, 0.5);
  inst.theta = rng.uniform(0.2, 2.0);
  inst.gamma1 = rng.uniform(0.1, 2.0);
  inst.gamma2 = rng.uniform(0.01, 1.0);
  inst.gamma3 = rng.uniform(0.01, 1.0);
  return inst;
}

double relative_difference(const Matrix& analytic, const Matrix& numeric,
                           double* analytic_norm, double* numeric_norm) {
  *analytic_norm = analytic.norm();
  *numeric_norm = numeric.norm();
  const double denom = std::max(*analytic_norm, *numeric_norm);
  if (denom < kDegenerateNorm) return -1.0;  // degenerate, redraw
  return (analytic - numeric).norm() / denom;
}

Matrix central_difference(const std::function<double(const Matrix&)>& f,
                          const Matrix& at, double h_base) {
  Matrix grad(at.rows(), at.cols());
  Matrix point = at;
  for (Index i = 0; i < at.rows(); ++i) {
    for (Index j = 0; j < at.cols(); ++j) {
      const double h = h_base * std::max(1.0, std::abs(at(i, j)));
      point(i, j) = at(i, j) + h;
      const double above = f(point);
      point(i, j) = at(i, j) - h;
      const double below = f(point);
      point(i, j) = at(i, j);
      grad(i, j) = (above - below) / (2.0 * h);
    }
  }
  return grad;
}

double check_linear_structure(const Instance& inst, double h,
                              double* a_norm, double* n_norm) {
  LinearHyperparams hp;
  hp.gamma1 = inst.gamma1;
  hp.gamma2 = inst.gamma2;
  hp.gamma3 = inst.gamma3;
  const Matrix analytic =
      structure_gradient(inst.k, inst.a, inst.b_small, inst.r, hp);
  const Matrix numeric = central_difference(
      [&](const Matrix& b) {
        return linear_objective(inst.k, inst.a, b, inst.r, hp);
      },
      inst.b_small, h);
  return relative_difference(analytic, numeric, a_norm, n_norm);
}

double check_nonlinear_coeffs(const Instance& inst, double h,
                              double* a_norm, double* n_norm) {
  NonlinearHyperparams hp;
  hp.gamma1 = inst.gamma1;
  hp.gamma2 = inst.gamma2;
  const SecondLayerState state =
      make_second_layer(inst.k, inst.a, inst.theta);
  const Matrix dqdj =
      second_layer_gradient_tikhonov(state, inst.b_tall, inst.r, hp.gamma2);
  const Matrix analytic =
      total_gradient_a(inst.k, inst.a, state, dqdj, hp.gamma1);
  const Matrix numeric = central_difference(
      [&](const Matrix& a) {
        const SecondLayerState s = make_second_layer(inst.k, a, inst.theta);
        return nonlinear_objective(inst.k, a, s, inst.b_tall, inst.r, hp);
      },
      inst.a, h);
  return relative_difference(analytic, numeric, a_norm, n_norm);
}

double check_nonlinear_width(const Instance& inst, double h,
                             double* a_norm, double* n_norm) {
  NonlinearHyperparams hp;
  hp.gamma1 = inst.gamma1;
  hp.gamma2 = inst.gamma2;
  SecondLayerState state = make_second_layer(inst.k, inst.a, inst.theta);
  const Matrix dqdj =
      second_layer_gradient_tikhonov(state, inst.b_tall, inst.r, hp.gamma2);
  Matrix analytic(1, 1);
  analytic << theta_gradient(state, dqdj);
  Matrix at(1, 1);
  at << inst.theta;
  const Matrix numeric = central_difference(
      [&](const Matrix& theta) {
        SecondLayerState s = state;
        refresh_second_layer_theta(s, theta(0, 0));
        return nonlinear_objective(inst.k, inst.a, s, inst.b_tall, inst.r,
                                   hp);
      },
      at, h);
  return relative_difference(analytic, numeric, a_norm, n_norm);
}

double check_sparse_coeffs(const Instance& inst, double h,
                           double* a_norm, double* n_norm) {
  SparseHyperparams hp;
  hp.gamma1 = inst.gamma1;
  hp.gamma2 = inst.gamma2;
  hp.gamma3 = inst.gamma3;
  const SecondLayerState state =
      make_second_layer(inst.k, inst.a, inst.theta);
  const Matrix dqdj =
      second_layer_gradient_sparse(state, inst.b_tall, inst.r);
  const Matrix analytic =
      total_gradient_a(inst.k, inst.a, state, dqdj, hp.gamma1);
  const Matrix numeric = central_difference(
      [&](const Matrix& a) {
        const SecondLayerState s = make_second_layer(inst.k, a, inst.theta);
        return sparse_objective(inst.k, a, s, inst.b_tall, inst.r, hp);
      },
      inst.a, h);
  return relative_difference(analytic, numeric, a_norm, n_norm);
}

}  // namespace

GradCheckTarget parse_gradcheck_target(const std::string& name) {
  if (name == "linear-b") return GradCheckTarget::LinearStructure;
  if (name == "nonlinear-a") return GradCheckTarget::NonlinearCoeffs;
  if (name == "nonlinear-theta") return GradCheckTarget::NonlinearWidth;
  if (name == "sparse-a") return GradCheckTarget::SparseCoeffs;
  fail(ErrorCode::InvalidArgument,
       "unknown gradient-check target '" + name +
           "' (expected linear-b, nonlinear-a, nonlinear-theta, sparse-a)");
}

const char* gradcheck_target_name(GradCheckTarget target) {
  switch (target) {
    case GradCheckTarget::LinearStructure: return "linear-b";
    case GradCheckTarget::NonlinearCoeffs: return "nonlinear-a";
    case GradCheckTarget::NonlinearWidth: return "nonlinear-theta";
    case GradCheckTarget::SparseCoeffs: return "sparse-a";
  }
  return "unknown";
}

namespace {

GradCheckReport run_gradient_check(GradCheckTarget target, int instances,
                                   uint64_t seed, int fixed_n, int fixed_t,
                                   double h) {
  if (instances < 1) {
    fail(ErrorCode::InvalidArgument, "need at least one instance");
  }
  if (!(h > 0.0)) {
    fail(ErrorCode::InvalidArgument, "difference step must be positive");
  }
  GradCheckReport report;
  report.target = target;
  report.requested = instances;

  uint64_t draw_seed = seed;
  double total = 0.0;
  int attempts_left = instances * 10 + 100;  // defensive redraw bound
  while (static_cast<int>(report.cases.size()) < instances) {
    if (--attempts_left < 0) {
      fail(ErrorCode::Numerical,
           "too many degenerate gradient-check instances");
    }
    Rng rng(draw_seed);
    const Instance inst = draw_instance(rng, fixed_n, fixed_t);
    double analytic_norm = 0.0;
    double numeric_norm = 0.0;
    double rel = 0.0;
    switch (target) {
      case GradCheckTarget::LinearStructure:
        rel = check_linear_structure(inst, h, &analytic_norm, &numeric_norm);
        break;
      case GradCheckTarget::NonlinearCoeffs:
        rel = check_nonlinear_coeffs(inst, h, &analytic_norm, &numeric_norm);
        break;
      case GradCheckTarget::NonlinearWidth:
        rel = check_nonlinear_width(inst, h, &analytic_norm, &numeric_norm);
        break;
      case GradCheckTarget::SparseCoeffs:
        rel = check_sparse_coeffs(inst, h, &analytic_norm, &numeric_norm);
        break;
    }
    const uint64_t used_seed = draw_seed;
    ++draw_seed;
    if (rel < 0.0) {
      ++report.degenerate_redraws;
      continue;
    }
    report.cases.push_back({used_seed, rel, analytic_norm, numeric_norm});
    report.max_rel_error = std::max(report.max_rel_error, rel);
    total += rel;
  }
  report.mean_rel_error = total / static_cast<double>(report.cases.size());
  return report;
}

}  // namespace

GradCheckReport gradient_check(GradCheckTarget target, int instances,
                               uint64_t seed) {
  return run_gradient_check(target, instances, seed, 0, 0, kDefaultFdStep);
}

GradCheckReport gradient_check_sized(GradCheckTarget target, int instances,
                                     int n, int task_count, uint64_t seed,
                                     double h) {
  if (task_count < 1 || n < task_count) {
    fail(ErrorCode::InvalidArgument,
         "need task_count >= 1 and at least one sample per task");
  }
  return run_gradient_check(target, instances, seed, n, task_count, h);
}

}  // namespace mtoc
