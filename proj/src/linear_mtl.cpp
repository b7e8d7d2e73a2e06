#include "linear_mtl.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>
#include <sstream>

#include "errors.hpp"

namespace mtoc {

namespace {

constexpr double kSylvesterTol = 1e-8;
constexpr double kTiny = 1e-300;

double accept_tol(double q) { return 1e-12 * std::max(1.0, std::abs(q)); }

void check_dims(const Matrix& k, const Matrix& a, const Matrix& b,
                const Matrix& r) {
  if (k.rows() != k.cols() || k.rows() != a.rows() || a.cols() != b.rows() ||
      b.rows() != b.cols() || r.rows() != k.rows() || r.cols() != b.cols()) {
    fail(ErrorCode::InvalidArgument, "inconsistent dimensions for objective");
  }
}

double nuclear_norm(const Matrix& b) {
  Eigen::JacobiSVD<Matrix> svd(b);
  return svd.singularValues().sum();
}

Matrix psd_project(const Matrix& b) {
  const Matrix sym = 0.5 * (b + b.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  const Vector lam = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

// Solves K A M + gamma A = C for A given the eigendecomposition K = V D V^T:
// each eigen-direction reduces to a T x T linear system.
class SylvesterSolver {
public:
  SylvesterSolver(const Matrix& k, const Matrix& b, double gamma)
      : gamma_(gamma), m_(b * b), es_(k) {
    if (es_.info() != Eigen::Success) {
      fail(ErrorCode::Numerical, "eigendecomposition of the kernel failed");
    }
  }

  Matrix solve(const Matrix& c) const {
    const Matrix& v = es_.eigenvectors();
    const Vector& d = es_.eigenvalues();
    const Index n = v.rows();
    const Index t = m_.rows();
    const Matrix ct = v.transpose() * c;
    Matrix at(n, t);
    const Matrix mt = m_.transpose();
    for (Index i = 0; i < n; ++i) {
      Matrix sys = d(i) * mt;
      sys.diagonal().array() += gamma_;
      Eigen::FullPivLU<Matrix> lu(sys);
      if (!lu.isInvertible()) {
        std::ostringstream msg;
        msg << "structure solve singular along eigen-direction " << i
            << " (eigenvalue " << d(i) << ")";
        fail(ErrorCode::Numerical, msg.str());
      }
      at.row(i) = lu.solve(ct.row(i).transpose()).transpose();
    }
    return v * at;
  }

  const Matrix& m() const { return m_; }

private:
  double gamma_;
  Matrix m_;
  Eigen::SelfAdjointEigenSolver<Matrix> es_;
};

}  // namespace

double linear_objective(const Matrix& k, const Matrix& a, const Matrix& b,
                        const Matrix& r, const LinearHyperparams& hp) {
  check_dims(k, a, b, r);
  const Matrix ka = k * a;
  double q = (ka * b - r).squaredNorm();
  q += hp.gamma1 * (a.transpose() * ka).trace();
  q += hp.gamma2 * b.squaredNorm();
  if (hp.gamma3 != 0.0) q += hp.gamma3 * nuclear_norm(b);
  return q;
}

Matrix solve_coeffs_sylvester(const Matrix& k, const Matrix& b,
                              const Matrix& r, double gamma1) {
  if (!(gamma1 > 0.0)) {
    fail(ErrorCode::InvalidArgument,
         "coefficient solve requires positive gamma1");
  }
  if (k.rows() != k.cols() || r.rows() != k.rows() || b.rows() != b.cols() ||
      b.rows() != r.cols()) {
    fail(ErrorCode::InvalidArgument, "inconsistent dimensions for solve");
  }

  const SylvesterSolver solver(k, b, gamma1);
  const Matrix rb = r * b;
  Matrix a = solver.solve(rb);

  const double denom = std::max(rb.norm(), kTiny);
  auto residual = [&](const Matrix& x) {
    return rb - k * x * solver.m() - gamma1 * x;
  };
  Matrix res = residual(a);
  if (res.norm() > 0.1 * kSylvesterTol * denom) {
    a += solver.solve(res);
    res = residual(a);
  }
  if (res.norm() > kSylvesterTol * denom) {
    std::ostringstream msg;
    msg << "structure-coupled solve residual " << res.norm() / denom
        << " exceeds " << kSylvesterTol;
    fail(ErrorCode::Numerical, msg.str());
  }
  return a;
}

Matrix structure_gradient(const Matrix& k, const Matrix& a, const Matrix& b,
                          const Matrix& r, const LinearHyperparams& hp) {
  check_dims(k, a, b, r);
  const Matrix ka = k * a;
  Matrix grad = 2.0 * ka.transpose() * (ka * b - r) + 2.0 * hp.gamma2 * b;
  if (hp.gamma3 != 0.0) {
    Eigen::JacobiSVD<Matrix> svd(b, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vector sv = svd.singularValues();
    const double cut = sv.size() > 0 ? 1e-12 * sv(0) : 0.0;
    Vector sign(sv.size());
    for (Index i = 0; i < sv.size(); ++i) sign(i) = sv(i) > cut ? 1.0 : 0.0;
    if (sv.size() > 0 && sv(0) > 0.0) {
      grad += hp.gamma3 * svd.matrixU() * sign.asDiagonal() *
              svd.matrixV().transpose();
    }
  }
  return grad;
}

LinearModel train_linear(const Matrix& k, const Matrix& r,
                         const LinearHyperparams& hp) {
  if (!(hp.gamma1 > 0.0) || hp.gamma2 < 0.0 || hp.gamma3 < 0.0) {
    fail(ErrorCode::InvalidArgument, "invalid regularization weights");
  }
  if (hp.eta_b < 0.0 || !(hp.epsilon > 0.0) || hp.max_outer_iters < 1) {
    fail(ErrorCode::InvalidArgument, "invalid training controls");
  }
  const Index t = r.cols();

  LinearModel model;
  model.structure = Matrix::Identity(t, t);
  model.coeffs = solve_coeffs_sylvester(k, model.structure, r, hp.gamma1);

  double q = linear_objective(k, model.coeffs, model.structure, r, hp);
  model.trace.objective.push_back(q);
  const double q0 = q;
  const double eps_thr = hp.epsilon * std::max(q0, kTiny);

  double eta = hp.eta_b;
  for (int iter = 1; iter <= hp.max_outer_iters; ++iter) {
    // Gradient step on the structure matrix.
    const Matrix grad =
        structure_gradient(k, model.coeffs, model.structure, r, hp);
    double step = eta;
    int halvings = 0;
    bool accepted = false;
    Matrix b_cand;
    double q_cand = q;
    while (true) {
      b_cand = model.structure - step * grad;
      if (hp.project_psd) b_cand = psd_project(b_cand);
      q_cand = linear_objective(k, model.coeffs, b_cand, r, hp);
      if (!hp.backtracking || q_cand <= q + accept_tol(q)) {
        accepted = true;
        break;
      }
      if (++halvings > hp.max_halvings) break;
      step *= 0.5;
    }
    model.trace.steps.push_back({iter, 'B', step, halvings, accepted});
    if (accepted) {
      model.structure = b_cand;
      q = q_cand;
      eta = halvings == 0 ? std::min(eta * 1.2, hp.eta_b * 1e3) : step;
    } else {
      std::ostringstream msg;
      msg << "iteration " << iter << ": structure step rejected after "
          << hp.max_halvings << " halvings";
      model.trace.warn(msg.str());
    }

    // Exact coefficient resolve for the updated structure. Guarded because
    // the solve equation matches the stationarity condition only for
    // symmetric structure matrices.
    const Matrix a_cand =
        solve_coeffs_sylvester(k, model.structure, r, hp.gamma1);
    const double q_a = linear_objective(k, a_cand, model.structure, r, hp);
    if (!hp.backtracking || q_a <= q + accept_tol(q)) {
      model.coeffs = a_cand;
      q = q_a;
    } else {
      std::ostringstream msg;
      msg << "iteration " << iter
          << ": coefficient resolve skipped (objective would rise by "
          << q_a - q << ")";
      model.trace.warn(msg.str());
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

  model.composed = model.coeffs * model.structure;
  return model;
}

}  // namespace mtoc
