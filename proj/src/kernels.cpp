#include "kernels.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "errors.hpp"

namespace mtoc {

namespace {

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) {
    fail(ErrorCode::InvalidArgument,
         std::string(what) + " contains non-finite entries");
  }
}

}  // namespace

SquaredDistances pairwise_sq_dist(const Matrix& y) {
  require_finite(y, "input matrix");
  const Index n = y.rows();
  Matrix f = Matrix::Zero(n, n);
  f.selfadjointView<Eigen::Lower>().rankUpdate(y);
  f = f.selfadjointView<Eigen::Lower>();

  Matrix e(n, n);
  for (Index i = 0; i < n; ++i) {
    e(i, i) = 0.0;
    for (Index j = i + 1; j < n; ++j) {
      const double d = f(i, i) + f(j, j) - 2.0 * f(i, j);
      const double clamped = d > 0.0 ? d : 0.0;
      e(i, j) = clamped;
      e(j, i) = clamped;
    }
  }
  return {std::move(e), std::move(f)};
}

Matrix cross_sq_dist(const Matrix& u, const Matrix& v) {
  require_finite(u, "input matrix");
  require_finite(v, "input matrix");
  if (u.cols() != v.cols()) {
    fail(ErrorCode::InvalidArgument, "cross_sq_dist: column counts differ");
  }
  const Vector u_sq = u.rowwise().squaredNorm();
  const Vector v_sq = v.rowwise().squaredNorm();
  Matrix e = (-2.0 * u * v.transpose());
  e.colwise() += u_sq;
  e.rowwise() += v_sq.transpose();
  return e.cwiseMax(0.0);
}

Matrix rbf_gram(const Matrix& x, double sigma) {
  require_finite(x, "feature matrix");
  if (!(sigma > 0.0)) {
    fail(ErrorCode::InvalidArgument, "rbf width must be positive");
  }
  const SquaredDistances d = pairwise_sq_dist(x);
  return (-d.e / (2.0 * sigma * sigma)).array().exp().matrix();
}

Matrix rbf_gram_cross(const Matrix& a, const Matrix& b, double sigma) {
  if (!(sigma > 0.0)) {
    fail(ErrorCode::InvalidArgument, "rbf width must be positive");
  }
  const Matrix e = cross_sq_dist(a, b);
  return (-e / (2.0 * sigma * sigma)).array().exp().matrix();
}

Matrix second_layer_kernel(const Matrix& e, double theta,
                           TrainingTrace* trace) {
  require_finite(e, "distance matrix");
  double used = theta;
  if (theta < kThetaFloor) {
    used = kThetaFloor;
    if (trace != nullptr) {
      std::ostringstream msg;
      msg << "theta " << theta << " below floor " << kThetaFloor
          << ", clamped";
      trace->warn(msg.str());
    }
  }
  return (-used * e).array().exp().matrix();
}

double median_heuristic_width(const Matrix& x) {
  if (x.rows() < 2) {
    fail(ErrorCode::InvalidArgument,
         "median heuristic needs at least two samples");
  }
  const SquaredDistances d = pairwise_sq_dist(x);
  std::vector<double> dists;
  dists.reserve(static_cast<size_t>(x.rows()) * (x.rows() - 1) / 2);
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = i + 1; j < x.rows(); ++j) {
      if (d.e(i, j) > 0.0) dists.push_back(d.e(i, j));
    }
  }
  if (dists.empty()) {
    fail(ErrorCode::DegenerateData,
         "all pairwise distances are zero, kernel width undefined");
  }
  std::sort(dists.begin(), dists.end());
  const size_t m = dists.size();
  const double median = (m % 2 == 1)
                            ? dists[m / 2]
                            : 0.5 * (dists[m / 2 - 1] + dists[m / 2]);
  return std::sqrt(median / 2.0);
}

}  // namespace mtoc
