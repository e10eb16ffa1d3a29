#include "okf/spd_param.hpp"

#include <cmath>
#include <string>

namespace okf {

namespace {

void check_shape(const CholeskyVector& cv) {
  if (cv.dim <= 0) throw InvalidArgument("cholesky vector: dimension must be positive");
  if (cv.theta.size() != CholeskyVector::size_for(cv.dim)) {
    throw InvalidArgument("cholesky vector: expected " +
                          std::to_string(CholeskyVector::size_for(cv.dim)) +
                          " parameters for d=" + std::to_string(cv.dim) + ", got " +
                          std::to_string(cv.theta.size()));
  }
}

}  // namespace

Mat build_lower(const CholeskyVector& cv) {
  check_shape(cv);
  const int d = cv.dim;
  Mat l = Mat::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < i; ++j) l(i, j) = cv.theta[offdiag_index(i, j)];
    l(i, i) = std::exp(cv.theta[diag_index(d, i)]);
  }
  return l;
}

Mat materialize(const CholeskyVector& cv) {
  const Mat l = build_lower(cv);
  Mat a = l * l.transpose();
  // The product is symmetric up to rounding in the summation order; copy the
  // lower triangle so the invariant holds exactly.
  a.triangularView<Eigen::StrictlyUpper>() = a.transpose().triangularView<Eigen::StrictlyUpper>();
  return a;
}

CholeskyVector parameterize(const Mat& a_in) {
  if (a_in.rows() != a_in.cols() || a_in.rows() == 0) {
    throw InvalidArgument("parameterize: matrix must be square and non-empty");
  }
  if (!a_in.allFinite()) throw InvalidArgument("parameterize: non-finite entries");
  const double scale = std::max(1.0, a_in.cwiseAbs().maxCoeff());
  const double asym = (a_in - a_in.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-9 * scale) {
    throw InvalidArgument("parameterize: matrix is not symmetric (max asymmetry " +
                          std::to_string(asym) + ")");
  }
  const Mat a = 0.5 * (a_in + a_in.transpose());
  Eigen::LLT<Mat> llt(a);
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("parameterize: Cholesky factorization failed");
  }
  const Mat l = llt.matrixL();
  const int d = static_cast<int>(a.rows());
  CholeskyVector cv = CholeskyVector::zeros(d);
  for (int i = 0; i < d; ++i) {
    if (!(l(i, i) > 0.0)) throw NotPositiveDefinite("parameterize: non-positive pivot");
    for (int j = 0; j < i; ++j) cv.theta[offdiag_index(i, j)] = l(i, j);
    cv.theta[diag_index(d, i)] = std::log(l(i, i));
  }
  return cv;
}

Mat materialize_diagonal(const Vec& theta_diag) {
  return (2.0 * theta_diag.array()).exp().matrix().asDiagonal();
}

Vec parameterize_diagonal(const Mat& a) {
  if (a.rows() != a.cols()) throw InvalidArgument("parameterize_diagonal: matrix must be square");
  Vec out(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    if (!(a(i, i) > 0.0)) throw NotPositiveDefinite("parameterize_diagonal: non-positive diagonal");
    out[i] = 0.5 * std::log(a(i, i));
  }
  return out;
}

Vec materialize_vjp(const CholeskyVector& cv, const Mat& a_bar) {
  const Mat l = build_lower(cv);
  const int d = cv.dim;
  // A = L L^T  =>  dL = (A_bar + A_bar^T) L, restricted to the lower triangle.
  const Mat l_bar = (a_bar + a_bar.transpose()) * l;
  Vec g = Vec::Zero(cv.theta.size());
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < i; ++j) g[offdiag_index(i, j)] = l_bar(i, j);
    g[diag_index(d, i)] = l_bar(i, i) * l(i, i);
  }
  return g;
}

Vec materialize_diagonal_vjp(const Vec& theta_diag, const Mat& a_bar) {
  return (2.0 * a_bar.diagonal().array() * (2.0 * theta_diag.array()).exp()).matrix();
}

bool is_positive_definite(const Mat& a) {
  if (a.rows() != a.cols() || !a.allFinite()) return false;
  Eigen::LLT<Mat> llt(a);
  return llt.info() == Eigen::Success;
}

Mat add_jitter(const Mat& a, double eps) {
  const double s = std::max(a.trace() / static_cast<double>(a.rows()), 1.0);
  return a + eps * s * Mat::Identity(a.rows(), a.cols());
}

}  // namespace okf
