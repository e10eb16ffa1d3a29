#pragma once

#include "okf/common.hpp"

namespace okf {

/// Unconstrained coordinates of a d x d SPD matrix.
///
/// Layout: the first d(d-1)/2 entries fill the strictly lower triangle of the
/// Cholesky factor row by row ((1,0), (2,0), (2,1), (3,0), ...), the last d
/// entries are the log-diagonal. In 0-based indices, L(i,j) for i>j reads
/// theta[i(i-1)/2 + j] and L(i,i) = exp(theta[d(d-1)/2 + i]).
struct CholeskyVector {
  Vec theta;
  int dim = 0;

  static constexpr int size_for(int d) { return d * (d + 1) / 2; }
  static CholeskyVector zeros(int d) { return {Vec::Zero(size_for(d)), d}; }
};

inline int offdiag_index(int i, int j) { return i * (i - 1) / 2 + j; }
inline int diag_index(int d, int i) { return d * (d - 1) / 2 + i; }

Mat build_lower(const CholeskyVector& cv);

/// L(theta) L(theta)^T. Symmetric by construction.
Mat materialize(const CholeskyVector& cv);

/// Inverse of materialize. Inputs with asymmetry up to 1e-9 (relative to the
/// largest entry) are symmetrized first; larger asymmetry is rejected.
CholeskyVector parameterize(const Mat& a);

/// diag(exp(2 theta_i)); theta lives in log-standard-deviation space.
Mat materialize_diagonal(const Vec& theta_diag);

/// Inverse of materialize_diagonal for a positive diagonal.
Vec parameterize_diagonal(const Mat& a);

/// Pulls dLoss/dA back to dLoss/dtheta. `a_bar` need not be symmetric.
Vec materialize_vjp(const CholeskyVector& cv, const Mat& a_bar);

Vec materialize_diagonal_vjp(const Vec& theta_diag, const Mat& a_bar);

/// Returns true when a Cholesky factorization of `a` succeeds.
bool is_positive_definite(const Mat& a);

/// a + eps * s * I with s = max(trace(a)/d, 1). Used where a downstream consumer
/// needs a strictly PD matrix built from a possibly singular estimate.
Mat add_jitter(const Mat& a, double eps = 1e-9);

}  // namespace okf
