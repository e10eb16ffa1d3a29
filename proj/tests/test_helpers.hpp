#pragma once

#include "okf/data.hpp"
#include "okf/okf_train.hpp"

#include <random>

namespace okf::testing {

inline Mat random_spd(std::mt19937_64& rng, int d, double floor = 0.1) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat a(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) a(i, j) = n(rng);
  }
  Mat s = a * a.transpose() + floor * Mat::Identity(d, d);
  symmetrize(s);
  return s;
}

inline Vec random_vec(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = d(rng);
  return v;
}

/// Central differences of batch_loss with respect to params.flat().
inline Vec fd_gradient(const NoiseParams& p, const ModelSpec& m, const Batch& b, double h = 1e-5) {
  const Vec theta = p.flat();
  Vec g(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    NoiseParams plus = p, minus = p;
    Vec tp = theta, tm = theta;
    tp[i] += h;
    tm[i] -= h;
    plus.set_flat(tp);
    minus.set_flat(tm);
    g[i] = (batch_loss(plus, m, b) - batch_loss(minus, m, b)) / (2.0 * h);
  }
  return g;
}

inline double rel_error(const Vec& g, const Vec& ref) {
  const double scale = ref.cwiseAbs().maxCoeff();
  return (g - ref).cwiseAbs().maxCoeff() / (scale > 0.0 ? scale : 1.0);
}

}  // namespace okf::testing
