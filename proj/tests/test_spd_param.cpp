#include "okf/spd_param.hpp"
#include "test_helpers.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace okf;
using okf::testing::random_spd;

namespace {

double rel_fro(const Mat& a, const Mat& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

CholeskyVector random_theta(std::mt19937_64& rng, int d, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  CholeskyVector cv = CholeskyVector::zeros(d);
  for (int i = 0; i < cv.theta.size(); ++i) cv.theta(i) = n(rng);
  return cv;
}

}  // namespace

TEST(BuildLower, ZeroThetaIsIdentity) {
  EXPECT_TRUE(build_lower(CholeskyVector::zeros(2)).isApprox(Mat::Identity(2, 2)));
}

TEST(BuildLower, TwoByTwoLayout) {
  CholeskyVector cv{Vec(3), 2};
  cv.theta << 0.5, 0.0, 0.0;
  Mat expected(2, 2);
  expected << 1.0, 0.0, 0.5, 1.0;
  EXPECT_TRUE(build_lower(cv).isApprox(expected, 1e-15));
}

TEST(BuildLower, ThreeByThreeLayoutRowByRow) {
  CholeskyVector cv{Vec(6), 3};
  cv.theta << 1.0, 2.0, 3.0, 0.0, std::log(2.0), std::log(3.0);
  Mat expected(3, 3);
  expected << 1.0, 0.0, 0.0,
              1.0, 2.0, 0.0,
              2.0, 3.0, 3.0;
  EXPECT_TRUE(build_lower(cv).isApprox(expected, 1e-14));
}

TEST(BuildLower, OneByOne) {
  CholeskyVector cv{Vec::Constant(1, -0.7), 1};
  EXPECT_NEAR(build_lower(cv)(0, 0), std::exp(-0.7), 1e-15);
}

TEST(BuildLower, RejectsWrongLength) {
  CholeskyVector cv{Vec::Zero(4), 2};
  EXPECT_THROW(build_lower(cv), InvalidArgument);
}

TEST(Materialize, HandExample) {
  CholeskyVector cv{Vec(3), 2};
  cv.theta << 0.5, 0.0, 0.0;
  Mat expected(2, 2);
  expected << 1.0, 0.5, 0.5, 1.25;
  EXPECT_TRUE(materialize(cv).isApprox(expected, 1e-15));
  EXPECT_TRUE(materialize(CholeskyVector::zeros(3)).isApprox(Mat::Identity(3, 3)));
}

TEST(Materialize, AlwaysSymmetricAndPositiveDefinite) {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 1000; ++k) {
    const int d = 1 + k % 6;
    const Mat a = materialize(random_theta(rng, d, 1.5));
    EXPECT_EQ((a - a.transpose()).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_TRUE(is_positive_definite(a));
  }
}

TEST(Parameterize, IdentityGivesZeros) {
  EXPECT_EQ(parameterize(Mat::Identity(4, 4)).theta.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Parameterize, DiagonalMatrix) {
  Mat a(2, 2);
  a << 4.0, 0.0, 0.0, 9.0;
  const CholeskyVector cv = parameterize(a);
  EXPECT_NEAR(cv.theta(0), 0.0, 1e-15);
  EXPECT_NEAR(cv.theta(1), std::log(2.0), 1e-15);
  EXPECT_NEAR(cv.theta(2), std::log(3.0), 1e-15);
}

TEST(Parameterize, RoundTripBothWays) {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 200; ++k) {
    const int d = 1 + k % 6;
    const Mat a = random_spd(rng, d);
    EXPECT_LT(rel_fro(materialize(parameterize(a)), a), 1e-10);
    const CholeskyVector cv = random_theta(rng, d, 1.0);
    const CholeskyVector back = parameterize(materialize(cv));
    EXPECT_LT((back.theta - cv.theta).norm() / std::max(cv.theta.norm(), 1.0), 1e-10);
  }
}

TEST(Parameterize, SymmetrizesSmallDrift) {
  Mat a = Mat::Identity(2, 2);
  a(0, 1) = 1e-12;
  EXPECT_NO_THROW(parameterize(a));
}

TEST(Parameterize, RejectsAsymmetric) {
  Mat a = Mat::Identity(2, 2);
  a(0, 1) = 0.1;
  EXPECT_THROW(parameterize(a), InvalidArgument);
}

TEST(Parameterize, RejectsIndefinite) {
  Mat a(2, 2);
  a << 1.0, 2.0, 2.0, 1.0;
  EXPECT_THROW(parameterize(a), NotPositiveDefinite);
  EXPECT_THROW(parameterize(Mat::Zero(3, 3)), NotPositiveDefinite);
}

TEST(MaterializeDiagonal, Examples) {
  EXPECT_TRUE(materialize_diagonal(Vec::Zero(2)).isApprox(Mat::Identity(2, 2)));
  Vec t(2);
  t << std::log(10.0), 0.0;
  const Mat a = materialize_diagonal(t);
  EXPECT_NEAR(a(0, 0), 100.0, 1e-12);
  EXPECT_NEAR(a(1, 1), 1.0, 1e-15);
  EXPECT_EQ(a(0, 1), 0.0);
  EXPECT_TRUE(parameterize_diagonal(a).isApprox(t, 1e-14));
}

TEST(MaterializeDiagonal, AlwaysPositiveDefinite) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int k = 0; k < 1000; ++k) {
    Vec t(4);
    for (int i = 0; i < 4; ++i) t(i) = n(rng);
    EXPECT_TRUE(is_positive_definite(materialize_diagonal(t)));
  }
}

// Directional derivative of every entry against central differences.
TEST(MaterializeVjp, DirectionalDerivativeMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  const double h = 1e-6;
  for (int k = 0; k < 50; ++k) {
    const int d = 1 + k % 5;
    const CholeskyVector cv = random_theta(rng, d, 0.7);
    Vec dir(cv.theta.size());
    for (int i = 0; i < dir.size(); ++i) dir(i) = n(rng);
    CholeskyVector plus = cv, minus = cv;
    plus.theta += h * dir;
    minus.theta += -h * dir;
    const Mat fd = (materialize(plus) - materialize(minus)) / (2.0 * h);
    // Each entry (i,j): <vjp(E_ij), dir> is the analytic directional derivative.
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        Mat e = Mat::Zero(d, d);
        e(i, j) = 1.0;
        const double analytic = materialize_vjp(cv, e).dot(dir);
        EXPECT_NEAR(analytic, fd(i, j), 1e-5 * std::max(1.0, std::abs(fd(i, j))));
      }
    }
  }
}

TEST(MaterializeVjp, DiagonalMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  const double h = 1e-6;
  Vec t(3);
  for (int i = 0; i < 3; ++i) t(i) = n(rng);
  Mat w(3, 3);
  for (int i = 0; i < 9; ++i) w(i) = n(rng);
  const Vec g = materialize_diagonal_vjp(t, w);
  for (int i = 0; i < 3; ++i) {
    Vec tp = t, tm = t;
    tp(i) += h;
    tm(i) -= h;
    const double fd = ((materialize_diagonal(tp) - materialize_diagonal(tm)).cwiseProduct(w)).sum() / (2.0 * h);
    EXPECT_NEAR(g(i), fd, 1e-5 * std::max(1.0, std::abs(fd)));
  }
}

TEST(AddJitter, MakesSingularPositiveDefinite) {
  Mat a = Mat::Zero(3, 3);
  a(0, 0) = 5.0;
  EXPECT_FALSE(is_positive_definite(a));
  EXPECT_TRUE(is_positive_definite(add_jitter(a)));
}
