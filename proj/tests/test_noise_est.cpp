#include "okf/models.hpp"
#include "okf/noise_est.hpp"
#include "okf/sim.hpp"
#include "test_helpers.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace okf;
using okf::testing::random_vec;

namespace {

LinearGaussianConfig linear_config(int n, int length, uint64_t seed) {
  LinearGaussianConfig c;
  c.F.resize(3, 3);
  c.F << 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.9;
  c.H.resize(2, 3);
  c.H << 1.0, 0.0, 0.0, 0.0, 0.0, 1.0;
  c.Q.resize(3, 3);
  c.Q << 1.0, 0.3, 0.0, 0.3, 0.5, 0.1, 0.0, 0.1, 0.2;
  c.R.resize(2, 2);
  c.R << 4.0, -1.0, -1.0, 2.0;
  c.x0_mean = Vec::Zero(3);
  c.x0_cov = Mat::Identity(3, 3);
  c.length = length;
  c.n_trajectories = n;
  c.seed = seed;
  return c;
}

double rel_fro(const Mat& a, const Mat& b) { return (a - b).norm() / b.norm(); }

double min_eig(const Mat& a) { return Eigen::SelfAdjointEigenSolver<Mat>(a).eigenvalues()(0); }

}  // namespace

TEST(CovAccumulator, MatchesTwoPassCovariance) {
  std::mt19937_64 rng(1);
  std::vector<Vec> xs;
  for (int i = 0; i < 300; ++i) xs.push_back(random_vec(rng, 3, 5.0) + Vec::Constant(3, 1e3));
  CovAccumulator acc(3);
  for (const Vec& x : xs) acc.add(x);
  Vec mean = Vec::Zero(3);
  for (const Vec& x : xs) mean += x;
  mean /= xs.size();
  Mat cov = Mat::Zero(3, 3);
  for (const Vec& x : xs) cov += (x - mean) * (x - mean).transpose();
  cov /= (xs.size() - 1);
  EXPECT_LT((acc.covariance() - cov).cwiseAbs().maxCoeff(), 1e-9);
  const Mat c = acc.covariance();
  EXPECT_EQ(c, c.transpose());
}

TEST(CovAccumulator, MergeEqualsSequential) {
  std::mt19937_64 rng(2);
  CovAccumulator all(2), a(2), b(2);
  for (int i = 0; i < 100; ++i) {
    const Vec x = random_vec(rng, 2);
    all.add(x);
    (i < 37 ? a : b).add(x);
  }
  a.merge(b);
  EXPECT_EQ(a.n, all.n);
  EXPECT_LT((a.covariance() - all.covariance()).cwiseAbs().maxCoeff(), 1e-12);
  CovAccumulator empty(2);
  empty.merge(all);
  EXPECT_LT((empty.covariance() - all.covariance()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(EstimateNoise, NoiselessDataGivesZero) {
  LinearGaussianConfig c = linear_config(5, 20, 3);
  c.Q.setZero();
  c.R.setZero();
  const SimOutput sim = simulate_linear_gaussian(c);
  const ModelSpec m = linear_model(c.F, c.H, c.x0_mean, c.x0_cov);
  const NoiseEstimate est = estimate_noise(sim.data, m);
  EXPECT_LT(est.Q.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(est.R.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(est.n_q, 5 * 19);
  EXPECT_EQ(est.n_r, 5 * 20);
}

TEST(EstimateNoise, ConvergesOnLinearGaussianData) {
  const LinearGaussianConfig base = linear_config(1, 100, 4);
  const ModelSpec m = linear_model(base.F, base.H, base.x0_mean, base.x0_cov);
  std::vector<double> eq, er;
  for (int n : {10, 100, 1000}) {
    LinearGaussianConfig c = base;
    c.n_trajectories = n;
    c.seed = 40 + n;
    const NoiseEstimate est = estimate_noise(simulate_linear_gaussian(c).data, m);
    eq.push_back(rel_fro(est.Q, c.Q));
    er.push_back(rel_fro(est.R, c.R));
  }
  EXPECT_LT(eq.back(), 0.05);
  EXPECT_LT(er.back(), 0.05);
  EXPECT_LT(eq[2], eq[0]);
  EXPECT_LT(er[2], er[0]);
}

TEST(EstimateNoise, SymmetricAndPositiveSemidefinite) {
  for (Benchmark b : kAllBenchmarks) {
    DopplerSimConfig c = doppler_preset(b);
    c.n_trajectories = 30;
    c.seed = 5;
    const Dataset ds = simulate_doppler(c).data;
    for (Baseline base : {Baseline::kf, Baseline::kfp}) {
      const NoiseEstimate est = estimate_noise(ds, doppler_model(base));
      EXPECT_EQ(est.Q, est.Q.transpose());
      EXPECT_EQ(est.R, est.R.transpose());
      EXPECT_GE(min_eig(est.Q), -1e-10 * std::max(1.0, est.Q.norm()));
      EXPECT_GE(min_eig(est.R), -1e-10 * std::max(1.0, est.R.norm()));
    }
  }
}

TEST(EstimateNoise, TrajectoryOrderDoesNotMatter) {
  DopplerSimConfig c = doppler_preset(Benchmark::free);
  c.n_trajectories = 40;
  c.seed = 6;
  const Dataset ds = simulate_doppler(c).data;
  std::vector<size_t> idx(ds.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = idx.size() - 1 - i;
  std::shuffle(idx.begin(), idx.end(), std::mt19937_64(7));
  const ModelSpec m = doppler_model(Baseline::kf);
  const NoiseEstimate a = estimate_noise(ds, m);
  const NoiseEstimate b = estimate_noise(select(ds, idx), m);
  EXPECT_LT((a.Q - b.Q).cwiseAbs().maxCoeff(), 1e-12 * a.Q.cwiseAbs().maxCoeff());
  EXPECT_LT((a.R - b.R).cwiseAbs().maxCoeff(), 1e-12 * a.R.cwiseAbs().maxCoeff());
}

// Radial noise of variance r0 with a uniformly distributed bearing has
// Cartesian covariance r0 * E[u u^T] = r0 / 2 * I.
TEST(EstimateNoise, RadialNoiseAveragesToHalfPerAxis) {
  ToyLidarConfig c;
  c.r0 = 50.0;
  c.q = 1.0;
  c.length = 100;
  c.n_trajectories = 1000;
  c.seed = 8;
  const NoiseEstimate est = estimate_noise(simulate_toy_lidar(c).data, toy_lidar_model());
  ASSERT_GE(est.n_r, 100000);
  EXPECT_NEAR(est.R(0, 0), 25.0, 0.05 * 25.0);
  EXPECT_NEAR(est.R(1, 1), 25.0, 0.05 * 25.0);
  EXPECT_LT(std::abs(est.R(0, 1)), 0.05 * 25.0);
  EXPECT_NEAR(est.Q(0, 0), 1.0, 0.05);
}

TEST(EstimateNoise, ToyDopplerRecoversSensorNoise) {
  DopplerSimConfig c = doppler_preset(Benchmark::toy);
  c.n_trajectories = 1500;
  c.seed = 9;
  const NoiseEstimate est = estimate_noise(simulate_doppler(c).data, doppler_model(Baseline::kf));
  ASSERT_GE(est.n_r, 100000);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(est.R(i, i), 1e4, 0.05 * 1e4);
  EXPECT_NEAR(est.R(3, 3), 25.0, 0.05 * 25.0);
  EXPECT_LT(est.Q.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(EstimateNoise, PolarModelMeasuresPolarFrame) {
  DopplerSimConfig c = doppler_preset(Benchmark::close);
  c.n_trajectories = 400;
  c.seed = 10;
  const SimOutput sim = simulate_doppler(c);
  ASSERT_EQ(sim.truth.r_coords, NoiseCoords::polar);
  const NoiseEstimate est = estimate_noise(sim.data, doppler_model(Baseline::kfp));
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(est.R(i, i), sim.truth.R(i, i), 0.1 * sim.truth.R(i, i));
}

TEST(EstimateNoise, TooFewResiduals) {
  LinearGaussianConfig c = linear_config(1, 1, 11);
  const SimOutput sim = simulate_linear_gaussian(c);
  EXPECT_THROW(estimate_noise(sim.data, linear_model(c.F, c.H, c.x0_mean, c.x0_cov)), InsufficientData);
}

TEST(EstimateNoise, NonFiniteResidualNamesTrajectoryAndStep) {
  LinearGaussianConfig c = linear_config(3, 10, 12);
  SimOutput sim = simulate_linear_gaussian(c);
  sim.data.trajectories[1].observations(4, 0) = NAN;
  try {
    estimate_noise(sim.data, linear_model(c.F, c.H, c.x0_mean, c.x0_cov));
    FAIL() << "expected CorruptData";
  } catch (const CorruptData& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(sim.data.trajectories[1].id), std::string::npos) << msg;
    EXPECT_NE(msg.find("4"), std::string::npos) << msg;
  }
}

TEST(Oracle, ToyDopplerHasZeroProcessNoise) {
  DopplerSimConfig c = doppler_preset(Benchmark::toy);
  c.n_trajectories = 20;
  const SimOutput sim = simulate_doppler(c);
  const NoiseEstimate o = build_oracle_params(sim.truth, doppler_model(Baseline::kf), sim.data);
  EXPECT_EQ(o.Q, Mat::Zero(6, 6));
  EXPECT_EQ(o.R, sim.truth.R);
}

TEST(Oracle, PolarTruthReturnedUnchanged) {
  LidarSimConfig c;
  c.n_trajectories = 10;
  const SimOutput sim = simulate_lidar(c);
  ASSERT_EQ(sim.truth.r_coords, NoiseCoords::polar);
  const NoiseEstimate o = build_oracle_params(sim.truth, lidar_model(Baseline::kfp), sim.data);
  EXPECT_EQ(o.R, sim.truth.R);
  EXPECT_THROW(build_oracle_params(sim.truth, lidar_model(Baseline::kf), sim.data), InvalidArgument);
}

TEST(Oracle, CloseToEstimateOnConstantVelocity) {
  DopplerSimConfig c = doppler_preset(Benchmark::const_v);
  c.n_trajectories = 1000;
  c.seed = 13;
  const SimOutput sim = simulate_doppler(c);
  const ModelSpec m = doppler_model(Baseline::kfp);
  const NoiseEstimate o = build_oracle_params(sim.truth, m, sim.data);
  const NoiseEstimate e = estimate_noise(sim.data, m);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(e.R(i, i), o.R(i, i), 0.05 * o.R(i, i));
}

TEST(NoiseTruth, JsonRoundTrip) {
  NoiseTruth t;
  t.r_coords = NoiseCoords::polar;
  t.R = Mat::Identity(2, 2) * 3.0;
  t.Q = Mat::Identity(4, 4) * 0.5;
  const NoiseTruth back = NoiseTruth::from_json(t.to_json());
  EXPECT_EQ(back.r_coords, t.r_coords);
  EXPECT_EQ(back.R, t.R);
  ASSERT_TRUE(back.Q.has_value());
  EXPECT_EQ(*back.Q, *t.Q);
}
