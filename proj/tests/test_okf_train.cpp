#include "okf/models.hpp"
#include "okf/noise_est.hpp"
#include "okf/okf_train.hpp"
#include "okf/sim.hpp"
#include "test_helpers.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace okf;
using okf::testing::fd_gradient;
using okf::testing::random_spd;
using okf::testing::random_vec;
using okf::testing::rel_error;

namespace {

Dataset small_linear(std::mt19937_64& rng, int dx, int dz, int length, int n, Mat* f_out, Mat* h_out) {
  Mat f = Mat::Identity(dx, dx) + 0.2 * Mat::Random(dx, dx);
  Mat h = Mat::Random(dz, dx);
  LinearGaussianConfig c;
  c.F = f;
  c.H = h;
  c.Q = random_spd(rng, dx, 0.2);
  c.R = random_spd(rng, dz, 0.2);
  c.x0_mean = random_vec(rng, dx);
  c.x0_cov = Mat::Identity(dx, dx);
  c.length = length;
  c.n_trajectories = n;
  c.seed = rng();
  *f_out = f;
  *h_out = h;
  return simulate_linear_gaussian(c).data;
}

NoiseParams perturbed(std::mt19937_64& rng, const Mat& q, const Mat& r, Parameterization kind) {
  NoiseParams p = NoiseParams::from_matrices(q, r, kind, 1e-6);
  p.set_flat(p.flat() + random_vec(rng, p.size(), 0.3));
  return p;
}

Dataset short_doppler(Benchmark b, uint64_t seed, int n, int length) {
  DopplerSimConfig c = doppler_preset(b);
  c.n_trajectories = n;
  c.length_range = {length, length};
  c.seed = seed;
  return simulate_doppler(c).data;
}

}  // namespace

TEST(Grad, LinearFixedInitMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 8; ++trial) {
    Mat f, h;
    const Dataset ds = small_linear(rng, 2, 1, 5, 2, &f, &h);
    const ModelSpec m = linear_model(f, h, Vec::Zero(2), Mat::Identity(2, 2));
    const NoiseParams p = perturbed(rng, random_spd(rng, 2), random_spd(rng, 1), Parameterization::full_cholesky);
    const Batch b = all_of(ds);
    EXPECT_LT(rel_error(grad(p, m, b), fd_gradient(p, m, b)), 1e-4) << "trial " << trial;
  }
}

TEST(Grad, ObservationInitPredictNextAndDiagonal) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 6; ++trial) {
    Mat f, h;
    const Dataset ds = small_linear(rng, 3, 2, 6, 2, &f, &h);
    ModelSpec m = linear_model(f, Mat::Identity(2, 3), Vec::Zero(3), Mat());
    m.init.mode = InitMode::from_first_observation;
    m.init.p0_scale = 10.0;
    m.init.observed = {{0, 0}, {1, 1}};
    m.objective = trial % 2 == 0 ? Objective::predict_next : Objective::filter_current;
    m.joseph_form = trial % 3 == 0;
    Dataset d2 = ds;
    for (auto& tr : d2.trajectories) tr.observations = tr.states.leftCols(2) + 0.5 * SeqMat::Random(tr.length(), 2);
    d2.dim_z = 2;
    const auto kind = trial < 3 ? Parameterization::diagonal : Parameterization::full_cholesky;
    const NoiseParams p = perturbed(rng, random_spd(rng, 3), random_spd(rng, 2), kind);
    const Batch b = all_of(d2);
    EXPECT_LT(rel_error(grad(p, m, b), fd_gradient(p, m, b)), 1e-4) << "trial " << trial;
  }
}

TEST(Grad, DopplerVariantsMatchFiniteDifferences) {
  int trial = 0;
  for (Benchmark bench : {Benchmark::toy, Benchmark::const_v}) {
    for (Baseline base : {Baseline::kf, Baseline::kfp, Baseline::ekf, Baseline::ekfp}) {
      std::mt19937_64 rng(100 + trial);
      const Dataset ds = short_doppler(bench, 7 + trial, 2, 6);
      const ModelSpec m = doppler_model(base);
      const NoiseEstimate est = estimate_noise(ds, m);
      const Mat q = est.Q + 50.0 * Mat::Identity(6, 6);
      const NoiseParams p = perturbed(rng, q, est.R, Parameterization::full_cholesky);
      const Batch b = all_of(ds);
      EXPECT_LT(rel_error(grad(p, m, b), fd_gradient(p, m, b)), 1e-4)
          << to_string(bench) << "/" << to_string(base);
      ++trial;
    }
  }
}

TEST(Grad, LidarPolarMatchesFiniteDifferences) {
  LidarSimConfig c;
  c.n_trajectories = 2;
  c.length_range = {6, 6};
  c.seed = 5;
  const Dataset ds = simulate_lidar(c).data;
  std::mt19937_64 rng(3);
  for (Baseline base : {Baseline::kf, Baseline::kfp}) {
    const ModelSpec m = lidar_model(base);
    const NoiseEstimate est = estimate_noise(ds, m);
    const NoiseParams p = perturbed(rng, est.Q, est.R + 0.01 * Mat::Identity(2, 2), Parameterization::full_cholesky);
    const Batch b = all_of(ds);
    EXPECT_LT(rel_error(grad(p, m, b), fd_gradient(p, m, b)), 1e-4) << to_string(base);
  }
}

TEST(Grad, ZeroWeightedLossHasZeroGradient) {
  std::mt19937_64 rng(4);
  Mat f, h;
  const Dataset ds = small_linear(rng, 2, 1, 5, 2, &f, &h);
  ModelSpec m = linear_model(f, h, Vec::Zero(2), Mat::Identity(2, 2));
  m.loss_mask = Mask::Constant(2, false);
  const NoiseParams p = NoiseParams::identity(2, 1, Parameterization::full_cholesky);
  const Vec g = grad(p, m, all_of(ds));
  EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(batch_loss(p, m, all_of(ds)), 0.0);
}

TEST(BatchLoss, NoiselessExactModelGivesZero) {
  LinearGaussianConfig c;
  c.F = constant_velocity_transition(1);
  c.H = Mat::Identity(2, 2);
  c.Q = Mat::Zero(2, 2);
  c.R = Mat::Zero(2, 2);
  c.x0_mean = Vec::Zero(2);
  c.x0_cov = Mat::Zero(2, 2);
  c.x0_mean << 1.0, 2.0;
  c.length = 10;
  c.n_trajectories = 1;
  const Dataset ds = simulate_linear_gaussian(c).data;
  ModelSpec m = linear_model(c.F, c.H, c.x0_mean, 1e-6 * Mat::Identity(2, 2));
  const NoiseParams p = NoiseParams::from_matrices(1e-8 * Mat::Identity(2, 2), Mat::Identity(2, 2),
                                                   Parameterization::full_cholesky);
  EXPECT_NEAR(batch_loss(p, m, all_of(ds)), 0.0, 1e-20);
}

TEST(BatchLoss, InvariantToBatchOrder) {
  const Dataset ds = short_doppler(Benchmark::toy, 1, 6, 12);
  const ModelSpec m = doppler_model(Baseline::kf);
  const NoiseEstimate est = estimate_noise(ds, m);
  const NoiseParams p = NoiseParams::from_matrices(est.Q, est.R, Parameterization::full_cholesky);
  Batch b = all_of(ds);
  const double l1 = batch_loss(p, m, b);
  std::reverse(b.begin(), b.end());
  EXPECT_NEAR(batch_loss(p, m, b), l1, 1e-9 * l1);
}

TEST(BatchLoss, EmptyBatchRejected) {
  const ModelSpec m = toy_lidar_model();
  EXPECT_THROW(batch_loss(NoiseParams::identity(2, 2, Parameterization::full_cholesky), m, {}), InvalidArgument);
}

TEST(BatchLoss, PredictNextIgnoresCurrentObservation) {
  const Dataset ds = short_doppler(Benchmark::toy, 2, 1, 10);
  ModelSpec m = doppler_model(Baseline::kf);
  m.objective = Objective::predict_next;
  const NoiseEstimate est = estimate_noise(ds, m);
  const Mat q = est.Q + Mat::Identity(6, 6);
  const auto& tr = ds.trajectories[0];
  const Rollout base = rollout(m, q, est.R, tr.observations, false);
  for (int t = 1; t < tr.length(); ++t) {
    SeqMat obs = tr.observations;
    obs.row(t) *= 1.7;
    const Rollout changed = rollout(m, q, est.R, obs, false);
    EXPECT_EQ(changed.outputs[static_cast<size_t>(t)].mean, base.outputs[static_cast<size_t>(t)].mean) << t;
  }
}

TEST(Adam, FirstStepMovesByLearningRateAgainstSign) {
  AdamState st(3);
  Vec p = Vec::Zero(3);
  Vec g(3);
  g << 2.0, -0.5, 1e-3;
  adam_step(st, p, g, 0.01);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(p[i], -0.01 * std::copysign(1.0, g[i]), 1e-6);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  AdamState st(2);
  Vec p(2);
  p << 0.3, -0.7;
  const Vec before = p;
  adam_step(st, p, Vec::Zero(2), 0.1);
  EXPECT_EQ(p, before);
}

TEST(Adam, RepeatedGradientDoesNotGrowStep) {
  AdamState st(1);
  Vec p = Vec::Zero(1);
  const Vec g = Vec::Constant(1, 3.0);
  adam_step(st, p, g, 0.01);
  const double first = std::abs(p[0]);
  const double before = p[0];
  adam_step(st, p, g, 0.01);
  EXPECT_LE(std::abs(p[0] - before), first + 1e-15);
}

TEST(Adam, NonFiniteGradientRejected) {
  AdamState st(1);
  Vec p = Vec::Zero(1);
  EXPECT_THROW(adam_step(st, p, Vec::Constant(1, std::nan("")), 0.01), NumericFailure);
}

TEST(Train, ProgressOnFixedBatchForEveryBenchmark) {
  for (Benchmark bench : kAllBenchmarks) {
    const Dataset ds = short_doppler(bench, 21, 10, 30);
    const ModelSpec m = doppler_model(Baseline::kf);
    TrainConfig cfg;
    cfg.batch_size = 10;
    cfg.learning_rate = 1e-3;
    cfg.epochs = 200;
    cfg.init = InitKind::cold_start;
    const TrainResult res = train(ds, m, cfg);
    ASSERT_EQ(res.trace.loss.size(), 200u);
    const double after = batch_loss(res.params, m, all_of(ds)) / static_cast<double>(scored_steps(m, all_of(ds)));
    EXPECT_LT(after, 0.95 * res.trace.loss.front()) << to_string(bench);
  }
}

TEST(Train, GradientShrinksNearLocalMinimum) {
  const Dataset ds = short_doppler(Benchmark::toy, 31, 4, 20);
  const ModelSpec m = doppler_model(Baseline::kf);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.learning_rate = 0.02;
  cfg.epochs = 3000;
  cfg.parameterization = Parameterization::diagonal;
  const TrainResult res = train(ds, m, cfg);
  const Vec g0 = grad(NoiseParams::from_matrices(estimate_noise(ds, m).Q, estimate_noise(ds, m).R,
                                                 Parameterization::diagonal),
                      m, all_of(ds));
  const Vec g1 = grad(res.params, m, all_of(ds));
  EXPECT_LT(g1.norm(), 1e-3 * g0.norm());
}

TEST(Train, DeterministicForFixedSeed) {
  const Dataset ds = short_doppler(Benchmark::close, 41, 30, 20);
  const ModelSpec m = doppler_model(Baseline::kfp);
  TrainConfig cfg;
  cfg.seed = 9;
  const TrainResult a = train(ds, m, cfg);
  const TrainResult b = train(ds, m, cfg);
  ASSERT_EQ(a.trace.loss.size(), b.trace.loss.size());
  for (size_t i = 0; i < a.trace.loss.size(); ++i) EXPECT_NEAR(a.trace.loss[i], b.trace.loss[i], 1e-10);
  EXPECT_EQ(a.params.flat(), b.params.flat());
}

TEST(Train, StepCountAndSpdAfterEveryStep) {
  const Dataset ds = short_doppler(Benchmark::const_a, 51, 23, 15);
  const ModelSpec m = doppler_model(Baseline::ekfp);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.keep_snapshots = true;
  const TrainResult res = train(ds, m, cfg);
  EXPECT_EQ(res.trace.loss.size(), 2u * 3u);
  for (const Vec& s : res.trace.snapshots) {
    NoiseParams p = res.params;
    p.set_flat(s);
    EXPECT_TRUE(is_positive_definite(p.Q()));
    EXPECT_TRUE(is_positive_definite(p.R()));
  }
}

TEST(Train, ValidationSnapshotIsTheBestOne) {
  const Dataset ds = short_doppler(Benchmark::toy, 61, 40, 20);
  const ModelSpec m = doppler_model(Baseline::kf);
  TrainConfig cfg;
  cfg.validation_fraction = 0.25;
  cfg.validation_every = 1;
  cfg.epochs = 3;
  const TrainResult res = train(ds, m, cfg);
  ASSERT_FALSE(res.trace.validation.empty());
  double best = res.trace.validation.front().second;
  for (const auto& [step, v] : res.trace.validation) best = std::min(best, v);
  for (const auto& [step, v] : res.trace.validation) {
    if (step == res.trace.selected_step) EXPECT_EQ(v, best);
  }
}

TEST(Train, RejectsOversizedBatch) {
  const Dataset ds = short_doppler(Benchmark::toy, 1, 5, 10);
  TrainConfig cfg;
  cfg.batch_size = 6;
  EXPECT_THROW(train(ds, doppler_model(Baseline::kf), cfg), InvalidArgument);
}

TEST(Train, DivergenceCarriesTrace) {
  const Dataset ds = short_doppler(Benchmark::toy, 1, 20, 10);
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::sgd;
  cfg.learning_rate = 10.0;
  cfg.epochs = 5;
  cfg.divergence_factor = 1.5;
  try {
    train(ds, doppler_model(Baseline::kf), cfg);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_FALSE(e.trace().loss.empty());
  } catch (const NumericFailure&) {
    SUCCEED();
  }
}

TEST(Train, ConfigJsonRoundTrip) {
  TrainConfig c;
  c.batch_size = 7;
  c.learning_rate = 0.003;
  c.parameterization = Parameterization::diagonal;
  c.init = InitKind::cold_start;
  c.seed = 123;
  const TrainConfig d = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(d.to_json(), c.to_json());
}
