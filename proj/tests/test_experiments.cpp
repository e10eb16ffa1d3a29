#include "okf/experiments.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <unistd.h>

using namespace okf;
namespace fs = std::filesystem;

namespace {

TrainConfig quick_train() {
  TrainConfig t;
  t.epochs = 2;
  t.batch_size = 10;
  return t;
}

const CellResult* find_cell(const std::vector<CellResult>& cells, const std::string& bench, const std::string& base,
                            const std::string& tuning) {
  for (const auto& c : cells) {
    if (c.benchmark == bench && c.baseline == base && c.tuning == tuning) return &c;
  }
  return nullptr;
}

}  // namespace

TEST(Split, TrainAndTestAreIndependentStreams) {
  const SplitData a = simulate_benchmark(Benchmark::const_v, 20, 10, 1);
  const SplitData b = simulate_benchmark(Benchmark::const_v, 30, 10, 1);
  EXPECT_TRUE(a.test == b.test);
  for (size_t i = 0; i < a.train.size(); ++i) EXPECT_TRUE(a.train.trajectories[i] == b.train.trajectories[i]);
  for (const auto& tr : a.train.trajectories) {
    for (const auto& te : a.test.trajectories) EXPECT_NE(tr.id, te.id);
  }
  EXPECT_EQ(a.family, "doppler");
}

TEST(Oracle, AvailabilityRules) {
  const SplitData toy = simulate_benchmark(Benchmark::toy, 5, 5, 2);
  const SplitData close = simulate_benchmark(Benchmark::close, 5, 5, 2);
  EXPECT_FALSE(oracle_available(toy.name, doppler_model(Baseline::kf), toy.truth));
  EXPECT_TRUE(oracle_available(close.name, doppler_model(Baseline::kfp), close.truth));
  EXPECT_FALSE(oracle_available(close.name, doppler_model(Baseline::kf), close.truth));
}

TEST(Matrix, CellsAndReferences) {
  MatrixConfig cfg;
  cfg.benchmarks = {Benchmark::toy, Benchmark::close};
  cfg.baselines = {Baseline::kf, Baseline::kfp};
  cfg.n_train = 30;
  cfg.n_test = 30;
  cfg.train = quick_train();
  const auto cells = run_matrix(cfg);
  // toy: 2 baselines x 2 tunings; close: kf 2 + kfp 3 (oracle).
  EXPECT_EQ(cells.size(), 9u);
  for (const auto& c : cells) {
    EXPECT_TRUE(c.ok) << c.error;
    EXPECT_EQ(c.report.n, 30);
    if (c.tuning != "estimated") {
      EXPECT_EQ(c.reference, c.baseline + "/estimated");
      EXPECT_TRUE(c.vs_reference.has_value());
    }
  }
  EXPECT_NE(find_cell(cells, "close", "kfp", "oracle"), nullptr);
  EXPECT_EQ(find_cell(cells, "toy", "kfp", "oracle"), nullptr);
}

TEST(Matrix, FailingCellsDoNotStopTheGrid) {
  MatrixConfig cfg;
  cfg.benchmarks = {Benchmark::toy};
  cfg.baselines = {Baseline::kf};
  cfg.tunings = {Tuning::estimated, Tuning::optimized};
  cfg.n_train = 5;
  cfg.n_test = 5;
  cfg.train = quick_train();  // batch 10 > 5 training trajectories
  const auto cells = run_matrix(cfg);
  ASSERT_EQ(cells.size(), 2u);
  EXPECT_TRUE(cells[0].ok);
  EXPECT_FALSE(cells[1].ok);
  EXPECT_FALSE(cells[1].error.empty());
}

TEST(Matrix, Deterministic) {
  MatrixConfig cfg;
  cfg.benchmarks = {Benchmark::const_a};
  cfg.baselines = {Baseline::ekf};
  cfg.tunings = {Tuning::optimized};
  cfg.n_train = 20;
  cfg.n_test = 20;
  cfg.train = quick_train();
  const auto a = run_matrix(cfg);
  const auto b = run_matrix(cfg);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0].report.per_trajectory_mse, b[0].report.per_trajectory_mse);
  EXPECT_EQ(a[0].Q, b[0].Q);
}

TEST(Sweep, FullSizeReproducesMatrixCell) {
  SweepConfig sc;
  sc.benchmark = Benchmark::const_v;
  sc.baseline = Baseline::kf;
  sc.sizes = {10, 40};
  sc.n_test = 25;
  sc.seed = 3;
  sc.train = quick_train();
  const auto sweep = train_size_sweep(sc);
  ASSERT_EQ(sweep.size(), 2u);
  EXPECT_EQ(sweep[0].size, 10);
  EXPECT_EQ(sweep[0].okf.n_train, 10);

  MatrixConfig mc;
  mc.benchmarks = {Benchmark::const_v};
  mc.baselines = {Baseline::kf};
  mc.tunings = {Tuning::estimated, Tuning::optimized};
  mc.seeds = {3};
  mc.n_train = 40;
  mc.n_test = 25;
  mc.train = quick_train();
  const auto cells = run_matrix(mc);
  ASSERT_EQ(cells.size(), 2u);
  EXPECT_EQ(sweep[1].kf.report.per_trajectory_mse, cells[0].report.per_trajectory_mse);
  EXPECT_EQ(sweep[1].okf.report.per_trajectory_mse, cells[1].report.per_trajectory_mse);
}

TEST(Sweep, MinStepsRaisesEpochsForSmallSubsets) {
  SweepConfig sc;
  sc.benchmark = Benchmark::toy;
  sc.sizes = {10};
  sc.n_test = 10;
  sc.train = quick_train();
  const auto plain = train_size_sweep(sc);
  sc.min_steps = 30;
  const auto longer = train_size_sweep(sc);
  EXPECT_NE(plain[0].okf.Q, longer[0].okf.Q);
  EXPECT_EQ(plain[0].kf.Q, longer[0].kf.Q);
}

TEST(Generalization, ShapeAndSummary) {
  GeneralizationConfig gc;
  gc.train_benchmarks = {Benchmark::toy, Benchmark::close};
  gc.test_benchmarks = {Benchmark::toy, Benchmark::close, Benchmark::const_v};
  gc.n_train = 30;
  gc.n_test = 20;
  gc.train = quick_train();
  const auto g = generalization_matrix(gc);
  ASSERT_EQ(g.log_ratio.size(), 2u);
  ASSERT_EQ(g.log_ratio[0].size(), 3u);
  EXPECT_EQ(g.cells.size(), 12u);
  for (size_t i = 0; i < 2; ++i) {
    double s = 0.0;
    for (double v : g.log_ratio[i]) s += v;
    EXPECT_NEAR(g.summary[i], s / 3.0, 1e-12);
  }
}

TEST(Generalization, SummaryIgnoresTestOrderAndFailures) {
  std::vector<std::vector<double>> m = {{0.1, -0.2, 0.4}, {NAN, 1.0, 3.0}};
  std::vector<std::vector<double>> p = {{0.4, 0.1, -0.2}, {3.0, NAN, 1.0}};
  const auto a = row_mean_log(m);
  const auto b = row_mean_log(p);
  EXPECT_NEAR(a[0], b[0], 1e-15);
  EXPECT_NEAR(a[1], 2.0, 1e-15);
  EXPECT_NEAR(b[1], 2.0, 1e-15);
}

TEST(Ablation, DiagonalCellHasNoOffDiagonalEntries) {
  AblationConfig ac;
  ac.benchmarks = {Benchmark::const_a};
  ac.n_train = 20;
  ac.n_test = 20;
  ac.train = quick_train();
  const auto rows = diagonal_ablation(ac);
  ASSERT_EQ(rows.size(), 1u);
  const Mat& q = rows[0].dkf.Q;
  const Mat& r = rows[0].dkf.R;
  EXPECT_EQ((q - Mat(q.diagonal().asDiagonal())).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((r - Mat(r.diagonal().asDiagonal())).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT((rows[0].okf.Q - Mat(rows[0].okf.Q.diagonal().asDiagonal())).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(rows[0].dkf.tuning, "optimized-diagonal");
}

TEST(Results, JsonlAndCsv) {
  MatrixConfig cfg;
  cfg.benchmarks = {Benchmark::toy};
  cfg.baselines = {Baseline::kf};
  cfg.n_train = 20;
  cfg.n_test = 10;
  cfg.train = quick_train();
  const auto cells = run_matrix(cfg);
  const fs::path dir = fs::temp_directory_path() / ("okf_exp_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  write_results_jsonl(cells, dir / "r.jsonl");
  write_results_csv(cells, dir / "r.csv");
  std::ifstream in(dir / "r.jsonl");
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("mse"));
    EXPECT_TRUE(j.contains("ci95"));
    EXPECT_FALSE(j.contains("per_trajectory_mse"));
    ++n;
  }
  EXPECT_EQ(n, static_cast<int>(cells.size()));
  std::ifstream csv(dir / "r.csv");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, static_cast<int>(cells.size()) + 1);
  fs::remove_all(dir);
}
