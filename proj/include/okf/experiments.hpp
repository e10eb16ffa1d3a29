#pragma once

#include "okf/eval.hpp"
#include "okf/models.hpp"
#include "okf/noise_est.hpp"
#include "okf/okf_train.hpp"
#include "okf/sim.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace okf {

enum class Tuning { estimated, optimized, oracle };

std::string to_string(Tuning t);
std::optional<Tuning> parse_tuning(std::string_view s);

struct SplitData {
  std::string name;
  std::string family;
  Dataset train;
  Dataset test;
  std::optional<NoiseTruth> truth;
};

/// Train and test sets of a Doppler benchmark from independent seed streams.
SplitData simulate_benchmark(Benchmark b, int n_train, int n_test, uint64_t seed,
                             const std::function<void(DopplerSimConfig&)>& tweak = {});
SplitData simulate_lidar_split(int n_train, int n_test, uint64_t seed, LidarSimConfig base = {});

struct Fitted {
  Mat Q;
  Mat R;
  std::optional<NoiseParams> theta;
  TrainTrace trace;
};

/// Tunes (estimated), trains (optimized) or reads the simulator truth (oracle).
Fitted fit(const ModelSpec& model, Tuning tuning, const Dataset& train, const std::optional<NoiseTruth>& truth,
           const TrainConfig& cfg);

/// Whether an oracle cell exists: truth in the model's R frame, never for Toy.
bool oracle_available(const std::string& scenario, const ModelSpec& model, const std::optional<NoiseTruth>& truth);

struct CellResult {
  std::string experiment;
  std::string benchmark;
  std::string test_benchmark;  // differs from benchmark only across scenarios
  std::string baseline;
  std::string tuning;
  uint64_t seed = 0;
  int n_train = 0;
  bool ok = true;
  std::string error;
  EvalReport report;
  /// Paired comparison reference -> this cell (z > 0 favours this cell).
  std::string reference;
  std::optional<ComparisonResult> vs_reference;
  Mat Q;
  Mat R;

  nlohmann::json to_json() const;
};

struct MatrixConfig {
  std::vector<Benchmark> benchmarks{kAllBenchmarks.begin(), kAllBenchmarks.end()};
  std::vector<Baseline> baselines{Baseline::kf, Baseline::kfp, Baseline::ekf, Baseline::ekfp};
  std::vector<Tuning> tunings{Tuning::estimated, Tuning::optimized, Tuning::oracle};
  std::vector<uint64_t> seeds{0};
  int n_train = 1500;
  int n_test = 1000;
  TrainConfig train;
};

/// Table of test MSE per (benchmark, baseline, tuning, seed). Failing cells
/// are recorded with ok = false and the grid continues.
std::vector<CellResult> run_matrix(const MatrixConfig& cfg);

/// Evaluates one scenario's (baseline x tuning) cells on prepared data.
std::vector<CellResult> run_scenario(const SplitData& data, const std::vector<Baseline>& baselines,
                                     const std::vector<Tuning>& tunings, const TrainConfig& train,
                                     uint64_t seed, const std::string& experiment);

struct SweepConfig {
  Benchmark benchmark = Benchmark::free;
  Baseline baseline = Baseline::kf;
  std::vector<int> sizes{20, 50, 100, 500, 1500};
  int n_test = 1000;
  uint64_t seed = 0;
  TrainConfig train;
  /// Lower bound on optimizer steps for small subsets; 0 keeps cfg.epochs.
  int min_steps = 0;
};

struct SweepPoint {
  int size = 0;
  CellResult kf;
  CellResult okf;
};

std::vector<SweepPoint> train_size_sweep(const SweepConfig& cfg);

struct GeneralizationConfig {
  std::vector<Benchmark> train_benchmarks{kAllBenchmarks.begin(), kAllBenchmarks.end()};
  std::vector<Benchmark> test_benchmarks{kAllBenchmarks.begin(), kAllBenchmarks.end()};
  Baseline baseline = Baseline::kf;
  int n_train = 1500;
  int n_test = 1000;
  uint64_t seed = 0;
  TrainConfig train;
};

struct GeneralizationResult {
  std::vector<std::string> train_names;
  std::vector<std::string> test_names;
  /// log(MSE(KF) / MSE(OKF)), rows = train scenario.
  std::vector<std::vector<double>> log_ratio;
  /// Mean log ratio per train scenario.
  std::vector<double> summary;
  std::vector<CellResult> cells;
};

GeneralizationResult generalization_matrix(const GeneralizationConfig& cfg);

/// Mean over each row; NaN entries (failed cells) are skipped.
std::vector<double> row_mean_log(const std::vector<std::vector<double>>& log_ratio);

struct AblationConfig {
  std::vector<Benchmark> benchmarks{kAllBenchmarks.begin(), kAllBenchmarks.end()};
  Baseline baseline = Baseline::kf;
  int n_train = 1500;
  int n_test = 1000;
  uint64_t seed = 0;
  TrainConfig train;
};

struct AblationRow {
  std::string benchmark;
  CellResult kf;
  CellResult dkf;
  CellResult okf;
};

std::vector<AblationRow> diagonal_ablation(const AblationConfig& cfg);

/// One JSON record per line, without per-trajectory vectors.
void write_results_jsonl(const std::vector<CellResult>& cells, const std::filesystem::path& path);
/// Flat table for plotting.
void write_results_csv(const std::vector<CellResult>& cells, const std::filesystem::path& path);

}  // namespace okf
