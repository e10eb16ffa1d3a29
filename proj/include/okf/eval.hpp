#pragma once

#include "okf/data.hpp"
#include "okf/kf_core.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace okf {

struct EvalOptions {
  bool compute_nll = true;
  /// Percentile bootstrap instead of the normal approximation.
  bool bootstrap = false;
  int n_bootstrap = 2000;
  uint64_t seed = 0;
};

struct EvalReport {
  std::vector<std::string> ids;            // evaluated trajectories, dataset order
  std::vector<double> per_trajectory_mse;  // mean over scored steps of the masked squared error
  std::vector<double> per_trajectory_nll;
  double aggregate_mse = 0.0;
  std::optional<double> aggregate_nll;
  std::pair<double, double> ci95{0.0, 0.0};
  int n = 0;
  /// Trajectories without any scored step (too short for the model).
  int n_skipped = 0;
  std::vector<std::string> failed_ids;
  std::vector<std::string> failure_messages;

  nlohmann::json to_json(bool per_trajectory = true) const;
};

struct TrajectoryMetrics {
  double mse = 0.0;
  double nll = 0.0;
  int steps = 0;
};

TrajectoryMetrics trajectory_metrics(const ModelSpec& model, const Mat& q, const Mat& r,
                                     const SupervisedTrajectory& tr, bool compute_nll = true);

/// Negative log density of `x` under N(mean, cov).
double gaussian_nll(const Vec& x, const Vec& mean, const Mat& cov);

/// Filter failures are recorded per trajectory and excluded from the aggregate.
EvalReport evaluate(const ModelSpec& model, const Mat& q, const Mat& r, const Dataset& test,
                    const EvalOptions& opts = {});

/// mean -/+ 1.96 * sample std / sqrt(N).
std::pair<double, double> normal_ci95(const std::vector<double>& values);
std::pair<double, double> bootstrap_ci95(const std::vector<double>& values, int n_resamples, uint64_t seed);

double mean_of(const std::vector<double>& v);
/// Sample standard deviation, divisor N - 1.
double sample_std(const std::vector<double>& v);

struct ComparisonResult {
  double z = 0.0;
  double mse_ratio = 1.0;
  std::vector<double> deltas;  // a_i - b_i
  double mean_delta = 0.0;
  double std_delta = 0.0;
  /// Two-sided normal p-value of z.
  double p_value = 1.0;
  /// Every delta equal, so z is undefined (reported as 0 when the deltas vanish).
  bool degenerate = false;

  nlohmann::json to_json() const;
};

/// Paired comparison of per-trajectory squared errors of A and B:
/// z = mean(delta) / std(delta) * sqrt(N), ratio = mean(a) / mean(b).
ComparisonResult compare_paired(const std::vector<double>& a, const std::vector<double>& b);

/// Aligns two reports on trajectory ids present in both, then compares.
ComparisonResult compare_reports(const EvalReport& a, const EvalReport& b);

}  // namespace okf
