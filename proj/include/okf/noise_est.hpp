#pragma once

#include "okf/data.hpp"
#include "okf/kf_core.hpp"

#include <json.hpp>

#include <optional>
#include <vector>

namespace okf {

/// Ground-truth noise a simulator used to generate a dataset.
struct NoiseTruth {
  /// Frame R is expressed in: Cartesian, or the sensor's polar frame
  /// (range, azimuth[, elevation] in radians, then any extra entries).
  NoiseCoords r_coords = NoiseCoords::cartesian;
  Mat R;
  /// Process noise, when the true dynamics are exactly the model's F plus
  /// Gaussian noise. Empty when the motion model is mismatched.
  std::optional<Mat> Q;

  nlohmann::json to_json() const;
  static NoiseTruth from_json(const nlohmann::json& j);
};

struct ResidualSet {
  std::vector<Vec> q_residuals;  // x_{t+1} - F x_t
  std::vector<Vec> r_residuals;  // z_t - H(x_t) x_t, rotated to polar when the model asks
};

/// Streaming mean and scatter with an associative merge.
struct CovAccumulator {
  long n = 0;
  Vec mean;
  Mat scatter;

  explicit CovAccumulator(int dim = 0);
  void add(const Vec& v);
  void merge(const CovAccumulator& other);
  /// Sample covariance with divisor n - 1. Exactly symmetric.
  Mat covariance() const;
};

/// Observation residual of one step under the model's noise coordinates.
Vec observation_residual(const ModelSpec& model, const Vec& x, const Vec& z);

ResidualSet collect_residuals(const Dataset& data, const ModelSpec& model);

struct NoiseEstimate {
  Mat Q;
  Mat R;
  long n_q = 0;
  long n_r = 0;
};

/// Sample covariances of dynamics and observation residuals over supervised data.
NoiseEstimate estimate_noise(const Dataset& data, const ModelSpec& model);

/// Oracle noise: the simulator's R in the model's frame and the true Q when the
/// simulator knows it, otherwise Q estimated from the data.
NoiseEstimate build_oracle_params(const NoiseTruth& truth, const ModelSpec& model, const Dataset& data);

}  // namespace okf
