#pragma once

#include "okf/data.hpp"
#include "okf/noise_est.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace okf {

/// Independent generator for item `index` of a run seeded with `seed`.
std::mt19937_64 stream_rng(uint64_t seed, uint64_t index);
/// Child seed for a named component of a run.
uint64_t derive_seed(uint64_t seed, std::string_view tag);

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct IntRange {
  int lo = 0;
  int hi = 0;
};

enum class Benchmark { toy, close, const_v, const_a, free };

std::string to_string(Benchmark b);
std::optional<Benchmark> parse_benchmark(std::string_view s);
inline constexpr std::array<Benchmark, 5> kAllBenchmarks = {Benchmark::toy, Benchmark::close, Benchmark::const_v,
                                                           Benchmark::const_a, Benchmark::free};

struct BenchmarkFlags {
  bool anisotropic = false;
  bool polar_noise = false;
  bool uncentered = false;
  bool acceleration = false;
  bool turns = false;

  bool operator==(const BenchmarkFlags&) const = default;
};

BenchmarkFlags flags_for(Benchmark b);

struct DopplerSimConfig {
  BenchmarkFlags flags;
  int n_trajectories = 1000;
  IntRange length_range{40, 100};
  Range speed_range{30.0, 120.0};
  Range accel_range{8.0, 16.0};
  double pos_noise_std = 100.0;
  double doppler_noise_std = 5.0;
  /// (range, azimuth [rad], elevation [rad], doppler) when polar_noise is set.
  std::array<double, 4> spherical_noise_stds{50.0, 2e-3, 2e-3, 5.0};
  /// Distance of the trajectory's start from the radar when uncentered.
  Range placement_radius_range{5e3, 5e4};
  /// Otherwise the trajectory's midpoint lies uniformly inside this ball.
  double center_radius = 1000.0;
  IntRange segment_length{10, 30};
  double elevation_std_deg = 10.0;
  /// Turn angle per turning segment, radians.
  Range turn_angle_range{0.5, 3.14159};
  uint64_t seed = 0;
  /// Prefix of trajectory ids.
  std::string id_prefix = "traj";

  void validate() const;
  nlohmann::json to_json() const;
};

DopplerSimConfig doppler_preset(Benchmark b);

struct SimOutput {
  Dataset data;
  NoiseTruth truth;
  long resampled = 0;
};

SimOutput simulate_doppler(const DopplerSimConfig& cfg);

struct LidarSimConfig {
  int n_trajectories = 1000;
  IntRange length_range{60, 160};
  Range start_radius_range{40.0, 250.0};
  Range speed_range{1.0, 6.0};
  Range accel_range{0.1, 0.5};
  Range turn_radius_range{10.0, 60.0};
  IntRange segment_length{8, 30};
  double radial_noise_std = 4.0;
  double bearing_noise_std = 0.0;
  /// Trajectories passing closer than this to the landmark are resampled.
  double min_range = 2.0;
  int max_attempts = 1000;
  uint64_t seed = 0;
  std::string id_prefix = "lidar";

  void validate() const;
  nlohmann::json to_json() const;
};

SimOutput simulate_lidar(const LidarSimConfig& cfg);

struct ToyLidarConfig {
  double q = 1.0;
  double r0 = 100.0;
  int length = 50;
  int n_trajectories = 1000;
  /// Initial distance from the landmark, uniform; angle uniform.
  Range init_radius_range{50.0, 100.0};
  uint64_t seed = 0;
  std::string id_prefix = "toylidar";

  void validate() const;
  nlohmann::json to_json() const;
};

SimOutput simulate_toy_lidar(const ToyLidarConfig& cfg);

/// Linear-Gaussian system x' = F x + w, z = H x + v with x0 ~ N(mean, cov).
struct LinearGaussianConfig {
  Mat F;
  Mat H;
  Mat Q;
  Mat R;
  Vec x0_mean;
  Mat x0_cov;
  int length = 50;
  int n_trajectories = 1000;
  uint64_t seed = 0;
  std::string id_prefix = "lg";

  void validate() const;
  nlohmann::json to_json() const;
};

SimOutput simulate_linear_gaussian(const LinearGaussianConfig& cfg);

/// Box-annotated pedestrians for the video-tracking path, written as MOT
/// ground-truth files.
struct PedestrianSimConfig {
  int n_sequences = 4;
  int frames = 400;
  int targets_per_sequence = 60;
  IntRange lifetime{30, 250};
  double image_width = 1920;
  double image_height = 1080;
  Range height_range{60.0, 200.0};
  double aspect = 0.42;
  /// Walking speed in pixels per frame and its mean-reversion rate.
  Range speed_range{0.5, 4.0};
  double velocity_reversion = 0.05;
  double velocity_noise = 0.25;
  /// Per-frame annotation jitter of box centre and size, in pixels.
  double annotation_noise = 1.5;
  /// Probability per frame that a visible target starts an occlusion gap.
  double occlusion_rate = 0.004;
  /// Share of extra rows with a non-pedestrian class or a zero consider flag.
  double distractor_rate = 0.1;
  uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

std::vector<MotRow> simulate_pedestrian_sequence(const PedestrianSimConfig& cfg, int sequence);
/// Writes <dir>/<prefix><k>/gt/gt.txt for every sequence and returns the paths.
std::vector<std::filesystem::path> write_pedestrian_mot(const PedestrianSimConfig& cfg,
                                                        const std::filesystem::path& dir,
                                                        const std::string& prefix = "SYN-");

struct Prop1Estimate {
  Mat cov;      // Cov(Z - H(Z) X)
  Mat std_err;  // standard error of each entry
  long n = 0;
};

/// Monte-Carlo effective observation noise when H is evaluated at the observation.
Prop1Estimate prop1_oracle(const Dataset& toy_data);

}  // namespace okf
