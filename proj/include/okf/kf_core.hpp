#pragma once

#include "okf/common.hpp"

#include <algorithm>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace okf {

/// Time-major sequence: row t holds the vector at step t.
using SeqMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// Observations closer than this to the sensor are rejected by the Doppler map.
inline constexpr double kMinRange = 1e-6;

/// Radians per angle unit of the polar noise frame (milliradians). Keeps
/// polar R entries within a few decades of each other.
inline constexpr double kPolarAngleUnit = 1e-3;

struct GaussianState {
  Vec mean;
  Mat cov;
};

enum class ObservationKind { constant_matrix, doppler, custom };

/// How the observation matrix used by the update step is obtained.
///   exact          H is constant, or evaluated at the true state (noise estimation).
///   at_observation H~ = H(z), the location read from the current observation.
///   at_estimate    EKF: the Jacobian of h(x) = H(x) x at the predicted mean.
enum class HEvalPolicy { exact, at_observation, at_estimate };

enum class NoiseCoords { cartesian, polar };

/// filter_current records the post-update belief at every step; predict_next
/// records the prior, which has not seen z_t yet.
enum class Objective { filter_current, predict_next };

enum class InitMode { from_first_observation, fixed };
enum class VelocityInit { zero, from_doppler };

/// User-supplied differentiable observation function.
struct CustomObservation {
  std::function<Vec(const Vec& x)> h;
  std::function<Mat(const Vec& x)> jacobian;
  /// Returns sum_ij Hbar(i,j) * d jacobian(x)(i,j) / dx. Required for at_estimate training.
  std::function<Vec(const Vec& x, const Mat& h_bar)> jacobian_vjp;
  /// Optional H(z) used under at_observation.
  std::function<Mat(const Vec& z)> at_observation;
};

struct ObservationMap {
  ObservationKind kind = ObservationKind::constant_matrix;
  Mat matrix;  // constant_matrix only
  CustomObservation custom;
  int dim_z = 0;
  int dim_x = 0;

  static ObservationMap constant(Mat h);
  /// 3-D location + radial velocity; state (x, y, z, ux, uy, uz).
  static ObservationMap doppler();
  static ObservationMap make_custom(int dim_z, int dim_x, CustomObservation c);
};

struct InitPolicy {
  InitMode mode = InitMode::from_first_observation;
  double p0_scale = 1e4;
  VelocityInit velocity_init = VelocityInit::zero;
  /// (z index, x index) pairs copied from the first observation.
  std::vector<std::pair<int, int>> observed;
  Vec fixed_mean;  // InitMode::fixed
  Mat fixed_cov;   // optional; empty means p0_scale * I
};

struct ModelSpec {
  std::string name;
  Mat F;
  /// Optional per-step transition; takes precedence over F when set.
  std::function<Mat(int step)> transition_at;
  ObservationMap H;
  HEvalPolicy h_eval = HEvalPolicy::exact;
  NoiseCoords r_coords = NoiseCoords::cartesian;
  /// Number of leading observation entries forming the polar location block.
  int polar_block = 0;
  Mask loss_mask;
  InitPolicy init;
  Objective objective = Objective::filter_current;
  bool joseph_form = false;
  /// Leading steps excluded from losses and metrics.
  int warmup_steps = 0;

  int dim_x() const { return static_cast<int>(F.rows()); }
  int dim_z() const { return H.dim_z; }
  void validate() const;
};

/// First step that enters losses and metrics. The initialization step of
/// from-first-observation init is skipped since it has already seen z_0.
inline int first_scored_step(const ModelSpec& m) {
  const int init_steps = m.init.mode == InitMode::from_first_observation ? 1 : 0;
  return std::max(init_steps, m.warmup_steps);
}

GaussianState kf_predict(const GaussianState& state, const Mat& f, const Mat& q);

GaussianState kf_update(const GaussianState& state, const Vec& z, const Mat& h, const Mat& r,
                        bool joseph_form = false);

/// Same as above with an explicit predicted observation (EKF innovation z - h(x)).
GaussianState kf_update(const GaussianState& state, const Vec& z, const Vec& z_pred, const Mat& h,
                        const Mat& r, bool joseph_form = false);

/// Observation matrix for the given policy. `eval_point` is the observation for
/// at_observation and a state vector otherwise.
Mat eval_observation_map(const ObservationMap& map, HEvalPolicy policy, const Vec& eval_point);

/// Predicted observation for a state under the policy (h(x) for at_estimate, H x otherwise).
Vec predict_observation(const ObservationMap& map, HEvalPolicy policy, const Mat& h, const Vec& x);

/// sum_ij Hbar(i,j) * d jacobian(x)(i,j) / dx; zero for constant maps.
Vec observation_jacobian_vjp(const ObservationMap& map, const Vec& x, const Mat& h_bar);

/// Rotates a covariance expressed in the local (radial, tangential...) frame of
/// `direction` into Cartesian coordinates. 2-D and 3-D.
Mat rotate_r_polar(const Mat& r_polar, const Vec& direction);

/// Jacobian of the (range, azimuth[, elevation]) -> Cartesian map at `location`.
/// Angular columns carry the range scaling; angles are in kPolarAngleUnit.
Mat polar_jacobian(const Vec& location);

/// Full observation-space transform for a polar model: polar_jacobian on the
/// location block, identity on the rest.
Mat polar_transform(const ModelSpec& model, const Vec& z);

/// Effective Cartesian observation noise at an observation.
Mat observation_noise(const ModelSpec& model, const Mat& r, const Vec& z);

GaussianState initial_state(const ModelSpec& model, const Vec& first_z);

/// Transition used at a given step.
const Mat& transition(const ModelSpec& model, int step, Mat& scratch);

/// Everything the adjoint needs from one predict/update pair.
struct StepRecord {
  int t = 0;
  bool predicted = true;  // false for the update-only first step of a fixed init
  Vec x_prev;
  Mat p_prev;
  Vec x_prior;
  Mat p_prior;
  Mat h;
  Mat transform;  // polar transform, empty for Cartesian noise
  Vec innovation;
  Mat s;
  Mat k;
  Vec x_post;
  Mat p_post;
};

struct Rollout {
  std::vector<GaussianState> outputs;  // one per time step
  std::vector<StepRecord> steps;       // filled when recording
};

/// Applies the init policy and alternates predict/update. Under from-first-observation
/// init the first step only initializes; a fixed init is the prior of step 0, which
/// is updated without a predict. Every later step predicts then updates.
Rollout rollout(const ModelSpec& model, const Mat& q, const Mat& r, const SeqMat& observations,
                bool record);

std::vector<GaussianState> run_filter(const ModelSpec& model, const Mat& q, const Mat& r,
                                      const SeqMat& observations);

/// Rethrows the in-flight exception with `context` prepended, preserving its class.
[[noreturn]] void rethrow_with_context(const std::string& context);

}  // namespace okf
