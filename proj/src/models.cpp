#include "okf/models.hpp"

#include <iomanip>
#include <sstream>

namespace okf {

std::string to_string(Baseline b) {
  switch (b) {
    case Baseline::kf: return "kf";
    case Baseline::kfp: return "kfp";
    case Baseline::ekf: return "ekf";
    case Baseline::ekfp: return "ekfp";
  }
  return "kf";
}

std::optional<Baseline> parse_baseline(std::string_view s) {
  if (s == "kf") return Baseline::kf;
  if (s == "kfp") return Baseline::kfp;
  if (s == "ekf") return Baseline::ekf;
  if (s == "ekfp") return Baseline::ekfp;
  return std::nullopt;
}

Mat constant_velocity_transition(int spatial_dims) {
  const int n = 2 * spatial_dims;
  Mat f = Mat::Identity(n, n);
  f.topRightCorner(spatial_dims, spatial_dims).setIdentity();
  return f;
}

ModelSpec doppler_model(Baseline b) {
  ModelSpec m;
  m.name = "doppler-" + to_string(b);
  m.F = constant_velocity_transition(3);
  m.H = ObservationMap::doppler();
  m.h_eval = is_extended(b) ? HEvalPolicy::at_estimate : HEvalPolicy::at_observation;
  m.r_coords = is_polar(b) ? NoiseCoords::polar : NoiseCoords::cartesian;
  m.polar_block = 3;
  m.loss_mask = Mask::Constant(6, false);
  m.loss_mask.head(3) = true;
  m.init.observed = {{0, 0}, {1, 1}, {2, 2}};
  m.objective = Objective::filter_current;
  return m;
}

ModelSpec lidar_model(Baseline b) {
  if (is_extended(b)) throw InvalidArgument("lidar model: the observation map is linear, no EKF variant");
  ModelSpec m;
  m.name = "lidar-" + to_string(b);
  m.F = constant_velocity_transition(2);
  Mat h = Mat::Zero(2, 4);
  h(0, 0) = 1.0;
  h(1, 1) = 1.0;
  m.H = ObservationMap::constant(h);
  m.r_coords = is_polar(b) ? NoiseCoords::polar : NoiseCoords::cartesian;
  m.polar_block = 2;
  m.loss_mask = Mask::Constant(4, false);
  m.loss_mask.head(2) = true;
  m.init.observed = {{0, 0}, {1, 1}};
  return m;
}

ModelSpec toy_lidar_model() {
  ModelSpec m;
  m.name = "toy_lidar";
  m.F = Mat::Identity(2, 2);
  m.H = ObservationMap::constant(Mat::Identity(2, 2));
  m.loss_mask = Mask::Constant(2, true);
  m.init.observed = {{0, 0}, {1, 1}};
  return m;
}

ModelSpec video_model() {
  ModelSpec m;
  m.name = "video";
  Mat f = Mat::Identity(6, 6);
  f(0, 4) = 1.0;
  f(1, 5) = 1.0;
  m.F = f;
  Mat h = Mat::Zero(4, 6);
  h.leftCols(4).setIdentity();
  m.H = ObservationMap::constant(h);
  m.loss_mask = Mask::Constant(6, false);
  m.loss_mask.head(2) = true;
  m.init.observed = {{0, 0}, {1, 1}, {2, 2}, {3, 3}};
  m.objective = Objective::predict_next;
  return m;
}

ModelSpec linear_model(Mat f, Mat h, Vec x0, Mat p0) {
  ModelSpec m;
  m.name = "linear";
  const Eigen::Index dx = f.rows();
  m.F = std::move(f);
  m.H = ObservationMap::constant(std::move(h));
  m.loss_mask = Mask::Constant(dx, true);
  m.init.mode = InitMode::fixed;
  m.init.fixed_mean = std::move(x0);
  m.init.fixed_cov = std::move(p0);
  return m;
}

ModelSpec model_for_family(std::string_view family, Baseline b) {
  if (family == "doppler") return doppler_model(b);
  if (family == "lidar") return lidar_model(b);
  if (family == "toy_lidar") {
    if (b != Baseline::kf) throw InvalidArgument("toy_lidar supports only the kf variant");
    return toy_lidar_model();
  }
  if (family == "video") {
    if (b != Baseline::kf) throw InvalidArgument("video supports only the kf variant");
    return video_model();
  }
  throw InvalidArgument("unknown model family: " + std::string(family));
}

std::string model_fingerprint(const ModelSpec& model) {
  std::ostringstream os;
  os << model.name << ";dx=" << model.dim_x() << ";dz=" << model.dim_z()
     << ";h=" << static_cast<int>(model.H.kind) << "/" << static_cast<int>(model.h_eval)
     << ";r=" << (model.r_coords == NoiseCoords::polar ? "polar" : "cartesian")
     << ";obj=" << (model.objective == Objective::filter_current ? "filter" : "predict") << ";mask=";
  for (Eigen::Index i = 0; i < model.loss_mask.size(); ++i) os << (model.loss_mask[i] ? '1' : '0');
  os << ";p0=" << std::setprecision(17) << model.init.p0_scale;
  return os.str();
}

}  // namespace okf
