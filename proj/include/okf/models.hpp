#pragma once

#include "okf/kf_core.hpp"

#include <optional>
#include <string>
#include <string_view>

namespace okf {

/// KF variants compared in the Doppler case study. "p" variants keep R in the
/// sensor's polar frame, "e" variants linearize h at the estimate.
enum class Baseline { kf, kfp, ekf, ekfp };

std::string to_string(Baseline b);
std::optional<Baseline> parse_baseline(std::string_view s);
inline bool is_polar(Baseline b) { return b == Baseline::kfp || b == Baseline::ekfp; }
inline bool is_extended(Baseline b) { return b == Baseline::ekf || b == Baseline::ekfp; }

/// Constant-velocity transition for `spatial_dims` positions followed by the
/// matching velocities.
Mat constant_velocity_transition(int spatial_dims);

/// 3-D radar with Doppler: state (x, y, z, ux, uy, uz), observation (x, y, z, doppler).
ModelSpec doppler_model(Baseline b);

/// 2-D lidar ranging to a landmark at the origin: state (x, y, vx, vy), observation (x, y).
ModelSpec lidar_model(Baseline b);

/// Identity dynamics and observations in the plane.
ModelSpec toy_lidar_model();

/// Bounding-box tracking: state (x, y, w, h, vx, vy), observation (x, y, w, h),
/// next-frame prediction of the centre.
ModelSpec video_model();

/// Plain linear model with constant H, fixed initialization, all-state loss.
ModelSpec linear_model(Mat f, Mat h, Vec x0, Mat p0);

/// Model family by scenario name ("doppler", "lidar", "toy_lidar", "video").
ModelSpec model_for_family(std::string_view family, Baseline b);

/// Short stable text fingerprint of a model's structure.
std::string model_fingerprint(const ModelSpec& model);

}  // namespace okf
