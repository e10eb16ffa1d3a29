#include "okf/kf_core.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <string>

namespace okf {

namespace {

struct DopplerParts {
  Eigen::Vector3d p;
  Eigen::Vector3d v;
  double r;
};

DopplerParts split_doppler_state(const Vec& x) {
  DopplerParts parts{x.head<3>(), x.segment<3>(3), 0.0};
  parts.r = parts.p.norm();
  if (!(parts.r > kMinRange)) {
    throw DegenerateGeometry("doppler observation map: range " + std::to_string(parts.r) +
                             " at or below minimum " + std::to_string(kMinRange));
  }
  return parts;
}

Mat doppler_matrix_at_location(const Eigen::Vector3d& loc) {
  const double r = loc.norm();
  if (!(r > kMinRange)) {
    throw DegenerateGeometry("doppler observation map: range " + std::to_string(r) +
                             " at or below minimum " + std::to_string(kMinRange));
  }
  Mat h = Mat::Zero(4, 6);
  h.topLeftCorner(3, 3).setIdentity();
  h.block<1, 3>(3, 3) = (loc / r).transpose();
  return h;
}

Mat doppler_jacobian(const Vec& x) {
  const auto [p, v, r] = split_doppler_state(x);
  Mat h = Mat::Zero(4, 6);
  h.topLeftCorner(3, 3).setIdentity();
  const double pv = p.dot(v);
  h.block<1, 3>(3, 0) = (v / r - pv * p / (r * r * r)).transpose();
  h.block<1, 3>(3, 3) = (p / r).transpose();
  return h;
}

Vec doppler_h(const Vec& x) {
  const auto [p, v, r] = split_doppler_state(x);
  Vec z(4);
  z.head<3>() = p;
  z[3] = p.dot(v) / r;
  return z;
}

// Second-order term of the Doppler EKF: sum_ij Hbar(i,j) dJ(i,j)/dx. Only the
// Doppler row of the Jacobian depends on x.
Vec doppler_jacobian_vjp(const Vec& x, const Mat& h_bar) {
  const auto [p, v, r] = split_doppler_state(x);
  const Eigen::Vector3d a = h_bar.block<1, 3>(3, 0).transpose();
  const Eigen::Vector3d b = h_bar.block<1, 3>(3, 3).transpose();
  const double r3 = r * r * r;
  const double r5 = r3 * r * r;
  const double pv = p.dot(v);
  const double ap = a.dot(p);
  const double av = a.dot(v);
  const double bp = b.dot(p);
  Vec g = Vec::Zero(6);
  g.head<3>() = b / r - bp * p / r3 - av * p / r3 - (ap * v + pv * a) / r3 + 3.0 * pv * ap * p / r5;
  g.segment<3>(3) = a / r - ap * p / r3;
  return g;
}

Mat local_frame(const Vec& direction) {
  const double n = direction.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw DegenerateGeometry("polar frame: zero or non-finite direction");
  }
  if (direction.size() == 2) {
    const double c = direction[0] / n;
    const double s = direction[1] / n;
    Mat rot(2, 2);
    rot << c, -s, s, c;
    return rot;
  }
  if (direction.size() == 3) {
    const double az = std::atan2(direction[1], direction[0]);
    const double el = std::asin(std::clamp(direction[2] / n, -1.0, 1.0));
    const double ca = std::cos(az), sa = std::sin(az), ce = std::cos(el), se = std::sin(el);
    Mat rot(3, 3);
    rot << ce * ca, -sa, -se * ca,
           ce * sa, ca, -se * sa,
           se, 0.0, ce;
    return rot;
  }
  throw InvalidArgument("polar frame: only 2-D and 3-D locations are supported");
}

void finite_or_throw(const GaussianState& s, const char* what) {
  if (!s.mean.allFinite() || !s.cov.allFinite()) {
    throw NumericFailure(std::string(what) + ": non-finite result");
  }
}

struct UpdateResult {
  GaussianState post;
  Mat s;
  Mat k;
  Vec innovation;
};

UpdateResult update_impl(const GaussianState& prior, const Vec& z, const Vec& z_pred, const Mat& h,
                         const Mat& r, bool joseph_form) {
  const Eigen::Index dx = prior.mean.size();
  if (h.cols() != dx || h.rows() != z.size() || r.rows() != z.size() || r.cols() != z.size() ||
      z_pred.size() != z.size() || prior.cov.rows() != dx) {
    throw InvalidArgument("kf_update: dimension mismatch");
  }
  UpdateResult out;
  const Mat hp = h * prior.cov;
  out.s = hp * h.transpose() + r;
  symmetrize(out.s);
  Eigen::LLT<Mat> llt(out.s);
  if (llt.info() != Eigen::Success || !out.s.allFinite()) {
    throw SingularInnovation("kf_update: innovation covariance is not positive definite");
  }
  // K = P H^T S^-1 = (S^-1 H P)^T; P is symmetric.
  out.k = llt.solve(hp).transpose();
  out.innovation = z - z_pred;
  out.post.mean = prior.mean + out.k * out.innovation;
  if (joseph_form) {
    const Mat ikh = Mat::Identity(dx, dx) - out.k * h;
    out.post.cov = ikh * prior.cov * ikh.transpose() + out.k * r * out.k.transpose();
  } else {
    out.post.cov = prior.cov - out.k * hp;
  }
  symmetrize(out.post.cov);
  finite_or_throw(out.post, "kf_update");
  return out;
}

}  // namespace

ObservationMap ObservationMap::constant(Mat h) {
  ObservationMap m;
  m.kind = ObservationKind::constant_matrix;
  m.dim_z = static_cast<int>(h.rows());
  m.dim_x = static_cast<int>(h.cols());
  m.matrix = std::move(h);
  return m;
}

ObservationMap ObservationMap::doppler() {
  ObservationMap m;
  m.kind = ObservationKind::doppler;
  m.dim_z = 4;
  m.dim_x = 6;
  return m;
}

ObservationMap ObservationMap::make_custom(int dim_z, int dim_x, CustomObservation c) {
  if (!c.h || !c.jacobian) throw InvalidArgument("custom observation map needs h and jacobian");
  ObservationMap m;
  m.kind = ObservationKind::custom;
  m.dim_z = dim_z;
  m.dim_x = dim_x;
  m.custom = std::move(c);
  return m;
}

void ModelSpec::validate() const {
  const int dx = dim_x();
  if (dx <= 0 || F.cols() != dx) throw InvalidArgument("model " + name + ": F must be square");
  if (H.dim_x != dx) throw InvalidArgument("model " + name + ": H column count differs from d_x");
  if (H.kind == ObservationKind::constant_matrix &&
      (H.matrix.rows() != H.dim_z || H.matrix.cols() != dx)) {
    throw InvalidArgument("model " + name + ": constant H has the wrong shape");
  }
  if (loss_mask.size() != dx || !loss_mask.any()) {
    throw InvalidArgument("model " + name + ": loss mask needs length d_x and one true entry");
  }
  if (r_coords == NoiseCoords::polar && (polar_block < 2 || polar_block > 3 || polar_block > dim_z())) {
    throw InvalidArgument("model " + name + ": polar noise needs a 2-D or 3-D location block");
  }
  if (!(init.p0_scale > 0.0)) throw InvalidArgument("model " + name + ": p0_scale must be positive");
  if (init.mode == InitMode::fixed && init.fixed_mean.size() != dx) {
    throw InvalidArgument("model " + name + ": fixed init mean has the wrong length");
  }
  if (init.velocity_init == VelocityInit::from_doppler && H.kind != ObservationKind::doppler) {
    throw InvalidArgument("model " + name + ": Doppler velocity init needs the Doppler map");
  }
  for (const auto& [zi, xi] : init.observed) {
    if (zi < 0 || zi >= dim_z() || xi < 0 || xi >= dx) {
      throw InvalidArgument("model " + name + ": init map index out of range");
    }
  }
  if (warmup_steps < 0) throw InvalidArgument("model " + name + ": negative warm-up");
}

GaussianState kf_predict(const GaussianState& state, const Mat& f, const Mat& q) {
  const Eigen::Index dx = state.mean.size();
  if (f.rows() != dx || f.cols() != dx || q.rows() != dx || q.cols() != dx ||
      state.cov.rows() != dx || state.cov.cols() != dx) {
    throw InvalidArgument("kf_predict: dimension mismatch");
  }
  GaussianState out;
  out.mean = f * state.mean;
  out.cov = f * state.cov * f.transpose() + q;
  symmetrize(out.cov);
  finite_or_throw(out, "kf_predict");
  return out;
}

GaussianState kf_update(const GaussianState& state, const Vec& z, const Mat& h, const Mat& r,
                        bool joseph_form) {
  if (h.cols() != state.mean.size()) throw InvalidArgument("kf_update: dimension mismatch");
  return update_impl(state, z, h * state.mean, h, r, joseph_form).post;
}

GaussianState kf_update(const GaussianState& state, const Vec& z, const Vec& z_pred, const Mat& h,
                        const Mat& r, bool joseph_form) {
  return update_impl(state, z, z_pred, h, r, joseph_form).post;
}

Mat eval_observation_map(const ObservationMap& map, HEvalPolicy policy, const Vec& eval_point) {
  switch (map.kind) {
    case ObservationKind::constant_matrix:
      return map.matrix;
    case ObservationKind::doppler:
      if (policy == HEvalPolicy::at_estimate) return doppler_jacobian(eval_point);
      if (eval_point.size() < 3) throw InvalidArgument("doppler map: evaluation point too short");
      return doppler_matrix_at_location(eval_point.head<3>());
    case ObservationKind::custom:
      if (policy == HEvalPolicy::at_observation) {
        if (!map.custom.at_observation) {
          throw InvalidArgument("custom map: no H(z) provided for at-observation evaluation");
        }
        return map.custom.at_observation(eval_point);
      }
      return map.custom.jacobian(eval_point);
  }
  throw InvalidArgument("unknown observation map kind");
}

Vec predict_observation(const ObservationMap& map, HEvalPolicy policy, const Mat& h, const Vec& x) {
  if (policy != HEvalPolicy::at_estimate || map.kind == ObservationKind::constant_matrix) return h * x;
  if (map.kind == ObservationKind::doppler) return doppler_h(x);
  return map.custom.h(x);
}

Vec observation_jacobian_vjp(const ObservationMap& map, const Vec& x, const Mat& h_bar) {
  switch (map.kind) {
    case ObservationKind::constant_matrix:
      return Vec::Zero(x.size());
    case ObservationKind::doppler:
      return doppler_jacobian_vjp(x, h_bar);
    case ObservationKind::custom:
      if (!map.custom.jacobian_vjp) {
        throw InvalidArgument("custom map: jacobian_vjp is required to differentiate the EKF");
      }
      return map.custom.jacobian_vjp(x, h_bar);
  }
  return Vec::Zero(x.size());
}

Mat rotate_r_polar(const Mat& r_polar, const Vec& direction) {
  if (r_polar.rows() != direction.size() || r_polar.cols() != direction.size()) {
    throw InvalidArgument("rotate_r_polar: dimension mismatch");
  }
  const Mat rot = local_frame(direction);
  Mat out = rot * r_polar * rot.transpose();
  symmetrize(out);
  return out;
}

Mat polar_jacobian(const Vec& location) {
  const double rho = location.norm();
  if (!(rho > kMinRange)) {
    throw DegenerateGeometry("polar jacobian: range " + std::to_string(rho) + " at or below minimum");
  }
  Mat j = local_frame(location);
  if (location.size() == 2) {
    j.col(1) *= rho * kPolarAngleUnit;
  } else {
    const double cos_el = std::sqrt(std::max(0.0, 1.0 - std::pow(location[2] / rho, 2)));
    j.col(1) *= rho * cos_el * kPolarAngleUnit;
    j.col(2) *= rho * kPolarAngleUnit;
  }
  return j;
}

Mat polar_transform(const ModelSpec& model, const Vec& z) {
  const int dz = model.dim_z();
  const int k = model.polar_block;
  Mat t = Mat::Identity(dz, dz);
  t.topLeftCorner(k, k) = polar_jacobian(z.head(k));
  return t;
}

Mat observation_noise(const ModelSpec& model, const Mat& r, const Vec& z) {
  if (model.r_coords == NoiseCoords::cartesian) return r;
  const Mat t = polar_transform(model, z);
  Mat out = t * r * t.transpose();
  symmetrize(out);
  return out;
}

GaussianState initial_state(const ModelSpec& model, const Vec& first_z) {
  const int dx = model.dim_x();
  GaussianState s;
  if (model.init.mode == InitMode::fixed) {
    s.mean = model.init.fixed_mean;
  } else {
    s.mean = Vec::Zero(dx);
    for (const auto& [zi, xi] : model.init.observed) s.mean[xi] = first_z[zi];
    if (model.init.velocity_init == VelocityInit::from_doppler) {
      const Eigen::Vector3d loc = first_z.head<3>();
      const double r = loc.norm();
      if (!(r > kMinRange)) throw DegenerateGeometry("doppler velocity init: observation at the sensor");
      s.mean.segment<3>(3) = first_z[3] * loc / r;
    }
  }
  if (model.init.fixed_cov.size() > 0) {
    s.cov = model.init.fixed_cov;
  } else {
    s.cov = model.init.p0_scale * Mat::Identity(dx, dx);
  }
  return s;
}

const Mat& transition(const ModelSpec& model, int step, Mat& scratch) {
  if (model.transition_at) {
    scratch = model.transition_at(step);
    return scratch;
  }
  return model.F;
}

Rollout rollout(const ModelSpec& model, const Mat& q, const Mat& r, const SeqMat& observations,
                bool record) {
  const Eigen::Index n = observations.rows();
  if (n == 0) throw InvalidArgument("run_filter: empty observation sequence");
  if (observations.cols() != model.dim_z()) throw InvalidArgument("run_filter: observation width differs from d_z");
  if (q.rows() != model.dim_x() || r.rows() != model.dim_z()) {
    throw InvalidArgument("run_filter: noise parameter dimensions differ from the model");
  }
  Rollout out;
  out.outputs.reserve(static_cast<size_t>(n));
  if (record) out.steps.reserve(static_cast<size_t>(n));

  int t = 0;
  try {
    GaussianState state = initial_state(model, observations.row(0).transpose());
    const bool init_consumes_first = model.init.mode == InitMode::from_first_observation;
    if (init_consumes_first) {
      out.outputs.push_back(state);
      t = 1;
    }
    Mat f_scratch;
    for (; t < n; ++t) {
      const Vec z = observations.row(t).transpose();
      // A fixed init is the prior of step 0 itself.
      const bool predicted = t > 0;
      GaussianState prior = predicted ? kf_predict(state, transition(model, t, f_scratch), q) : state;
      const Vec& h_point = model.h_eval == HEvalPolicy::at_observation ? z : prior.mean;
      Mat h = eval_observation_map(model.H, model.h_eval, h_point);
      const Vec z_pred = predict_observation(model.H, model.h_eval, h, prior.mean);
      Mat transform;
      Mat r_t;
      if (model.r_coords == NoiseCoords::polar) {
        transform = polar_transform(model, z);
        r_t = transform * r * transform.transpose();
        symmetrize(r_t);
      } else {
        r_t = r;
      }
      UpdateResult upd = update_impl(prior, z, z_pred, h, r_t, model.joseph_form);
      out.outputs.push_back(model.objective == Objective::filter_current ? upd.post : prior);
      if (record) {
        StepRecord rec;
        rec.t = t;
        rec.predicted = predicted;
        rec.x_prev = std::move(state.mean);
        rec.p_prev = std::move(state.cov);
        rec.x_prior = prior.mean;
        rec.p_prior = prior.cov;
        rec.h = std::move(h);
        rec.transform = std::move(transform);
        rec.innovation = std::move(upd.innovation);
        rec.s = std::move(upd.s);
        rec.k = std::move(upd.k);
        rec.x_post = upd.post.mean;
        rec.p_post = upd.post.cov;
        out.steps.push_back(std::move(rec));
      }
      state = std::move(upd.post);
    }
  } catch (const Error&) {
    rethrow_with_context("time step " + std::to_string(t) + ": ");
  }
  return out;
}

std::vector<GaussianState> run_filter(const ModelSpec& model, const Mat& q, const Mat& r,
                                      const SeqMat& observations) {
  return rollout(model, q, r, observations, false).outputs;
}

void rethrow_with_context(const std::string& context) {
  try {
    throw;
  } catch (const SingularInnovation& e) {
    throw SingularInnovation(context + e.what());
  } catch (const DegenerateGeometry& e) {
    throw DegenerateGeometry(context + e.what());
  } catch (const NumericFailure& e) {
    throw NumericFailure(context + e.what());
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(context + e.what());
  } catch (const NotPositiveDefinite& e) {
    throw NotPositiveDefinite(context + e.what());
  } catch (const CorruptData& e) {
    throw CorruptData(context + e.what());
  } catch (const Error& e) {
    throw Error(context + e.what());
  }
}

}  // namespace okf
