#include "okf/noise_est.hpp"

#include "okf/json_util.hpp"
#include "okf/parallel.hpp"

namespace okf {

using nlohmann::json;

json NoiseTruth::to_json() const {
  json j;
  j["r_coords"] = r_coords == NoiseCoords::polar ? "polar" : "cartesian";
  j["R"] = okf::to_json(R);
  j["Q"] = Q ? okf::to_json(*Q) : json(nullptr);
  return j;
}

NoiseTruth NoiseTruth::from_json(const json& j) {
  NoiseTruth t;
  const auto coords = j.at("r_coords").get<std::string>();
  if (coords == "polar") {
    t.r_coords = NoiseCoords::polar;
  } else if (coords == "cartesian") {
    t.r_coords = NoiseCoords::cartesian;
  } else {
    throw SchemaError("noise truth: unknown r_coords " + coords);
  }
  t.R = matrix_from_json(j.at("R"));
  if (j.contains("Q") && !j.at("Q").is_null()) t.Q = matrix_from_json(j.at("Q"));
  return t;
}

CovAccumulator::CovAccumulator(int dim) : mean(Vec::Zero(dim)), scatter(Mat::Zero(dim, dim)) {}

void CovAccumulator::add(const Vec& v) {
  ++n;
  const Vec delta = v - mean;
  mean += delta / static_cast<double>(n);
  scatter.noalias() += delta * (v - mean).transpose();
}

void CovAccumulator::merge(const CovAccumulator& o) {
  if (o.n == 0) return;
  if (n == 0) {
    *this = o;
    return;
  }
  const double na = static_cast<double>(n);
  const double nb = static_cast<double>(o.n);
  const double total = na + nb;
  const Vec delta = o.mean - mean;
  scatter += o.scatter + delta * delta.transpose() * (na * nb / total);
  mean += delta * (nb / total);
  n += o.n;
}

Mat CovAccumulator::covariance() const {
  if (n < 2) throw InsufficientData("covariance needs at least 2 samples, have " + std::to_string(n));
  Mat c = scatter / static_cast<double>(n - 1);
  symmetrize(c);
  return c;
}

Vec observation_residual(const ModelSpec& model, const Vec& x, const Vec& z) {
  const Mat h = eval_observation_map(model.H, HEvalPolicy::exact, x);
  Vec res = z - h * x;
  if (model.r_coords == NoiseCoords::polar) {
    res = polar_transform(model, z).partialPivLu().solve(res);
  }
  return res;
}

namespace {

struct Partial {
  CovAccumulator q, r;
};

Partial trajectory_partial(const SupervisedTrajectory& tr, const ModelSpec& model, size_t k) {
  Partial p{CovAccumulator(model.dim_x()), CovAccumulator(model.dim_z())};
  Mat scratch;
  for (int t = 0; t < tr.length(); ++t) {
    const Vec x = tr.state(t);
    const Vec z = tr.observation(t);
    Vec rr;
    try {
      rr = observation_residual(model, x, z);
    } catch (const Error&) {
      rethrow_with_context("trajectory " + std::to_string(k) + " (" + tr.id + ") time " + std::to_string(t) + ": ");
    }
    if (!rr.allFinite()) {
      throw CorruptData("observation residual non-finite at trajectory " + std::to_string(k) + " (" + tr.id +
                        ") time " + std::to_string(t));
    }
    p.r.add(rr);
    if (t + 1 < tr.length()) {
      const Vec qr = tr.state(t + 1) - transition(model, t + 1, scratch) * x;
      if (!qr.allFinite()) {
        throw CorruptData("dynamics residual non-finite at trajectory " + std::to_string(k) + " (" + tr.id +
                          ") time " + std::to_string(t));
      }
      p.q.add(qr);
    }
  }
  return p;
}

void check_dims(const Dataset& data, const ModelSpec& model) {
  model.validate();
  if (data.dim_x != model.dim_x() || data.dim_z != model.dim_z()) {
    throw SchemaError("dataset dimensions (" + std::to_string(data.dim_x) + ", " + std::to_string(data.dim_z) +
                      ") differ from model " + model.name);
  }
}

}  // namespace

ResidualSet collect_residuals(const Dataset& data, const ModelSpec& model) {
  check_dims(data, model);
  ResidualSet out;
  Mat scratch;
  for (const auto& tr : data.trajectories) {
    for (int t = 0; t < tr.length(); ++t) {
      const Vec x = tr.state(t);
      out.r_residuals.push_back(observation_residual(model, x, tr.observation(t)));
      if (t + 1 < tr.length()) out.q_residuals.push_back(tr.state(t + 1) - transition(model, t + 1, scratch) * x);
    }
  }
  return out;
}

NoiseEstimate estimate_noise(const Dataset& data, const ModelSpec& model) {
  check_dims(data, model);
  std::vector<Partial> parts(data.size());
  parallel_for(data.size(), [&](size_t k) { parts[k] = trajectory_partial(data.trajectories[k], model, k); });
  // Partials merged in trajectory order so the result does not depend on threading.
  Partial total{CovAccumulator(model.dim_x()), CovAccumulator(model.dim_z())};
  for (const auto& p : parts) {
    total.q.merge(p.q);
    total.r.merge(p.r);
  }
  if (total.q.n < 2 || total.r.n < 2) {
    throw InsufficientData("noise estimation needs at least 2 dynamics and 2 observation residuals, have " +
                           std::to_string(total.q.n) + " and " + std::to_string(total.r.n));
  }
  return NoiseEstimate{total.q.covariance(), total.r.covariance(), total.q.n, total.r.n};
}

NoiseEstimate build_oracle_params(const NoiseTruth& truth, const ModelSpec& model, const Dataset& data) {
  if (truth.r_coords != model.r_coords) {
    throw InvalidArgument("oracle: simulator R is in the " +
                          std::string(truth.r_coords == NoiseCoords::polar ? "polar" : "cartesian") +
                          " frame, model " + model.name + " needs the other");
  }
  if (truth.R.rows() != model.dim_z() || truth.R.cols() != model.dim_z()) {
    throw InvalidArgument("oracle: truth R has the wrong dimension for model " + model.name);
  }
  NoiseEstimate out;
  out.R = truth.R;
  if (truth.Q) {
    if (truth.Q->rows() != model.dim_x()) throw InvalidArgument("oracle: truth Q has the wrong dimension");
    out.Q = *truth.Q;
  } else {
    const NoiseEstimate est = estimate_noise(data, model);
    out.Q = est.Q;
    out.n_q = est.n_q;
  }
  return out;
}

}  // namespace okf
