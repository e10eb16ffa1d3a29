#include "okf/sim.hpp"

#include "okf/json_util.hpp"
#include "okf/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace okf {

using nlohmann::json;
using Eigen::Vector2d;
using Eigen::Vector3d;

namespace {

uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double uniform(std::mt19937_64& rng, Range r) { return std::uniform_real_distribution<double>(r.lo, r.hi)(rng); }
int uniform_int(std::mt19937_64& rng, IntRange r) { return std::uniform_int_distribution<int>(r.lo, r.hi)(rng); }
double normal(std::mt19937_64& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }
bool coin(std::mt19937_64& rng, double p = 0.5) { return std::bernoulli_distribution(p)(rng); }

json range_json(Range r) { return json::array({r.lo, r.hi}); }
json range_json(IntRange r) { return json::array({r.lo, r.hi}); }

void check_range(Range r, const char* what, bool allow_zero = false) {
  const bool ok = allow_zero ? (r.lo >= 0.0 && r.hi >= r.lo) : (r.lo > 0.0 && r.hi >= r.lo);
  if (!ok || !std::isfinite(r.hi)) throw InvalidArgument(std::string("simulator: invalid ") + what);
}

void check_range(IntRange r, const char* what, int min_lo) {
  if (r.lo < min_lo || r.hi < r.lo) throw InvalidArgument(std::string("simulator: invalid ") + what);
}

std::string traj_id(const std::string& prefix, size_t k) {
  std::string digits = std::to_string(k);
  if (digits.size() < 6) digits.insert(0, 6 - digits.size(), '0');
  return prefix + "-" + digits;
}

Vector3d uniform_on_sphere(std::mt19937_64& rng) {
  const double z = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
  const double phi = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
  const double c = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {c * std::cos(phi), c * std::sin(phi), z};
}

Vector3d from_angles(double az, double el) {
  return {std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
}

Mat psd_sqrt(const Mat& a) {
  Eigen::SelfAdjointEigenSolver<Mat> es(a);
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

}  // namespace

std::mt19937_64 stream_rng(uint64_t seed, uint64_t index) {
  uint64_t s = seed;
  const uint64_t a = splitmix64(s);
  s = a ^ (index * 0xD1B54A32D192ED03ULL);
  splitmix64(s);
  return std::mt19937_64(splitmix64(s));
}

uint64_t derive_seed(uint64_t seed, std::string_view tag) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  uint64_t s = seed ^ h;
  return splitmix64(s);
}

std::string to_string(Benchmark b) {
  switch (b) {
    case Benchmark::toy: return "toy";
    case Benchmark::close: return "close";
    case Benchmark::const_v: return "const_v";
    case Benchmark::const_a: return "const_a";
    case Benchmark::free: return "free";
  }
  return "toy";
}

std::optional<Benchmark> parse_benchmark(std::string_view s) {
  for (Benchmark b : kAllBenchmarks) {
    if (s == to_string(b)) return b;
  }
  return std::nullopt;
}

BenchmarkFlags flags_for(Benchmark b) {
  switch (b) {
    case Benchmark::toy: return {false, false, false, false, false};
    case Benchmark::close: return {true, true, false, false, false};
    case Benchmark::const_v: return {true, true, true, false, false};
    case Benchmark::const_a: return {true, true, true, true, false};
    case Benchmark::free: return {true, true, true, true, true};
  }
  return {};
}

// ---------------------------------------------------------------- Doppler

void DopplerSimConfig::validate() const {
  if (n_trajectories < 1) throw InvalidArgument("doppler sim: n_trajectories must be positive");
  check_range(length_range, "length_range", 2);
  check_range(speed_range, "speed_range");
  if (flags.acceleration || flags.turns) check_range(accel_range, "accel_range");
  if (flags.turns) check_range(turn_angle_range, "turn_angle_range");
  check_range(segment_length, "segment_length", 1);
  if (!(pos_noise_std >= 0.0) || !(doppler_noise_std >= 0.0)) throw InvalidArgument("doppler sim: negative noise");
  for (double s : spherical_noise_stds) {
    if (!(s >= 0.0)) throw InvalidArgument("doppler sim: negative spherical noise");
  }
  if (flags.uncentered) {
    check_range(placement_radius_range, "placement_radius_range (uncentered needs a positive radius)");
  } else if (!(center_radius >= 0.0)) {
    throw InvalidArgument("doppler sim: center_radius must be non-negative");
  }
  if (flags.anisotropic && !(elevation_std_deg > 0.0)) {
    throw InvalidArgument("doppler sim: anisotropic motion needs a positive elevation spread");
  }
}

json DopplerSimConfig::to_json() const {
  return json{{"simulator", "doppler"},
              {"flags",
               {{"anisotropic", flags.anisotropic},
                {"polar_noise", flags.polar_noise},
                {"uncentered", flags.uncentered},
                {"acceleration", flags.acceleration},
                {"turns", flags.turns}}},
              {"n_trajectories", n_trajectories},
              {"length_range", range_json(length_range)},
              {"speed_range", range_json(speed_range)},
              {"accel_range", range_json(accel_range)},
              {"pos_noise_std", pos_noise_std},
              {"doppler_noise_std", doppler_noise_std},
              {"spherical_noise_stds", spherical_noise_stds},
              {"placement_radius_range", range_json(placement_radius_range)},
              {"center_radius", center_radius},
              {"segment_length", range_json(segment_length)},
              {"elevation_std_deg", elevation_std_deg},
              {"turn_angle_range", range_json(turn_angle_range)},
              {"seed", seed},
              {"id_prefix", id_prefix}};
}

DopplerSimConfig doppler_preset(Benchmark b) {
  DopplerSimConfig c;
  c.flags = flags_for(b);
  c.id_prefix = to_string(b);
  if (b == Benchmark::free) c.accel_range = {24.0, 48.0};
  if (b == Benchmark::toy) {
    // Starts close to the sensor and fast motion: the direction error of H(z)
    // then inflates the effective Doppler variance about 13-fold.
    c.center_radius = 100.0;
    c.speed_range = {60.0, 240.0};
  }
  return c;
}

namespace {

struct Kin3 {
  Vector3d p;
  Vector3d v;
};

void rotate_step(Kin3& s, const Vector3d& axis, double omega) {
  const Vector3d v_par = s.v.dot(axis) * axis;
  const Vector3d v_perp = s.v - v_par;
  const Vector3d w = axis.cross(v_perp);
  const double sinc = std::sin(omega) / omega;
  const double cosc = (1.0 - std::cos(omega)) / omega;
  s.p += v_par + sinc * v_perp + cosc * w;
  s.v = v_par + std::cos(omega) * v_perp + std::sin(omega) * w;
}

std::vector<Kin3> doppler_motion(const DopplerSimConfig& cfg, std::mt19937_64& rng, int length) {
  const double speed = uniform(rng, cfg.speed_range);
  Vector3d dir;
  if (cfg.flags.anisotropic) {
    const double sd = cfg.elevation_std_deg * std::numbers::pi / 180.0;
    double el = 0.0;
    do {
      el = sd * normal(rng);
    } while (std::abs(el) >= 0.5 * std::numbers::pi);
    dir = from_angles(uniform(rng, {0.0, 2.0 * std::numbers::pi}), el);
  } else {
    dir = uniform_on_sphere(rng);
  }
  const double band_lo = 0.5 * cfg.speed_range.lo;
  const double band_hi = 2.0 * cfg.speed_range.hi;

  std::vector<Kin3> out;
  out.reserve(static_cast<size_t>(length));
  Kin3 s{Vector3d::Zero(), speed * dir};
  out.push_back(s);
  while (static_cast<int>(out.size()) < length) {
    const int seg = uniform_int(rng, cfg.segment_length);
    enum { coast, accelerate, turn } kind = coast;
    if (cfg.flags.turns && coin(rng)) {
      kind = turn;
    } else if (cfg.flags.acceleration) {
      kind = accelerate;
    }
    double accel = 0.0;
    Vector3d axis = Vector3d::UnitZ();
    int active = seg;
    double omega = 0.0;
    if (kind == accelerate) {
      const double speed_now = s.v.norm();
      double sign = coin(rng) ? 1.0 : -1.0;
      if (speed_now <= band_lo) sign = 1.0;
      if (speed_now >= band_hi) sign = -1.0;
      accel = sign * uniform(rng, cfg.accel_range);
    } else if (kind == turn) {
      if (cfg.flags.anisotropic) {
        axis = (coin(rng) ? 1.0 : -1.0) * Vector3d::UnitZ();
      } else {
        Vector3d g(normal(rng), normal(rng), normal(rng));
        const Vector3d u = s.v.normalized();
        g -= g.dot(u) * u;
        axis = g.normalized();
      }
      const double lateral = uniform(rng, cfg.accel_range);
      const double v_perp = (s.v - s.v.dot(axis) * axis).norm();
      const double angle = uniform(rng, cfg.turn_angle_range);
      if (v_perp > 1e-9) {
        omega = lateral / v_perp;
        active = std::min(seg, static_cast<int>(std::ceil(angle / omega)));
      } else {
        kind = coast;
      }
    }
    for (int i = 0; i < seg && static_cast<int>(out.size()) < length; ++i) {
      if (kind == turn && i < active) {
        rotate_step(s, axis, omega);
      } else if (kind == accelerate && accel != 0.0) {
        const double speed_now = s.v.norm();
        const double next = speed_now + accel;
        if (next < band_lo || next > band_hi) {
          accel = 0.0;
          s.p += s.v;
        } else {
          const Vector3d u = s.v / speed_now;
          s.p += s.v + 0.5 * accel * u;
          s.v += accel * u;
        }
      } else {
        s.p += s.v;
      }
      out.push_back(s);
    }
  }
  return out;
}

SupervisedTrajectory simulate_doppler_one(const DopplerSimConfig& cfg, size_t k) {
  auto rng = stream_rng(cfg.seed, k);
  const int length = uniform_int(rng, cfg.length_range);
  std::vector<Kin3> motion = doppler_motion(cfg, rng, length);

  Vector3d offset;
  if (cfg.flags.uncentered) {
    Vector3d u = uniform_on_sphere(rng);
    u.z() = std::abs(u.z());
    offset = uniform(rng, cfg.placement_radius_range) * u;
  } else {
    const double rad = cfg.center_radius * std::cbrt(uniform(rng, {0.0, 1.0}));
    const Vector3d centre = rad * uniform_on_sphere(rng);
    offset = centre - 0.5 * (motion.front().p + motion.back().p);
  }

  SupervisedTrajectory tr;
  tr.id = traj_id(cfg.id_prefix, k);
  tr.states.resize(length, 6);
  tr.observations.resize(length, 4);
  const auto& sn = cfg.spherical_noise_stds;
  for (int t = 0; t < length; ++t) {
    const Vector3d p = motion[static_cast<size_t>(t)].p + offset;
    const Vector3d v = motion[static_cast<size_t>(t)].v;
    tr.states.row(t) << p.transpose(), v.transpose();
    const double rho = p.norm();
    const double radial = rho > 0.0 ? p.dot(v) / rho : 0.0;
    Vector3d loc;
    double dop = 0.0;
    if (cfg.flags.polar_noise) {
      const double az = std::atan2(p.y(), p.x());
      const double el = rho > 0.0 ? std::asin(std::clamp(p.z() / rho, -1.0, 1.0)) : 0.0;
      const double rho_n = rho + sn[0] * normal(rng);
      const double az_n = az + sn[1] * normal(rng);
      const double el_n = el + sn[2] * normal(rng);
      loc = rho_n * from_angles(az_n, el_n);
      dop = radial + sn[3] * normal(rng);
    } else {
      loc = p + cfg.pos_noise_std * Vector3d(normal(rng), normal(rng), normal(rng));
      dop = radial + cfg.doppler_noise_std * normal(rng);
    }
    tr.observations.row(t) << loc.transpose(), dop;
  }
  return tr;
}

}  // namespace

SimOutput simulate_doppler(const DopplerSimConfig& cfg) {
  cfg.validate();
  SimOutput out;
  out.data.dim_x = 6;
  out.data.dim_z = 4;
  out.data.trajectories.resize(static_cast<size_t>(cfg.n_trajectories));
  parallel_for(out.data.trajectories.size(),
               [&](size_t k) { out.data.trajectories[k] = simulate_doppler_one(cfg, k); });

  if (cfg.flags.polar_noise) {
    out.truth.r_coords = NoiseCoords::polar;
    Vec d(4);
    for (int i = 0; i < 4; ++i) d[i] = cfg.spherical_noise_stds[static_cast<size_t>(i)];
    d[1] /= kPolarAngleUnit;
    d[2] /= kPolarAngleUnit;
    out.truth.R = d.cwiseAbs2().asDiagonal();
  } else {
    out.truth.r_coords = NoiseCoords::cartesian;
    const double p2 = cfg.pos_noise_std * cfg.pos_noise_std;
    out.truth.R = Vec((Vec(4) << p2, p2, p2, cfg.doppler_noise_std * cfg.doppler_noise_std).finished()).asDiagonal();
  }
  if (!cfg.flags.acceleration && !cfg.flags.turns) out.truth.Q = Mat::Zero(6, 6);
  out.data.metadata = {{"config", cfg.to_json()}, {"truth", out.truth.to_json()}, {"family", "doppler"}};
  return out;
}

// ---------------------------------------------------------------- lidar

void LidarSimConfig::validate() const {
  if (n_trajectories < 1) throw InvalidArgument("lidar sim: n_trajectories must be positive");
  check_range(length_range, "length_range", 2);
  check_range(start_radius_range, "start_radius_range");
  check_range(speed_range, "speed_range");
  check_range(accel_range, "accel_range", true);
  check_range(turn_radius_range, "turn_radius_range");
  check_range(segment_length, "segment_length", 1);
  if (!(radial_noise_std >= 0.0) || !(bearing_noise_std >= 0.0)) throw InvalidArgument("lidar sim: negative noise");
  if (!(min_range >= 0.0)) throw InvalidArgument("lidar sim: negative min_range");
  if (max_attempts < 1) throw InvalidArgument("lidar sim: max_attempts must be positive");
}

json LidarSimConfig::to_json() const {
  return json{{"simulator", "lidar"},
              {"n_trajectories", n_trajectories},
              {"length_range", range_json(length_range)},
              {"start_radius_range", range_json(start_radius_range)},
              {"speed_range", range_json(speed_range)},
              {"accel_range", range_json(accel_range)},
              {"turn_radius_range", range_json(turn_radius_range)},
              {"segment_length", range_json(segment_length)},
              {"radial_noise_std", radial_noise_std},
              {"bearing_noise_std", bearing_noise_std},
              {"min_range", min_range},
              {"max_attempts", max_attempts},
              {"seed", seed},
              {"id_prefix", id_prefix}};
}

namespace {

struct Kin2 {
  Vector2d p;
  Vector2d v;
};

std::vector<Kin2> lidar_motion(const LidarSimConfig& cfg, std::mt19937_64& rng, int length) {
  const double two_pi = 2.0 * std::numbers::pi;
  const double rho0 = uniform(rng, cfg.start_radius_range);
  const double phi0 = uniform(rng, {0.0, two_pi});
  const double heading = uniform(rng, {0.0, two_pi});
  const double speed = uniform(rng, cfg.speed_range);
  const double band_lo = 0.5 * cfg.speed_range.lo;
  const double band_hi = 1.5 * cfg.speed_range.hi;
  Kin2 s{rho0 * Vector2d(std::cos(phi0), std::sin(phi0)), speed * Vector2d(std::cos(heading), std::sin(heading))};
  std::vector<Kin2> out;
  out.reserve(static_cast<size_t>(length));
  out.push_back(s);
  while (static_cast<int>(out.size()) < length) {
    const int seg = uniform_int(rng, cfg.segment_length);
    const double u = uniform(rng, {0.0, 1.0});
    double omega = 0.0;
    double accel = 0.0;
    if (u < 0.4) {
      omega = (coin(rng) ? 1.0 : -1.0) * s.v.norm() / uniform(rng, cfg.turn_radius_range);
    } else if (u < 0.8 && cfg.accel_range.hi > 0.0) {
      const double sp = s.v.norm();
      double sign = coin(rng) ? 1.0 : -1.0;
      if (sp <= band_lo) sign = 1.0;
      if (sp >= band_hi) sign = -1.0;
      accel = sign * uniform(rng, cfg.accel_range);
    }
    for (int i = 0; i < seg && static_cast<int>(out.size()) < length; ++i) {
      if (omega != 0.0) {
        const Vector2d w(-s.v.y(), s.v.x());
        s.p += std::sin(omega) / omega * s.v + (1.0 - std::cos(omega)) / omega * w;
        s.v = std::cos(omega) * s.v + std::sin(omega) * w;
      } else if (accel != 0.0) {
        const double sp = s.v.norm();
        if (sp + accel < band_lo || sp + accel > band_hi) {
          accel = 0.0;
          s.p += s.v;
        } else {
          const Vector2d dir = s.v / sp;
          s.p += s.v + 0.5 * accel * dir;
          s.v += accel * dir;
        }
      } else {
        s.p += s.v;
      }
      out.push_back(s);
    }
  }
  return out;
}

struct LidarOne {
  SupervisedTrajectory tr;
  long resampled = 0;
};

LidarOne simulate_lidar_one(const LidarSimConfig& cfg, size_t k) {
  auto rng = stream_rng(cfg.seed, k);
  const int length = uniform_int(rng, cfg.length_range);
  LidarOne out;
  std::vector<Kin2> motion;
  for (int attempt = 0;; ++attempt) {
    if (attempt >= cfg.max_attempts) {
      throw NumericFailure("lidar sim: trajectory " + std::to_string(k) + " kept passing the landmark");
    }
    motion = lidar_motion(cfg, rng, length);
    const bool clear =
        std::all_of(motion.begin(), motion.end(), [&](const Kin2& s) { return s.p.norm() >= cfg.min_range; });
    if (clear) break;
    ++out.resampled;
  }
  auto& tr = out.tr;
  tr.id = traj_id(cfg.id_prefix, k);
  tr.states.resize(length, 4);
  tr.observations.resize(length, 2);
  for (int t = 0; t < length; ++t) {
    const auto& s = motion[static_cast<size_t>(t)];
    tr.states.row(t) << s.p.transpose(), s.v.transpose();
    // Range scaled and bearing rotated about the landmark; exact when both draws are zero.
    const double scale = 1.0 + cfg.radial_noise_std * normal(rng) / s.p.norm();
    const double dphi = cfg.bearing_noise_std * normal(rng);
    const double c = std::cos(dphi), sn = std::sin(dphi);
    tr.observations.row(t) << scale * (c * s.p.x() - sn * s.p.y()), scale * (sn * s.p.x() + c * s.p.y());
  }
  return out;
}

}  // namespace

SimOutput simulate_lidar(const LidarSimConfig& cfg) {
  cfg.validate();
  std::vector<LidarOne> parts(static_cast<size_t>(cfg.n_trajectories));
  parallel_for(parts.size(), [&](size_t k) { parts[k] = simulate_lidar_one(cfg, k); });
  SimOutput out;
  out.data.dim_x = 4;
  out.data.dim_z = 2;
  for (auto& p : parts) {
    out.resampled += p.resampled;
    out.data.trajectories.push_back(std::move(p.tr));
  }
  out.truth.r_coords = NoiseCoords::polar;
  out.truth.R = Vec((Vec(2) << cfg.radial_noise_std * cfg.radial_noise_std,
                     std::pow(cfg.bearing_noise_std / kPolarAngleUnit, 2))
                        .finished())
                    .asDiagonal();
  out.data.metadata = {{"config", cfg.to_json()},
                       {"truth", out.truth.to_json()},
                       {"family", "lidar"},
                       {"resampled", out.resampled}};
  return out;
}

// ---------------------------------------------------------------- toy lidar

void ToyLidarConfig::validate() const {
  if (!(q > 0.0) || !(r0 > 0.0)) throw InvalidArgument("toy lidar sim: q and r0 must be positive");
  if (length < 2) throw InvalidArgument("toy lidar sim: length must be at least 2");
  if (n_trajectories < 1) throw InvalidArgument("toy lidar sim: n_trajectories must be positive");
  check_range(init_radius_range, "init_radius_range");
}

json ToyLidarConfig::to_json() const {
  return json{{"simulator", "toy_lidar"},
              {"q", q},
              {"r0", r0},
              {"length", length},
              {"n_trajectories", n_trajectories},
              {"init_radius_range", range_json(init_radius_range)},
              {"seed", seed},
              {"id_prefix", id_prefix}};
}

SimOutput simulate_toy_lidar(const ToyLidarConfig& cfg) {
  cfg.validate();
  SimOutput out;
  out.data.dim_x = 2;
  out.data.dim_z = 2;
  out.data.trajectories.resize(static_cast<size_t>(cfg.n_trajectories));
  const double sq = std::sqrt(cfg.q);
  const double sr = std::sqrt(cfg.r0);
  parallel_for(out.data.trajectories.size(), [&](size_t k) {
    auto rng = stream_rng(cfg.seed, k);
    auto& tr = out.data.trajectories[k];
    tr.id = traj_id(cfg.id_prefix, k);
    tr.states.resize(cfg.length, 2);
    tr.observations.resize(cfg.length, 2);
    const double rho = uniform(rng, cfg.init_radius_range);
    const double phi = uniform(rng, {0.0, 2.0 * std::numbers::pi});
    Vector2d x(rho * std::cos(phi), rho * std::sin(phi));
    for (int t = 0; t < cfg.length; ++t) {
      if (t > 0) x += sq * Vector2d(normal(rng), normal(rng));
      const double n = x.norm();
      const Vector2d u = n > 0.0 ? Vector2d(x / n) : Vector2d(1.0, 0.0);
      tr.states.row(t) = x.transpose();
      tr.observations.row(t) = (x + sr * normal(rng) * u).transpose();
    }
  });
  out.truth.r_coords = NoiseCoords::polar;
  out.truth.R = Mat::Zero(2, 2);
  out.truth.R(0, 0) = cfg.r0;
  out.truth.Q = cfg.q * Mat::Identity(2, 2);
  out.data.metadata = {{"config", cfg.to_json()}, {"truth", out.truth.to_json()}, {"family", "toy_lidar"}};
  return out;
}

// ---------------------------------------------------------------- linear Gaussian

void LinearGaussianConfig::validate() const {
  const auto dx = F.rows();
  if (dx < 1 || F.cols() != dx || Q.rows() != dx || Q.cols() != dx || H.cols() != dx || R.rows() != H.rows() ||
      R.cols() != H.rows() || x0_mean.size() != dx || x0_cov.rows() != dx || x0_cov.cols() != dx) {
    throw InvalidArgument("linear-Gaussian sim: inconsistent dimensions");
  }
  if (length < 1 || n_trajectories < 1) throw InvalidArgument("linear-Gaussian sim: sizes must be positive");
}

json LinearGaussianConfig::to_json() const {
  return json{{"simulator", "linear_gaussian"},
              {"F", okf::to_json(F)},
              {"H", okf::to_json(H)},
              {"Q", okf::to_json(Q)},
              {"R", okf::to_json(R)},
              {"x0_mean", okf::to_json(x0_mean)},
              {"x0_cov", okf::to_json(x0_cov)},
              {"length", length},
              {"n_trajectories", n_trajectories},
              {"seed", seed},
              {"id_prefix", id_prefix}};
}

SimOutput simulate_linear_gaussian(const LinearGaussianConfig& cfg) {
  cfg.validate();
  const auto dx = cfg.F.rows();
  const auto dz = cfg.H.rows();
  const Mat sq = psd_sqrt(cfg.Q);
  const Mat sr = psd_sqrt(cfg.R);
  const Mat s0 = psd_sqrt(cfg.x0_cov);
  SimOutput out;
  out.data.dim_x = static_cast<int>(dx);
  out.data.dim_z = static_cast<int>(dz);
  out.data.trajectories.resize(static_cast<size_t>(cfg.n_trajectories));
  parallel_for(out.data.trajectories.size(), [&](size_t k) {
    auto rng = stream_rng(cfg.seed, k);
    auto draw = [&](Eigen::Index n) {
      Vec v(n);
      for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
      return v;
    };
    auto& tr = out.data.trajectories[k];
    tr.id = traj_id(cfg.id_prefix, k);
    tr.states.resize(cfg.length, dx);
    tr.observations.resize(cfg.length, dz);
    Vec x = cfg.x0_mean + s0 * draw(dx);
    for (int t = 0; t < cfg.length; ++t) {
      if (t > 0) x = cfg.F * x + sq * draw(dx);
      tr.states.row(t) = x.transpose();
      tr.observations.row(t) = (cfg.H * x + sr * draw(dz)).transpose();
    }
  });
  out.truth.r_coords = NoiseCoords::cartesian;
  out.truth.R = cfg.R;
  out.truth.Q = cfg.Q;
  out.data.metadata = {{"config", cfg.to_json()}, {"truth", out.truth.to_json()}, {"family", "linear"}};
  return out;
}

// ---------------------------------------------------------------- pedestrians

void PedestrianSimConfig::validate() const {
  if (n_sequences < 1 || frames < 2 || targets_per_sequence < 1) {
    throw InvalidArgument("pedestrian sim: sizes must be positive");
  }
  check_range(lifetime, "lifetime", 2);
  check_range(height_range, "height_range");
  check_range(speed_range, "speed_range", true);
  if (!(image_width > 0.0) || !(image_height > 0.0) || !(aspect > 0.0)) {
    throw InvalidArgument("pedestrian sim: image and box geometry must be positive");
  }
  if (!(annotation_noise >= 0.0) || !(velocity_noise >= 0.0) || !(velocity_reversion >= 0.0)) {
    throw InvalidArgument("pedestrian sim: negative noise");
  }
  if (!(occlusion_rate >= 0.0 && occlusion_rate < 1.0) || !(distractor_rate >= 0.0 && distractor_rate < 1.0)) {
    throw InvalidArgument("pedestrian sim: rates must lie in [0, 1)");
  }
}

json PedestrianSimConfig::to_json() const {
  return json{{"simulator", "pedestrian"},
              {"n_sequences", n_sequences},
              {"frames", frames},
              {"targets_per_sequence", targets_per_sequence},
              {"lifetime", range_json(lifetime)},
              {"image_width", image_width},
              {"image_height", image_height},
              {"height_range", range_json(height_range)},
              {"aspect", aspect},
              {"speed_range", range_json(speed_range)},
              {"velocity_reversion", velocity_reversion},
              {"velocity_noise", velocity_noise},
              {"annotation_noise", annotation_noise},
              {"occlusion_rate", occlusion_rate},
              {"distractor_rate", distractor_rate},
              {"seed", seed}};
}

std::vector<MotRow> simulate_pedestrian_sequence(const PedestrianSimConfig& cfg, int sequence) {
  cfg.validate();
  auto rng = stream_rng(cfg.seed, static_cast<uint64_t>(sequence));
  std::vector<MotRow> rows;
  for (int id = 1; id <= cfg.targets_per_sequence; ++id) {
    const int life = std::min(uniform_int(rng, cfg.lifetime), cfg.frames);
    const int start = uniform_int(rng, {1, cfg.frames - life + 1});
    Vector2d c(uniform(rng, {0.0, cfg.image_width}), uniform(rng, {0.0, cfg.image_height}));
    double height = uniform(rng, cfg.height_range);
    const double heading = uniform(rng, {0.0, 2.0 * std::numbers::pi});
    const Vector2d preferred = uniform(rng, cfg.speed_range) * Vector2d(std::cos(heading), std::sin(heading));
    Vector2d v = preferred;
    int cls = 1;
    int consider = 1;
    if (coin(rng, cfg.distractor_rate)) {
      if (coin(rng)) {
        cls = 7;
      } else {
        consider = 0;
      }
    }
    int hidden = 0;
    for (int f = start; f < start + life; ++f) {
      if (f > start) {
        v += cfg.velocity_reversion * (preferred - v) + cfg.velocity_noise * Vector2d(normal(rng), normal(rng));
        c += v;
        height *= std::exp(0.002 * normal(rng));
      }
      if (hidden > 0) {
        --hidden;
        continue;
      }
      if (f > start && coin(rng, cfg.occlusion_rate)) {
        hidden = uniform_int(rng, {1, 15});
        continue;
      }
      const double h = height + cfg.annotation_noise * normal(rng);
      const double w = cfg.aspect * height + cfg.annotation_noise * normal(rng);
      const double cx = c.x() + cfg.annotation_noise * normal(rng);
      const double cy = c.y() + cfg.annotation_noise * normal(rng);
      MotRow r;
      r.frame = f;
      r.id = id;
      r.width = std::round(std::max(w, 2.0));
      r.height = std::round(std::max(h, 2.0));
      r.left = std::round(cx - 0.5 * r.width);
      r.top = std::round(cy - 0.5 * r.height);
      r.consider = consider;
      r.cls = cls;
      r.visibility = 1.0;
      rows.push_back(r);
    }
  }
  return rows;
}

std::vector<std::filesystem::path> write_pedestrian_mot(const PedestrianSimConfig& cfg,
                                                        const std::filesystem::path& dir,
                                                        const std::string& prefix) {
  std::vector<std::filesystem::path> paths;
  for (int s = 0; s < cfg.n_sequences; ++s) {
    std::string name = std::to_string(s + 1);
    if (name.size() < 2) name.insert(0, 2 - name.size(), '0');
    const auto path = dir / (prefix + name) / "gt" / "gt.txt";
    write_mot_file(path, simulate_pedestrian_sequence(cfg, s));
    paths.push_back(path);
  }
  return paths;
}

// ---------------------------------------------------------------- effective noise

Prop1Estimate prop1_oracle(const Dataset& data) {
  if (data.dim_x != 6 || data.dim_z != 4) throw InvalidArgument("prop1_oracle: expects Doppler data (6, 4)");
  const ObservationMap map = ObservationMap::doppler();
  std::vector<Vec> res;
  for (const auto& tr : data.trajectories) {
    for (int t = 0; t < tr.length(); ++t) {
      const Vec z = tr.observation(t);
      const Mat h = eval_observation_map(map, HEvalPolicy::at_observation, z);
      res.push_back(z - h * tr.state(t));
    }
  }
  const long n = static_cast<long>(res.size());
  if (n < 2) throw InsufficientData("prop1_oracle: need at least 2 samples");
  Vec mean = Vec::Zero(4);
  for (const auto& r : res) mean += r;
  mean /= static_cast<double>(n);
  Mat sum = Mat::Zero(4, 4);
  Mat sum_sq = Mat::Zero(4, 4);
  for (const auto& r : res) {
    const Vec c = r - mean;
    const Mat prod = c * c.transpose();
    sum += prod;
    sum_sq += prod.cwiseProduct(prod);
  }
  Prop1Estimate out;
  out.n = n;
  out.cov = sum / static_cast<double>(n - 1);
  const Mat mean_prod = sum / static_cast<double>(n);
  const Mat var_prod = (sum_sq / static_cast<double>(n) - mean_prod.cwiseProduct(mean_prod)) *
                       (static_cast<double>(n) / static_cast<double>(n - 1));
  out.std_err = (var_prod.cwiseMax(0.0) / static_cast<double>(n)).cwiseSqrt();
  return out;
}

}  // namespace okf
