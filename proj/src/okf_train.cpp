#include "okf/okf_train.hpp"

#include "okf/json_util.hpp"
#include "okf/noise_est.hpp"
#include "okf/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace okf {

using nlohmann::json;

std::string to_string(Parameterization p) {
  return p == Parameterization::diagonal ? "diagonal" : "full-cholesky";
}

std::optional<Parameterization> parse_parameterization(std::string_view s) {
  if (s == "full-cholesky" || s == "full") return Parameterization::full_cholesky;
  if (s == "diagonal") return Parameterization::diagonal;
  return std::nullopt;
}

// ---------------------------------------------------------------- params

Mat NoiseParams::Q() const {
  return kind == Parameterization::diagonal ? materialize_diagonal(theta_q) : materialize({theta_q, dim_x});
}

Mat NoiseParams::R() const {
  return kind == Parameterization::diagonal ? materialize_diagonal(theta_r) : materialize({theta_r, dim_z});
}

Vec NoiseParams::flat() const {
  Vec v(size());
  v << theta_q, theta_r;
  return v;
}

void NoiseParams::set_flat(const Vec& v) {
  if (v.size() != size()) throw InvalidArgument("NoiseParams::set_flat: size mismatch");
  theta_q = v.head(theta_q.size());
  theta_r = v.tail(theta_r.size());
}

NoiseParams NoiseParams::identity(int dim_x, int dim_z, Parameterization kind) {
  NoiseParams p;
  p.kind = kind;
  p.dim_x = dim_x;
  p.dim_z = dim_z;
  const bool diag = kind == Parameterization::diagonal;
  p.theta_q = Vec::Zero(diag ? dim_x : CholeskyVector::size_for(dim_x));
  p.theta_r = Vec::Zero(diag ? dim_z : CholeskyVector::size_for(dim_z));
  return p;
}

namespace {

Vec encode(const Mat& a, Parameterization kind, double jitter) {
  if (kind == Parameterization::diagonal) {
    Mat d = a.diagonal().asDiagonal();
    if ((d.diagonal().array() <= 0.0).any()) d = add_jitter(d, jitter);
    return parameterize_diagonal(d);
  }
  Mat m = a;
  symmetrize(m);
  if (!is_positive_definite(m)) m = add_jitter(m, jitter);
  return parameterize(m).theta;
}

}  // namespace

NoiseParams NoiseParams::from_matrices(const Mat& q, const Mat& r, Parameterization kind, double jitter) {
  NoiseParams p;
  p.kind = kind;
  p.dim_x = static_cast<int>(q.rows());
  p.dim_z = static_cast<int>(r.rows());
  p.theta_q = encode(q, kind, jitter);
  p.theta_r = encode(r, kind, jitter);
  return p;
}

// ---------------------------------------------------------------- config

void TrainConfig::validate(size_t n_train) const {
  if (batch_size < 1) throw InvalidArgument("train: batch_size must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidArgument("train: learning_rate must be positive");
  }
  if (epochs < 1) throw InvalidArgument("train: epochs must be positive");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw InvalidArgument("train: validation_fraction must lie in [0, 1)");
  }
  if (validation_every < 1) throw InvalidArgument("train: validation_every must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(adam_eps > 0.0)) {
    throw InvalidArgument("train: Adam constants out of range");
  }
  if (clip_norm < 0.0) throw InvalidArgument("train: clip_norm must be non-negative");
  if (loss == LossKind::custom && !custom_loss) throw InvalidArgument("train: custom loss selected but not set");
  if (n_train == 0) throw InvalidArgument("train: no training trajectories");
  if (static_cast<size_t>(batch_size) > n_train) {
    throw InvalidArgument("train: batch_size " + std::to_string(batch_size) + " exceeds the " +
                          std::to_string(n_train) + " training trajectories");
  }
}

json TrainConfig::to_json() const {
  return json{{"batch_size", batch_size},
              {"learning_rate", learning_rate},
              {"epochs", epochs},
              {"optimizer", optimizer == OptimizerKind::adam ? "adam" : "sgd"},
              {"beta1", beta1},
              {"beta2", beta2},
              {"adam_eps", adam_eps},
              {"loss", loss == LossKind::mse_masked ? "mse-masked" : "custom"},
              {"seed", seed},
              {"validation_fraction", validation_fraction},
              {"validation_every", validation_every},
              {"parameterization", okf::to_string(parameterization)},
              {"init", init == InitKind::warm_start ? "warm-start" : "cold-start"},
              {"jitter", jitter},
              {"clip_norm", clip_norm},
              {"keep_snapshots", keep_snapshots},
              {"divergence_factor", divergence_factor}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  try {
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    const std::string opt = j.value("optimizer", std::string("adam"));
    if (opt == "adam") {
      c.optimizer = OptimizerKind::adam;
    } else if (opt == "sgd") {
      c.optimizer = OptimizerKind::sgd;
    } else {
      throw InvalidArgument("train config: unknown optimizer " + opt);
    }
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    const std::string loss = j.value("loss", std::string("mse-masked"));
    if (loss != "mse-masked") throw InvalidArgument("train config: only mse-masked is available from a file");
    c.seed = j.value("seed", c.seed);
    c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
    c.validation_every = j.value("validation_every", c.validation_every);
    const std::string par = j.value("parameterization", std::string("full-cholesky"));
    const auto parsed = parse_parameterization(par);
    if (!parsed) throw InvalidArgument("train config: unknown parameterization " + par);
    c.parameterization = *parsed;
    const std::string init = j.value("init", std::string("warm-start"));
    if (init == "warm-start") {
      c.init = InitKind::warm_start;
    } else if (init == "cold-start") {
      c.init = InitKind::cold_start;
    } else {
      throw InvalidArgument("train config: unknown init " + init);
    }
    c.jitter = j.value("jitter", c.jitter);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.keep_snapshots = j.value("keep_snapshots", c.keep_snapshots);
    c.divergence_factor = j.value("divergence_factor", c.divergence_factor);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("train config: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------- loss + adjoint

Batch all_of(const Dataset& data) {
  Batch b;
  b.reserve(data.size());
  for (const auto& tr : data.trajectories) b.push_back(&tr);
  return b;
}

namespace {

double masked_mse(const Mask& mask, const Vec& est, const Vec& truth, Vec* g) {
  double sum = 0.0;
  if (g) g->setZero(est.size());
  for (Eigen::Index i = 0; i < est.size(); ++i) {
    if (!mask[i]) continue;
    const double e = est[i] - truth[i];
    sum += e * e;
    if (g) (*g)[i] = 2.0 * e;
  }
  return sum;
}

double step_loss(const ModelSpec& model, const StepLoss& custom, const Vec& est, const Vec& truth, Vec* g) {
  return custom ? custom(est, truth, g) : masked_mse(model.loss_mask, est, truth, g);
}

void check_trajectory(const ModelSpec& model, const SupervisedTrajectory& tr) {
  if (tr.states.cols() != model.dim_x() || tr.observations.cols() != model.dim_z()) {
    throw SchemaError("trajectory " + tr.id + ": dimensions differ from model " + model.name);
  }
}

struct TrajGrad {
  double loss = 0.0;
  Mat q_bar;
  Mat r_bar;
};

// Reverse pass through one rollout. Adjoints are carried for the posterior
// mean and covariance of the current step and pulled back through update and
// predict. Only the loss terms depend on the trajectory's true states.
TrajGrad trajectory_grad(const ModelSpec& model, const Mat& q, const Mat& r, const SupervisedTrajectory& tr,
                         const StepLoss& custom) {
  check_trajectory(model, tr);
  const int dx = model.dim_x();
  const int dz = model.dim_z();
  const Rollout ro = rollout(model, q, r, tr.observations, true);
  const int t0 = first_scored_step(model);
  const bool predict_next = model.objective == Objective::predict_next;

  TrajGrad out;
  out.q_bar = Mat::Zero(dx, dx);
  out.r_bar = Mat::Zero(dz, dz);
  const int n = tr.length();
  std::vector<Vec> loss_grad(static_cast<size_t>(n));
  for (int t = t0; t < n; ++t) {
    Vec g;
    out.loss += step_loss(model, custom, ro.outputs[static_cast<size_t>(t)].mean, tr.state(t), &g);
    loss_grad[static_cast<size_t>(t)] = std::move(g);
  }

  Vec x_bar = Vec::Zero(dx);  // adjoint of the posterior at the current step
  Mat p_bar = Mat::Zero(dx, dx);
  Mat f_scratch;
  for (auto it = ro.steps.rbegin(); it != ro.steps.rend(); ++it) {
    const StepRecord& s = *it;
    const int t = s.t;
    if (!predict_next && t >= t0) x_bar += loss_grad[static_cast<size_t>(t)];

    // Update: x = x- + K y, P = P- - B W B^T with B = P- H^T, W = S^-1, K = B W.
    const Eigen::LLT<Mat> llt(s.s);
    const Mat& h = s.h;
    const Mat& k = s.k;
    const Mat b = s.p_prior * h.transpose();
    const Mat p_bar_sym = p_bar + p_bar.transpose();

    const Mat k_bar = x_bar * s.innovation.transpose();
    const Vec y_bar = k.transpose() * x_bar;

    // K_bar W = (W K_bar^T)^T since W is symmetric.
    const Mat b_bar = -p_bar_sym * k + llt.solve(k_bar.transpose()).transpose();
    const Mat w_bar = -b.transpose() * p_bar * b + b.transpose() * k_bar;
    // S_bar = -W W_bar W.
    const Mat s_bar = -llt.solve(llt.solve(w_bar).transpose()).transpose();
    const Mat s_bar_sym = 0.5 * (s_bar + s_bar.transpose());

    Mat r_t_bar = s_bar_sym;
    if (model.r_coords == NoiseCoords::polar) {
      out.r_bar.noalias() += s.transform.transpose() * r_t_bar * s.transform;
    } else {
      out.r_bar += r_t_bar;
    }

    Vec xp_bar = x_bar - h.transpose() * y_bar;
    Mat pp_bar = p_bar + h.transpose() * s_bar_sym * h + b_bar * h;

    if (model.h_eval == HEvalPolicy::at_estimate && model.H.kind != ObservationKind::constant_matrix) {
      const Mat h_bar = 2.0 * s_bar_sym * h * s.p_prior + b_bar.transpose() * s.p_prior;
      xp_bar += observation_jacobian_vjp(model.H, s.x_prior, h_bar);
    }
    if (predict_next && t >= t0) xp_bar += loss_grad[static_cast<size_t>(t)];

    if (!s.predicted) break;
    // Predict: x- = F x, P- = F P F^T + Q.
    const Mat pp_sym = 0.5 * (pp_bar + pp_bar.transpose());
    out.q_bar += pp_sym;
    const Mat& f = transition(model, t, f_scratch);
    x_bar = f.transpose() * xp_bar;
    p_bar = f.transpose() * pp_sym * f;
  }
  return out;
}

Vec pull_back(const NoiseParams& params, const Mat& q_bar, const Mat& r_bar) {
  Vec g(params.size());
  if (params.kind == Parameterization::diagonal) {
    g << materialize_diagonal_vjp(params.theta_q, q_bar), materialize_diagonal_vjp(params.theta_r, r_bar);
  } else {
    g << materialize_vjp({params.theta_q, params.dim_x}, q_bar), materialize_vjp({params.theta_r, params.dim_z}, r_bar);
  }
  return g;
}

void check_batch(const NoiseParams& params, const ModelSpec& model, const Batch& batch) {
  if (batch.empty()) throw InvalidArgument("batch_loss: empty batch");
  if (params.dim_x != model.dim_x() || params.dim_z != model.dim_z()) {
    throw InvalidArgument("batch_loss: parameter dimensions differ from model " + model.name);
  }
}

}  // namespace

long scored_steps(const ModelSpec& model, const Batch& batch) {
  const int t0 = first_scored_step(model);
  long n = 0;
  for (const auto* tr : batch) n += std::max(0, tr->length() - t0);
  return n;
}

double rollout_loss(const ModelSpec& model, const Mat& q, const Mat& r, const SupervisedTrajectory& tr,
                    const StepLoss& loss) {
  check_trajectory(model, tr);
  const Rollout ro = rollout(model, q, r, tr.observations, false);
  double sum = 0.0;
  for (int t = first_scored_step(model); t < tr.length(); ++t) {
    sum += step_loss(model, loss, ro.outputs[static_cast<size_t>(t)].mean, tr.state(t), nullptr);
  }
  return sum;
}

double batch_loss(const NoiseParams& params, const ModelSpec& model, const Batch& batch, const StepLoss& loss) {
  check_batch(params, model, batch);
  const Mat q = params.Q();
  const Mat r = params.R();
  std::vector<double> parts(batch.size());
  parallel_for(batch.size(), [&](size_t i) {
    try {
      parts[i] = rollout_loss(model, q, r, *batch[i], loss);
    } catch (const Error&) {
      rethrow_with_context("trajectory " + batch[i]->id + ": ");
    }
  });
  const double total = std::accumulate(parts.begin(), parts.end(), 0.0);
  if (!std::isfinite(total)) throw NumericFailure("batch_loss: non-finite loss");
  return total;
}

LossAndGrad batch_loss_and_grad(const NoiseParams& params, const ModelSpec& model, const Batch& batch,
                                const StepLoss& loss) {
  check_batch(params, model, batch);
  const Mat q = params.Q();
  const Mat r = params.R();
  std::vector<TrajGrad> parts(batch.size());
  parallel_for(batch.size(), [&](size_t i) {
    try {
      parts[i] = trajectory_grad(model, q, r, *batch[i], loss);
    } catch (const Error&) {
      rethrow_with_context("trajectory " + batch[i]->id + ": ");
    }
  });
  LossAndGrad out;
  Mat q_bar = Mat::Zero(params.dim_x, params.dim_x);
  Mat r_bar = Mat::Zero(params.dim_z, params.dim_z);
  for (const auto& p : parts) {
    out.loss += p.loss;
    q_bar += p.q_bar;
    r_bar += p.r_bar;
  }
  if (!std::isfinite(out.loss)) throw NumericFailure("batch_loss: non-finite loss");
  out.grad = pull_back(params, q_bar, r_bar);
  if (!out.grad.allFinite()) throw NumericFailure("grad: non-finite gradient");
  out.scored_steps = scored_steps(model, batch);
  return out;
}

Vec grad(const NoiseParams& params, const ModelSpec& model, const Batch& batch, const StepLoss& loss) {
  return batch_loss_and_grad(params, model, batch, loss).grad;
}

// ---------------------------------------------------------------- optimizer

void adam_step(AdamState& st, Vec& params, const Vec& g, double lr) {
  if (st.m.size() != g.size() || st.v.size() != g.size() || params.size() != g.size()) {
    throw InvalidArgument("adam_step: dimension mismatch");
  }
  if (!g.allFinite()) throw NumericFailure("adam_step: non-finite gradient");
  ++st.step;
  st.m = st.beta1 * st.m + (1.0 - st.beta1) * g;
  st.v = st.beta2 * st.v + (1.0 - st.beta2) * g.cwiseProduct(g);
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  const Vec m_hat = st.m / c1;
  const Vec v_hat = st.v / c2;
  params.array() -= lr * m_hat.array() / (v_hat.array().sqrt() + st.eps);
}

// ---------------------------------------------------------------- training loop

TrainResult train(const Dataset& data, const ModelSpec& model, const TrainConfig& cfg) {
  model.validate();
  if (data.empty()) throw InvalidArgument("train: empty dataset");
  if (data.dim_x != model.dim_x() || data.dim_z != model.dim_z()) {
    throw SchemaError("train: dataset dimensions differ from model " + model.name);
  }
  std::mt19937_64 rng(cfg.seed);
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), size_t{0});

  Batch train_set;
  Batch val_set;
  if (cfg.validation_fraction > 0.0) {
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_val = std::max<size_t>(
        1, static_cast<size_t>(std::llround(cfg.validation_fraction * static_cast<double>(data.size()))));
    if (n_val >= data.size()) throw InvalidArgument("train: validation split leaves no training data");
    std::vector<size_t> val_idx(order.begin(), order.begin() + static_cast<long>(n_val));
    std::vector<size_t> train_idx(order.begin() + static_cast<long>(n_val), order.end());
    std::sort(val_idx.begin(), val_idx.end());
    std::sort(train_idx.begin(), train_idx.end());
    for (size_t i : val_idx) val_set.push_back(&data.trajectories[i]);
    for (size_t i : train_idx) train_set.push_back(&data.trajectories[i]);
  } else {
    train_set = all_of(data);
  }
  cfg.validate(train_set.size());
  const StepLoss loss = cfg.loss == LossKind::custom ? cfg.custom_loss : StepLoss{};

  NoiseParams params;
  if (cfg.initial) {
    params = *cfg.initial;
    if (params.dim_x != model.dim_x() || params.dim_z != model.dim_z()) {
      throw InvalidArgument("train: initial parameters have the wrong dimensions");
    }
  } else if (cfg.init == InitKind::warm_start) {
    Dataset train_data;
    train_data.dim_x = data.dim_x;
    train_data.dim_z = data.dim_z;
    for (const auto* tr : train_set) train_data.trajectories.push_back(*tr);
    const NoiseEstimate est = estimate_noise(train_data, model);
    params = NoiseParams::from_matrices(est.Q, est.R, cfg.parameterization, cfg.jitter);
  } else {
    params = NoiseParams::identity(model.dim_x(), model.dim_z(), cfg.parameterization);
  }

  TrainResult result;
  TrainTrace& trace = result.trace;
  Vec theta = params.flat();
  AdamState adam(theta.size());
  adam.beta1 = cfg.beta1;
  adam.beta2 = cfg.beta2;
  adam.eps = cfg.adam_eps;

  double best_val = std::numeric_limits<double>::infinity();
  Vec best_theta = theta;
  auto validate_now = [&](int step) {
    NoiseParams p = params;
    p.set_flat(theta);
    const double v = batch_loss(p, model, val_set, loss) / static_cast<double>(std::max(1L, scored_steps(model, val_set)));
    trace.validation.emplace_back(step, v);
    if (v < best_val) {
      best_val = v;
      best_theta = theta;
      trace.selected_step = step;
    }
  };
  if (!val_set.empty()) validate_now(0);

  const size_t n = train_set.size();
  const size_t bs = static_cast<size_t>(cfg.batch_size);
  std::vector<size_t> perm(n);
  int step = 0;
  double first_loss = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(perm.begin(), perm.end(), size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    for (size_t start = 0; start < n; start += bs) {
      Batch batch;
      for (size_t i = start; i < std::min(n, start + bs); ++i) batch.push_back(train_set[perm[i]]);
      NoiseParams p = params;
      p.set_flat(theta);
      LossAndGrad lg = batch_loss_and_grad(p, model, batch, loss);
      const double denom = static_cast<double>(std::max(1L, lg.scored_steps));
      const double mean_loss = lg.loss / denom;
      Vec g = lg.grad / denom;
      if (step == 0) first_loss = mean_loss;
      trace.loss.push_back(mean_loss);
      trace.grad_norm.push_back(g.norm());
      if (mean_loss > cfg.divergence_factor * std::max(first_loss, 1e-300)) {
        throw DivergenceError("train: loss diverged at step " + std::to_string(step), trace);
      }
      if (cfg.clip_norm > 0.0 && g.norm() > cfg.clip_norm) g *= cfg.clip_norm / g.norm();
      if (cfg.optimizer == OptimizerKind::adam) {
        adam_step(adam, theta, g, cfg.learning_rate);
      } else {
        if (!g.allFinite()) throw NumericFailure("sgd: non-finite gradient");
        theta -= cfg.learning_rate * g;
      }
      if (!theta.allFinite()) throw DivergenceError("train: parameters became non-finite", trace);
      ++step;
      if (cfg.keep_snapshots) trace.snapshots.push_back(theta);
      if (!val_set.empty() && step % cfg.validation_every == 0) validate_now(step);
    }
  }
  if (!val_set.empty()) {
    if (trace.validation.empty() || trace.validation.back().first != step) validate_now(step);
    theta = best_theta;
  }
  params.set_flat(theta);
  result.params = params;
  return result;
}

}  // namespace okf
