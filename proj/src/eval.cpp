#include "okf/eval.hpp"

#include "okf/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <random>

namespace okf {

using nlohmann::json;

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::pair<double, double> normal_ci95(const std::vector<double>& v) {
  const double m = mean_of(v);
  if (v.size() < 2) return {m, m};
  const double half = 1.96 * sample_std(v) / std::sqrt(static_cast<double>(v.size()));
  return {m - half, m + half};
}

std::pair<double, double> bootstrap_ci95(const std::vector<double>& v, int n_resamples, uint64_t seed) {
  if (v.empty()) return {0.0, 0.0};
  if (n_resamples < 1) throw InvalidArgument("bootstrap: need at least one resample");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<size_t> pick(0, v.size() - 1);
  std::vector<double> means(static_cast<size_t>(n_resamples));
  for (auto& m : means) {
    double s = 0.0;
    for (size_t i = 0; i < v.size(); ++i) s += v[pick(rng)];
    m = s / static_cast<double>(v.size());
  }
  std::sort(means.begin(), means.end());
  auto at = [&](double q) {
    const auto idx = static_cast<size_t>(std::clamp(q * static_cast<double>(means.size() - 1), 0.0,
                                                    static_cast<double>(means.size() - 1)));
    return means[idx];
  };
  return {at(0.025), at(0.975)};
}

double gaussian_nll(const Vec& x, const Vec& mean, const Mat& cov) {
  const Eigen::LLT<Mat> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericFailure("gaussian_nll: covariance is not positive definite");
  const Vec e = x - mean;
  const double maha = e.dot(llt.solve(e));
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return 0.5 * (static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi) + logdet + maha);
}

TrajectoryMetrics trajectory_metrics(const ModelSpec& model, const Mat& q, const Mat& r,
                                     const SupervisedTrajectory& tr, bool compute_nll) {
  const Rollout ro = rollout(model, q, r, tr.observations, false);
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < model.loss_mask.size(); ++i) {
    if (model.loss_mask[i]) idx.push_back(i);
  }
  const auto k = static_cast<Eigen::Index>(idx.size());
  TrajectoryMetrics m;
  double se = 0.0;
  double nll = 0.0;
  for (int t = first_scored_step(model); t < tr.length(); ++t) {
    const auto& out = ro.outputs[static_cast<size_t>(t)];
    Vec est(k), truth(k);
    for (Eigen::Index i = 0; i < k; ++i) {
      est[i] = out.mean[idx[static_cast<size_t>(i)]];
      truth[i] = tr.states(t, idx[static_cast<size_t>(i)]);
    }
    se += (est - truth).squaredNorm();
    if (compute_nll && k > 0) {
      Mat cov(k, k);
      for (Eigen::Index i = 0; i < k; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) cov(i, j) = out.cov(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
      }
      nll += gaussian_nll(truth, est, cov);
    }
    ++m.steps;
  }
  if (m.steps > 0) {
    m.mse = se / m.steps;
    m.nll = nll / m.steps;
  }
  return m;
}

EvalReport evaluate(const ModelSpec& model, const Mat& q, const Mat& r, const Dataset& test,
                    const EvalOptions& opts) {
  model.validate();
  if (test.dim_x != model.dim_x() || test.dim_z != model.dim_z()) {
    throw SchemaError("evaluate: dataset dimensions differ from model " + model.name);
  }
  if (q.rows() != model.dim_x() || q.cols() != model.dim_x() || r.rows() != model.dim_z() ||
      r.cols() != model.dim_z()) {
    throw InvalidArgument("evaluate: Q/R dimensions differ from model " + model.name);
  }
  struct Slot {
    TrajectoryMetrics m;
    std::string error;
    bool failed = false;
  };
  std::vector<Slot> slots(test.size());
  parallel_for(test.size(), [&](size_t i) {
    try {
      slots[i].m = trajectory_metrics(model, q, r, test.trajectories[i], opts.compute_nll);
      if (!std::isfinite(slots[i].m.mse) || !std::isfinite(slots[i].m.nll)) {
        throw NumericFailure("non-finite metric");
      }
    } catch (const Error& e) {
      slots[i].failed = true;
      slots[i].error = e.what();
    }
  });
  EvalReport rep;
  for (size_t i = 0; i < slots.size(); ++i) {
    const auto& id = test.trajectories[i].id;
    if (slots[i].failed) {
      rep.failed_ids.push_back(id);
      rep.failure_messages.push_back(slots[i].error);
      continue;
    }
    if (slots[i].m.steps == 0) {
      ++rep.n_skipped;
      continue;
    }
    rep.ids.push_back(id);
    rep.per_trajectory_mse.push_back(slots[i].m.mse);
    if (opts.compute_nll) rep.per_trajectory_nll.push_back(slots[i].m.nll);
  }
  rep.n = static_cast<int>(rep.per_trajectory_mse.size());
  rep.aggregate_mse = mean_of(rep.per_trajectory_mse);
  if (opts.compute_nll && rep.n > 0) rep.aggregate_nll = mean_of(rep.per_trajectory_nll);
  rep.ci95 = opts.bootstrap ? bootstrap_ci95(rep.per_trajectory_mse, opts.n_bootstrap, opts.seed)
                            : normal_ci95(rep.per_trajectory_mse);
  return rep;
}

json EvalReport::to_json(bool per_trajectory) const {
  json j{{"aggregate_mse", aggregate_mse},
         {"aggregate_nll", aggregate_nll ? json(*aggregate_nll) : json(nullptr)},
         {"ci95", {ci95.first, ci95.second}},
         {"n", n},
         {"n_skipped", n_skipped},
         {"n_failed", failed_ids.size()},
         {"failed_ids", failed_ids},
         {"failure_messages", failure_messages}};
  if (per_trajectory) {
    j["ids"] = ids;
    j["per_trajectory_mse"] = per_trajectory_mse;
    j["per_trajectory_nll"] = per_trajectory_nll;
  }
  return j;
}

ComparisonResult compare_paired(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw InvalidArgument("compare_paired: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()) +
                          " per-trajectory errors");
  }
  if (a.empty()) throw InvalidArgument("compare_paired: no trajectories");
  ComparisonResult c;
  c.deltas.resize(a.size());
  for (size_t i = 0; i < a.size(); ++i) c.deltas[i] = a[i] - b[i];
  c.mean_delta = mean_of(c.deltas);
  c.std_delta = sample_std(c.deltas);
  const double ma = mean_of(a);
  const double mb = mean_of(b);
  c.mse_ratio = (ma == mb) ? 1.0 : ma / mb;
  const bool constant = std::all_of(c.deltas.begin(), c.deltas.end(), [&](double d) { return d == c.deltas[0]; });
  if (constant || c.std_delta == 0.0) {
    c.degenerate = true;
    c.z = c.mean_delta == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), c.mean_delta);
  } else {
    c.z = c.mean_delta / c.std_delta * std::sqrt(static_cast<double>(a.size()));
  }
  c.p_value = c.degenerate && c.mean_delta == 0.0 ? 1.0 : std::erfc(std::abs(c.z) / std::numbers::sqrt2);
  return c;
}

ComparisonResult compare_reports(const EvalReport& a, const EvalReport& b) {
  std::map<std::string, double> bm;
  for (size_t i = 0; i < b.ids.size(); ++i) bm[b.ids[i]] = b.per_trajectory_mse[i];
  std::vector<double> va, vb;
  for (size_t i = 0; i < a.ids.size(); ++i) {
    auto it = bm.find(a.ids[i]);
    if (it == bm.end()) continue;
    va.push_back(a.per_trajectory_mse[i]);
    vb.push_back(it->second);
  }
  return compare_paired(va, vb);
}

json ComparisonResult::to_json() const {
  return json{{"z", z},
              {"mse_ratio", mse_ratio},
              {"mean_delta", mean_delta},
              {"std_delta", std_delta},
              {"p_value", p_value},
              {"degenerate", degenerate},
              {"n", deltas.size()}};
}

}  // namespace okf
