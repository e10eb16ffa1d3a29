#pragma once

#include "okf/data.hpp"
#include "okf/kf_core.hpp"
#include "okf/spd_param.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace okf {

enum class Parameterization { full_cholesky, diagonal };

std::string to_string(Parameterization p);
std::optional<Parameterization> parse_parameterization(std::string_view s);

/// Trainable noise parameters. Full mode stores Cholesky vectors (see
/// CholeskyVector); diagonal mode stores log standard deviations.
struct NoiseParams {
  Parameterization kind = Parameterization::full_cholesky;
  int dim_x = 0;
  int dim_z = 0;
  Vec theta_q;
  Vec theta_r;

  Mat Q() const;
  Mat R() const;
  Eigen::Index size() const { return theta_q.size() + theta_r.size(); }
  /// theta_q followed by theta_r.
  Vec flat() const;
  void set_flat(const Vec& v);

  static NoiseParams identity(int dim_x, int dim_z, Parameterization kind);
  /// Parameterizes (q, r). A matrix that is not PD gets add_jitter(., jitter)
  /// first; diagonal mode keeps only the diagonal.
  static NoiseParams from_matrices(const Mat& q, const Mat& r, Parameterization kind, double jitter = 1e-4);
};

/// Per-step loss on the recorded estimate. Returns the loss and, when `grad`
/// is non-null, writes d loss / d estimate into it.
using StepLoss = std::function<double(const Vec& estimate, const Vec& truth, Vec* grad)>;

enum class OptimizerKind { adam, sgd };
enum class LossKind { mse_masked, custom };
enum class InitKind { warm_start, cold_start };

struct TrainConfig {
  int batch_size = 10;
  double learning_rate = 0.01;
  int epochs = 1;
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  LossKind loss = LossKind::mse_masked;
  StepLoss custom_loss;  // LossKind::custom
  uint64_t seed = 0;
  double validation_fraction = 0.0;
  /// Validation is evaluated every this many optimizer steps and after the last one.
  int validation_every = 10;
  Parameterization parameterization = Parameterization::full_cholesky;
  InitKind init = InitKind::warm_start;
  double jitter = 1e-4;
  /// Global gradient-norm clip; 0 disables.
  double clip_norm = 0.0;
  bool keep_snapshots = false;
  /// Divergence when the per-step loss exceeds this multiple of the first one.
  double divergence_factor = 1e12;
  /// Starting point overriding `init`.
  std::optional<NoiseParams> initial;

  /// Throws InvalidArgument. `n_train` is the number of trajectories available for batches.
  void validate(size_t n_train) const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults.
  static TrainConfig from_json(const nlohmann::json& j);
};

struct TrainTrace {
  std::vector<double> loss;       // mean per-step batch loss at each optimizer step
  std::vector<double> grad_norm;  // before clipping
  std::vector<Vec> snapshots;     // params after each step when kept
  std::vector<std::pair<int, double>> validation;  // (step, mean per-step loss)
  int selected_step = -1;  // step whose params were returned; -1 = final
};

class DivergenceError : public NumericFailure {
 public:
  DivergenceError(const std::string& what, TrainTrace trace) : NumericFailure(what), trace_(std::move(trace)) {}
  const TrainTrace& trace() const { return trace_; }

 private:
  TrainTrace trace_;
};

using Batch = std::vector<const SupervisedTrajectory*>;
Batch all_of(const Dataset& data);

struct LossAndGrad {
  double loss = 0.0;
  Vec grad;
  long scored_steps = 0;
};

/// Summed per-step loss over all scored steps of every trajectory in the batch.
double batch_loss(const NoiseParams& params, const ModelSpec& model, const Batch& batch,
                  const StepLoss& loss = {});

/// Loss and its exact gradient with respect to params.flat(), by reverse-mode
/// accumulation through the whole filter recursion.
LossAndGrad batch_loss_and_grad(const NoiseParams& params, const ModelSpec& model, const Batch& batch,
                                const StepLoss& loss = {});

/// Gradient only.
Vec grad(const NoiseParams& params, const ModelSpec& model, const Batch& batch, const StepLoss& loss = {});

/// Number of steps that enter the loss over a batch.
long scored_steps(const ModelSpec& model, const Batch& batch);

/// Same as batch_loss for explicit matrices.
double rollout_loss(const ModelSpec& model, const Mat& q, const Mat& r, const SupervisedTrajectory& tr,
                    const StepLoss& loss = {});

struct AdamState {
  Vec m;
  Vec v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(Eigen::Index n = 0) : m(Vec::Zero(n)), v(Vec::Zero(n)) {}
};

/// One bias-corrected Adam update of `params` in place.
void adam_step(AdamState& state, Vec& params, const Vec& g, double lr);

struct TrainResult {
  NoiseParams params;
  TrainTrace trace;
};

TrainResult train(const Dataset& data, const ModelSpec& model, const TrainConfig& cfg);

}  // namespace okf
