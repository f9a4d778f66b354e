#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ectr/data.hpp"
#include "ectr/envinfer.hpp"
#include "ectr/error.hpp"
#include "ectr/invariance.hpp"
#include "ectr/loss.hpp"
#include "ectr/mlp.hpp"
#include "ectr/optimizer.hpp"
#include "ectr/rng.hpp"
#include "ectr/weighting.hpp"

namespace ectr {

enum class Method { erm, irmv1, group_dro, irm_tv_l1, ood_tv_irm_l1, ectr_known, ectr_inferred };

Method parse_method(std::string_view name);
std::string_view to_string(Method m);
/// Comma-separated list of every method name, for error messages.
std::string method_names();
bool requires_env_ids(Method m);

struct TrainConfig {
  Method method = Method::ectr_known;
  LossSpec loss;
  std::size_t num_classes = 2;

  // predictor Φ
  std::vector<std::size_t> hidden;
  Activation activation = Activation::tanh;
  double init_gain = 1.0;

  // objective
  double beta = 0.5;       ///< KL_env coefficient
  double gamma = 1.0;      ///< IRMv1 penalty weight
  double tv_lambda = 1.0;  ///< fixed multiplier for irm_tv_l1
  TvVariant tv_variant = TvVariant::l1;
  double psi_init = 0.0;
  double epsilon = kDefaultMassEpsilon;
  double group_dro_step = 0.01;

  // tail adversary θ
  TailMode tail_mode = TailMode::score_network;
  TailInputs tail_inputs = TailInputs::features;
  std::vector<std::size_t> tail_hidden{8};
  double tail_init_gain = 0.5;

  // environment inference η
  std::size_t latent_envs = 2;
  std::vector<std::size_t> infer_hidden;
  double infer_temperature = 1.0;
  double infer_init_gain = 1.0;
  std::size_t k_inner = 1;

  // schedule
  std::size_t epochs = 500;
  std::size_t batch_size = 0;  ///< 0 or ≥ N means full batch
  OptimizerConfig opt_phi{OptimizerKind::adam, 0.05};
  OptimizerConfig opt_theta{OptimizerKind::adam, 0.01};
  OptimizerConfig opt_psi{OptimizerKind::adam, 0.05};
  OptimizerConfig opt_eta{OptimizerKind::adam, 0.05};
  std::size_t eval_every = 1;  ///< test evaluation cadence in epochs; the last epoch is always evaluated

  std::uint64_t seed = 0;

  void validate() const;
};

struct OuterLossBreakdown {
  double r_main = 0.0;
  double p_tv = 0.0;
  double kl_env = 0.0;
  double lambda = 0.0;
  double total = 0.0;
};

/// Raised when L_outer turns non-finite; carries the offending breakdown.
class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& what, OuterLossBreakdown snapshot)
      : NumericError(what), snapshot_(snapshot) {}
  const OuterLossBreakdown& snapshot() const noexcept { return snapshot_; }

 private:
  OuterLossBreakdown snapshot_;
};

/// Every learnable quantity of one run. `probe_w` lives inside `phi` and stays 1.
struct Players {
  PredictorParams phi;
  std::optional<TailAdversary> theta;
  double psi = 0.0;
  std::optional<EnvInferenceNet> eta;
  Vector group_weights;  ///< group DRO mixture over environments
};

// ---------------------------------------------------------------------------
// Objective and gradients for one batch
// ---------------------------------------------------------------------------

enum class LambdaMode { zero, fixed, dual };

/// How L_outer is assembled for a batch; derived from TrainConfig by objective_settings.
struct ObjectiveSettings {
  LossSpec loss;
  TvVariant variant = TvVariant::l1;
  double beta = 0.0;
  LambdaMode lambda_mode = LambdaMode::dual;
  double fixed_lambda = 0.0;
  bool tail = true;  ///< false: π uniform within each environment, θ absent
  double epsilon = kDefaultMassEpsilon;
};

ObjectiveSettings objective_settings(const TrainConfig& config);

struct OuterEvaluation {
  OuterLossBreakdown breakdown;
  Vector env_risks;  ///< R_{e,θ}; 0 for inactive environments
  ProbeRecord probes;
  WeightState weights;
  TVPenalty tv;
  Vector grad_phi;
  Vector grad_theta;  ///< empty when θ is absent
  double grad_psi = 0.0;
};

/// L_outer = R_main + λ·P_TV − β·KL_env on one batch and the gradient of L_outer with
/// respect to Φ, θ and Ψ, all at the current parameters. θ sees the losses as values.
OuterEvaluation evaluate_outer(const Players& players, const Batch& batch, const EnvAssignment& assign,
                               const ObjectiveSettings& settings);

/// R_{e,θ} = Σ_i π(i|e) ℓ_i per environment and R_main, their mean over active environments.
struct TailRisks {
  Vector per_env;
  double main = 0.0;
};
TailRisks tail_risks(std::span<const double> losses, const Matrix& pi_cond, std::span<const char> active = {});

struct PlayerOptimizers {
  Optimizer phi;
  Optimizer theta;
  Optimizer psi;
  Optimizer eta;

  explicit PlayerOptimizers(const TrainConfig& config);
};

/// One descent step on Φ and one ascent step on θ and Ψ, all from gradients of the same
/// pre-update L_outer. Ψ moves only in LambdaMode::dual. Returns the evaluation used.
OuterEvaluation outer_step(Players& players, const Batch& batch, const EnvAssignment& assign,
                           const ObjectiveSettings& settings, PlayerOptimizers& optimizers);

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EnvMetric {
  std::string name;
  std::size_t samples = 0;
  double value = 0.0;
};

struct EvalResult {
  std::string metric;  ///< "accuracy" or "mse"
  std::vector<EnvMetric> per_env;
  double mean = 0.0;
  double worst = 0.0;  ///< min accuracy or max mse
  std::vector<std::string> warnings;
};

/// Accuracy (threshold at probability 0.5, or argmax) for classification losses, mean
/// squared residual for mse. Empty splits are skipped with a warning.
EvalResult evaluate(const PredictorParams& params, const LossSpec& loss, std::span<const Batch> splits,
                    std::span<const std::string> names);

// ---------------------------------------------------------------------------
// Full runs
// ---------------------------------------------------------------------------

struct EpochRecord {
  std::size_t epoch = 0;
  OuterLossBreakdown breakdown;  ///< averaged over the epoch's steps
  double test_mean = 0.0;
  double test_worst = 0.0;
  bool evaluated = false;
};

struct RunReport {
  Method method = Method::erm;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> config_echo;
  std::vector<EpochRecord> trace;
  EvalResult final_test;
  std::vector<std::string> events;  ///< degenerate-mass and evaluation warnings
  std::size_t degenerate_events = 0;
  std::vector<int> group_dro_selected;  ///< per step, environment with the largest risk
  double final_lambda = 0.0;
};

/// Owns the players, optimizers and batch schedule of one run.
class Trainer {
 public:
  Trainer(TrainConfig config, const Dataset& dataset);

  /// One outer iteration (plus k_inner inner ascent steps for ectr_inferred) on `batch`.
  OuterLossBreakdown step(const Batch& batch);
  /// Trains for config.epochs and evaluates on the test splits.
  RunReport run();

  /// Minibatches of one epoch: environment-stratified when ids are used, otherwise a
  /// shuffled partition. A full batch keeps the natural order.
  std::vector<Batch> epoch_batches();

  /// The assignment the next step would use for `batch`.
  EnvAssignment assignment_for(const Batch& batch) const;

  const Players& players() const noexcept { return players_; }
  Players& players() noexcept { return players_; }
  const TrainConfig& config() const noexcept { return config_; }
  const ObjectiveSettings& settings() const noexcept { return settings_; }
  const RunReport& report() const noexcept { return report_; }

 private:
  OuterLossBreakdown group_dro_step(const Batch& batch);
  void note_degenerate(const WeightState& ws);

  TrainConfig config_;
  const Dataset& data_;
  ObjectiveSettings settings_;
  Players players_;
  PlayerOptimizers optimizers_;
  Rng batch_rng_;
  RunReport report_;
  std::size_t epoch_ = 0;
  std::size_t step_in_epoch_ = 0;
};

RunReport train(const TrainConfig& config, const Dataset& dataset);

/// Key/value echo of every field, used by reports and manifests.
std::vector<std::pair<std::string, std::string>> describe(const TrainConfig& config);

}  // namespace ectr
