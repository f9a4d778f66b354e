#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "ectr/matrix.hpp"
#include "ectr/mlp.hpp"

namespace ectr {

// ---------------------------------------------------------------------------
// Tail-score adversary θ
// ---------------------------------------------------------------------------

enum class TailMode { score_network, free_scores };
enum class TailInputs { features, features_plus_detached_loss };

TailInputs parse_tail_inputs(std::string_view name);
std::string_view to_string(TailInputs t);

/// Emits one score per sample; softmax of the scores is the global batch distribution.
///
/// In score_network mode the scores are a small network of the features, optionally
/// with the per-sample loss appended as an extra input column. That loss column is a
/// plain value: nothing flows back from the scores into the predictor. In free_scores
/// mode the scores are the parameters themselves, one per sample of a fixed batch.
class TailAdversary {
 public:
  struct Pass {
    Vector scores;
    ForwardCache cache;
  };

  static TailAdversary network(PredictorParams net, TailInputs inputs);
  static TailAdversary free(Vector scores);

  TailMode mode() const noexcept { return mode_; }
  TailInputs inputs() const noexcept { return inputs_; }
  const PredictorParams& net() const noexcept { return net_; }

  /// `losses` is read only in features_plus_detached_loss mode.
  Pass evaluate(const Matrix& features, std::span<const double> losses) const;
  /// Gradient with respect to flatten() given ∂L/∂scores.
  Vector backward(const Pass& pass, std::span<const double> dscores) const;

  Vector flatten() const;
  void assign(std::span<const double> flat);
  std::size_t num_params() const;

 private:
  TailMode mode_ = TailMode::free_scores;
  TailInputs inputs_ = TailInputs::features;
  PredictorParams net_;
  Vector free_scores_;
};

// ---------------------------------------------------------------------------
// Environment membership m (N×E)
// ---------------------------------------------------------------------------

enum class AssignmentMode { hard, soft };

struct EnvAssignment {
  AssignmentMode mode = AssignmentMode::hard;
  Matrix mass;  ///< N×E; one-hot rows (hard) or row-stochastic rows (soft)

  /// One-hot rows from ids in [0, num_envs).
  static EnvAssignment hard(std::span<const int> ids, std::size_t num_envs);
  /// Validates entries in [0,1] and row sums 1 ± 1e-9.
  static EnvAssignment soft(Matrix m);

  std::size_t num_samples() const noexcept { return mass.rows(); }
  std::size_t num_envs() const noexcept { return mass.cols(); }
};

// ---------------------------------------------------------------------------
// Global and environment-conditioned weights
// ---------------------------------------------------------------------------

inline constexpr double kDefaultMassEpsilon = 1e-8;

struct WeightState {
  Vector pi_global;          ///< length N, on the simplex
  Vector mass_e;             ///< Σ_i π(i) m(i,e)
  Matrix pi_cond;            ///< N×E, column e is π(·|e)
  std::vector<char> active;  ///< environment e has mass ≥ 10ε in this batch
  double epsilon = kDefaultMassEpsilon;
  double kl_env = 0.0;

  std::size_t num_active() const;
};

/// Max-shifted softmax. Throws InputError on an empty or non-finite input.
Vector global_softmax(std::span<const double> scores);

/// mass_e, π(·|e) and the active mask. ε is added to mass_e before dividing and each
/// used column is then renormalized exactly, so Σ_i π(i|e) = 1 up to rounding.
/// Environments with mass below 10ε are marked inactive and their columns zeroed.
WeightState condition_on_envs(std::span<const double> pi, const EnvAssignment& assign,
                              double epsilon = kDefaultMassEpsilon);

/// Convenience: softmax, conditioning and the KL value in one call.
WeightState build_weight_state(std::span<const double> scores, const EnvAssignment& assign,
                               double epsilon = kDefaultMassEpsilon);

/// Unif_e(i) = m(i,e) / Σ_j m(j,e).
Matrix env_uniform(const EnvAssignment& assign);

/// Mean over active environments of KL(π(·|e) ‖ Unif_e), with 0·log 0 = 0. An empty
/// mask means every environment is active. Throws NumericError on a support violation.
///
/// The value does not depend on whether m is detached; that choice only changes the
/// gradient and is made in kl_env_grad_assignment.
double kl_env(const Matrix& pi_cond, const EnvAssignment& assign,
              std::span<const char> active = {});

// ---------------------------------------------------------------------------
// Reverse-mode helpers for the weighting chain
// ---------------------------------------------------------------------------

/// ∂L/∂s given ∂L/∂π, through the softmax Jacobian diag(π) − ππᵀ.
Vector softmax_backward(std::span<const double> pi, std::span<const double> dpi);

/// ∂L/∂π(i) given G = ∂L/∂π(i|e) (N×E), through π(i|e) = π(i)m(i,e)/mass_e.
Vector conditional_backward_pi(const WeightState& ws, const EnvAssignment& assign,
                               const Matrix& dcond);

/// ∂L/∂m(i,e) given G = ∂L/∂π(i|e), through the same map with π held fixed.
Matrix conditional_backward_assignment(const WeightState& ws, const EnvAssignment& assign,
                                       const Matrix& dcond);

/// ∂KL_env/∂π(i|e), m held fixed.
Matrix kl_env_grad_cond(const WeightState& ws, const EnvAssignment& assign);

/// ∂KL_env/∂m. When `detach_assignment` is set the result is identically zero; otherwise
/// it is the full derivative through both π(·|e) and Unif_e.
Matrix kl_env_grad_assignment(const WeightState& ws, const EnvAssignment& assign,
                              bool detach_assignment);

// ---------------------------------------------------------------------------
// KL-regularized worst-case reweighting within one environment
// ---------------------------------------------------------------------------

/// Σ π ℓ − β·KL(π ‖ base). Returns -inf when π puts mass outside base's support.
double kl_dro_objective(std::span<const double> pi, std::span<const double> losses,
                        std::span<const double> base, double beta);

/// Closed-form maximizer: π*(i) ∝ base(i)·exp(ℓ_i/β), max-shifted.
Vector gibbs_tail_distribution(std::span<const double> losses, std::span<const double> base,
                               double beta);

/// Optimal objective value β·log Σ base·exp(ℓ/β), max-shifted.
double kl_dro_optimal_value(std::span<const double> losses, std::span<const double> base,
                            double beta);

struct KlDroSearchResult {
  Vector argmax;
  double objective = 0.0;
};

/// Search-only maximizer of kl_dro_objective for N ≤ 6, used as a test oracle: a full
/// simplex grid (when it fits) followed by zooming pairwise mass-transfer grids until no
/// pair improves. Never consults the closed form.
KlDroSearchResult brute_force_kl_dro(std::span<const double> losses, std::span<const double> base,
                                     double beta, std::size_t grid_resolution = 200);

}  // namespace ectr
