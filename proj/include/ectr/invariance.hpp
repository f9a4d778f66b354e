#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "ectr/loss.hpp"
#include "ectr/matrix.hpp"

namespace ectr {

enum class TvVariant { l1, l2 };

TvVariant parse_tv_variant(std::string_view name);
std::string_view to_string(TvVariant v);

/// Stationarity probe of the scalar head w at w = 1, one entry per sample.
struct ProbeRecord {
  Vector d;        ///< d_i = ⟨f_i, ∇_z ℓ(f_i, y_i)⟩
  Matrix dgrad_f;  ///< ∂d_i/∂f_i = ∇_z ℓ + H_z ℓ · f_i  (N × logit_dim)
  Vector loss;     ///< ℓ(f_i, y_i), carried along since it falls out of the same evaluation
  Matrix grad_f;   ///< ∇_z ℓ(f_i, y_i)

  std::size_t size() const noexcept { return d.size(); }
};

/// Probes every row of `logits` against its label.
ProbeRecord probe(const LossSpec& loss, const Matrix& logits, std::span<const double> labels);

struct TVPenalty {
  TvVariant variant = TvVariant::l1;
  Vector per_env_g;          ///< g_e = Σ_i π(i|e) d_i  (0 for inactive environments)
  std::vector<char> active;  ///< environments included in the average
  double value = 0.0;

  /// ∂value/∂g_e: sign(g_e)/E for l1 (sign(0) = 0), 2g_e/E for l2.
  double coefficient(std::size_t e) const;
};

/// (1/E)Σ|g_e| or (1/E)Σg_e² over active environments. An empty mask means all active.
TVPenalty tv_penalty(const Matrix& pi_cond, const ProbeRecord& probes, TvVariant variant,
                     std::span<const char> active = {});

/// Per-sample ∂P_TV/∂f_i, with π(·|e) held fixed.
Matrix tv_grad_wrt_logits(const Matrix& pi_cond, const ProbeRecord& probes,
                          const TVPenalty& penalty);

/// ∂P_TV/∂π(i|e) = coefficient(e)·d_i.
Matrix tv_grad_wrt_cond(const ProbeRecord& probes, const TVPenalty& penalty);

/// λ = softplus(ψ) ≥ 0.
double lambda_of(double psi);
/// dλ/dψ = sigmoid(ψ).
double lambda_grad(double psi);

}  // namespace ectr
