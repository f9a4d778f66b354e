#pragma once

#include <span>
#include <string_view>

#include "ectr/matrix.hpp"

namespace ectr {

enum class LossKind { mse, bce_with_logit, multiclass_cross_entropy };

LossKind parse_loss(std::string_view name);
std::string_view to_string(LossKind k);

struct LossSpec {
  LossKind kind = LossKind::bce_with_logit;

  /// Number of logits this loss consumes per sample for a problem with `num_classes`.
  std::size_t logit_dim(std::size_t num_classes) const;
  bool is_classification() const { return kind != LossKind::mse; }
};

struct LossEval {
  double value = 0.0;
  Vector grad;  ///< ∇_z ℓ(z, y)
  Vector hvp;   ///< H_z ℓ(z, y) · v
};

/// Value, logit gradient and Hessian-vector product of one sample's loss.
///
/// Labels: mse takes a real target and a single logit; bce_with_logit takes 0 or 1 and a
/// single logit; multiclass_cross_entropy takes a class index in [0, logits.size()).
/// An empty `v` skips the HVP (returned empty).
LossEval loss_value_grad_hvp(const LossSpec& spec, std::span<const double> logits, double label,
                             std::span<const double> v);

double loss_value(const LossSpec& spec, std::span<const double> logits, double label);

double sigmoid(double x);
/// ln(1 + eˣ) without overflow.
double softplus(double x);

}  // namespace ectr
