#include "ectr/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ectr/error.hpp"

namespace ectr {

LossKind parse_loss(std::string_view name) {
  if (name == "mse") return LossKind::mse;
  if (name == "bce" || name == "bce_with_logit") return LossKind::bce_with_logit;
  if (name == "ce" || name == "multiclass_cross_entropy") return LossKind::multiclass_cross_entropy;
  throw ConfigError("unknown loss '" + std::string(name) +
                    "' (expected mse, bce_with_logit, multiclass_cross_entropy)");
}

std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::mse: return "mse";
    case LossKind::bce_with_logit: return "bce_with_logit";
    case LossKind::multiclass_cross_entropy: return "multiclass_cross_entropy";
  }
  return "?";
}

std::size_t LossSpec::logit_dim(std::size_t num_classes) const {
  return kind == LossKind::multiclass_cross_entropy ? num_classes : 1;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

namespace {

void check_scalar(std::span<const double> logits, std::string_view kind) {
  if (logits.size() != 1)
    throw ShapeError(std::string(kind) + " expects a single logit, got " +
                     std::to_string(logits.size()));
}

}  // namespace

LossEval loss_value_grad_hvp(const LossSpec& spec, std::span<const double> logits, double label,
                             std::span<const double> v) {
  if (!v.empty() && v.size() != logits.size())
    throw ShapeError("HVP direction length does not match logits");
  LossEval out;
  switch (spec.kind) {
    case LossKind::mse: {
      check_scalar(logits, "mse");
      const double r = logits[0] - label;
      out.value = r * r;
      out.grad = {2.0 * r};
      if (!v.empty()) out.hvp = {2.0 * v[0]};
      break;
    }
    case LossKind::bce_with_logit: {
      check_scalar(logits, "bce_with_logit");
      if (label != 0.0 && label != 1.0)
        throw InputError("binary label must be 0 or 1, got " + std::to_string(label));
      const double z = logits[0];
      const double p = sigmoid(z);
      out.value = softplus(z) - label * z;
      out.grad = {p - label};
      if (!v.empty()) out.hvp = {p * (1.0 - p) * v[0]};
      break;
    }
    case LossKind::multiclass_cross_entropy: {
      const auto k = logits.size();
      if (k < 2) throw ShapeError("multiclass cross-entropy needs at least two logits");
      if (label < 0.0 || label != std::floor(label) || label >= static_cast<double>(k))
        throw InputError("class label " + std::to_string(label) + " outside [0, " +
                         std::to_string(k) + ")");
      const auto y = static_cast<std::size_t>(label);
      const double zmax = *std::max_element(logits.begin(), logits.end());
      Vector p(k);
      double denom = 0.0;
      for (std::size_t j = 0; j < k; ++j) denom += (p[j] = std::exp(logits[j] - zmax));
      for (double& pj : p) pj /= denom;
      out.value = zmax + std::log(denom) - logits[y];
      out.grad = p;
      out.grad[y] -= 1.0;
      if (!v.empty()) {
        const double pv = dot(p, v);
        out.hvp.resize(k);
        for (std::size_t j = 0; j < k; ++j) out.hvp[j] = p[j] * (v[j] - pv);
      }
      break;
    }
  }
  return out;
}

double loss_value(const LossSpec& spec, std::span<const double> logits, double label) {
  return loss_value_grad_hvp(spec, logits, label, {}).value;
}

}  // namespace ectr
