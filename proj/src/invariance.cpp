#include "ectr/invariance.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ectr/error.hpp"

namespace ectr {

TvVariant parse_tv_variant(std::string_view name) {
  if (name == "l1") return TvVariant::l1;
  if (name == "l2") return TvVariant::l2;
  throw ConfigError("unknown TV variant '" + std::string(name) + "' (expected l1, l2)");
}

std::string_view to_string(TvVariant v) { return v == TvVariant::l1 ? "l1" : "l2"; }

ProbeRecord probe(const LossSpec& loss, const Matrix& logits, std::span<const double> labels) {
  if (labels.size() != logits.rows()) throw ShapeError("one label per logit row required");
  if (!logits.all_finite()) throw NumericError("non-finite logits in probe");
  const auto n = logits.rows();
  const auto k = logits.cols();
  ProbeRecord rec;
  rec.d.resize(n);
  rec.loss.resize(n);
  rec.dgrad_f = Matrix(n, k);
  rec.grad_f = Matrix(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    const auto f = logits.row(i);
    // The HVP direction is f itself: d/df ⟨f, ∇ℓ(f)⟩ = ∇ℓ(f) + H(f)·f.
    const auto ev = loss_value_grad_hvp(loss, f, labels[i], f);
    rec.loss[i] = ev.value;
    rec.d[i] = dot(f, ev.grad);
    for (std::size_t j = 0; j < k; ++j) {
      rec.grad_f(i, j) = ev.grad[j];
      rec.dgrad_f(i, j) = ev.grad[j] + ev.hvp[j];
    }
  }
  return rec;
}

double TVPenalty::coefficient(std::size_t e) const {
  if (!active[e]) return 0.0;
  const auto used = static_cast<double>(std::count(active.begin(), active.end(), char{1}));
  const double g = per_env_g[e];
  if (variant == TvVariant::l2) return 2.0 * g / used;
  const double sign = g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
  return sign / used;
}

TVPenalty tv_penalty(const Matrix& pi_cond, const ProbeRecord& probes, TvVariant variant,
                     std::span<const char> active) {
  const auto e_count = pi_cond.cols();
  if (e_count == 0) throw InputError("TV penalty needs at least one environment");
  if (pi_cond.rows() != probes.size()) throw ShapeError("probe count does not match batch size");
  if (!active.empty() && active.size() != e_count) throw ShapeError("active mask length mismatch");

  TVPenalty p;
  p.variant = variant;
  p.per_env_g.assign(e_count, 0.0);
  p.active = active.empty() ? std::vector<char>(e_count, 1)
                            : std::vector<char>(active.begin(), active.end());
  std::size_t used = 0;
  double total = 0.0;
  for (std::size_t e = 0; e < e_count; ++e) {
    if (!p.active[e]) continue;
    ++used;
    double g = 0.0;
    for (std::size_t i = 0; i < pi_cond.rows(); ++i) g += pi_cond(i, e) * probes.d[i];
    p.per_env_g[e] = g;
    total += variant == TvVariant::l1 ? std::abs(g) : g * g;
  }
  if (used == 0) throw InputError("TV penalty has no active environment");
  p.value = total / static_cast<double>(used);
  return p;
}

Matrix tv_grad_wrt_logits(const Matrix& pi_cond, const ProbeRecord& probes,
                          const TVPenalty& penalty) {
  const auto n = probes.size();
  const auto k = probes.dgrad_f.cols();
  if (pi_cond.rows() != n || pi_cond.cols() != penalty.per_env_g.size())
    throw ShapeError("TV gradient inputs disagree in shape");
  Matrix up(n, k);
  for (std::size_t e = 0; e < pi_cond.cols(); ++e) {
    const double c = penalty.coefficient(e);
    if (c == 0.0) continue;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = c * pi_cond(i, e);
      for (std::size_t j = 0; j < k; ++j) up(i, j) += w * probes.dgrad_f(i, j);
    }
  }
  return up;
}

Matrix tv_grad_wrt_cond(const ProbeRecord& probes, const TVPenalty& penalty) {
  Matrix g(probes.size(), penalty.per_env_g.size());
  for (std::size_t e = 0; e < g.cols(); ++e) {
    const double c = penalty.coefficient(e);
    for (std::size_t i = 0; i < g.rows(); ++i) g(i, e) = c * probes.d[i];
  }
  return g;
}

double lambda_of(double psi) { return softplus(psi); }

double lambda_grad(double psi) { return sigmoid(psi); }

}  // namespace ectr
