#include "ectr/optimizer.hpp"

#include <cmath>

#include "ectr/error.hpp"

namespace ectr {

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "sgd_momentum" || name == "momentum") return OptimizerKind::sgd_momentum;
  if (name == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + std::string(name) + "' (expected sgd, sgd_momentum, adam)");
}

std::string_view to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::sgd_momentum: return "sgd_momentum";
    case OptimizerKind::adam: return "adam";
  }
  return "?";
}

Optimizer::Optimizer(OptimizerConfig config, std::string player)
    : config_(config), player_(std::move(player)) {
  if (!(config_.step >= 0.0) || !std::isfinite(config_.step))
    throw ConfigError("step size for " + player_ + " must be a finite nonnegative number");
}

void Optimizer::step(std::span<double> params, std::span<const double> grads, Direction dir) {
  if (params.size() != grads.size())
    throw ShapeError("[" + player_ + "] gradient length " + std::to_string(grads.size()) +
                     " does not match parameter length " + std::to_string(params.size()));
  if (!all_finite(grads)) throw NumericError("non-finite gradient", player_);

  const double sign = dir == Direction::descent ? -1.0 : 1.0;
  const double a = config_.step;
  ++t_;
  switch (config_.kind) {
    case OptimizerKind::sgd:
      for (std::size_t k = 0; k < params.size(); ++k) params[k] += sign * a * grads[k];
      break;
    case OptimizerKind::sgd_momentum:
      if (m_.empty()) m_.assign(params.size(), 0.0);
      if (m_.size() != params.size()) throw ShapeError("[" + player_ + "] momentum buffer mismatch");
      for (std::size_t k = 0; k < params.size(); ++k) {
        m_[k] = config_.momentum * m_[k] + grads[k];
        params[k] += sign * a * m_[k];
      }
      break;
    case OptimizerKind::adam: {
      if (m_.empty()) {
        m_.assign(params.size(), 0.0);
        v_.assign(params.size(), 0.0);
      }
      if (m_.size() != params.size()) throw ShapeError("[" + player_ + "] adam buffer mismatch");
      const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
      const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
      for (std::size_t k = 0; k < params.size(); ++k) {
        m_[k] = config_.beta1 * m_[k] + (1.0 - config_.beta1) * grads[k];
        v_[k] = config_.beta2 * v_[k] + (1.0 - config_.beta2) * grads[k] * grads[k];
        const double mhat = m_[k] / c1;
        const double vhat = v_[k] / c2;
        params[k] += sign * a * mhat / (std::sqrt(vhat) + config_.eps);
      }
      break;
    }
  }
}

}  // namespace ectr
