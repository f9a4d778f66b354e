#pragma once

#include <span>
#include <string>
#include <string_view>

#include "ectr/matrix.hpp"

namespace ectr {

enum class OptimizerKind { sgd, sgd_momentum, adam };
enum class Direction { descent, ascent };

OptimizerKind parse_optimizer(std::string_view name);
std::string_view to_string(OptimizerKind k);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double step = 0.01;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Per-player first-order optimizer with its own moment buffers.
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, std::string player);

  /// Moves `params` along -grads (descent) or +grads (ascent). Buffers are sized on the
  /// first call and must keep matching afterwards. Throws NumericError tagged with the
  /// player name if any gradient entry is non-finite; params are left untouched then.
  void step(std::span<double> params, std::span<const double> grads, Direction dir);

  const OptimizerConfig& config() const noexcept { return config_; }
  const std::string& player() const noexcept { return player_; }
  long steps_taken() const noexcept { return t_; }

 private:
  OptimizerConfig config_;
  std::string player_;
  Vector m_;
  Vector v_;
  long t_ = 0;
};

}  // namespace ectr
