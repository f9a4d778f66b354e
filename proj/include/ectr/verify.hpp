#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ectr/matrix.hpp"

namespace ectr {

struct CheckResult {
  std::string suite;
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Deliberate defects for mutation-control runs of the suites.
enum class Fault {
  none,
  kl_sign_flip,  ///< the KL stabilizer reaches η with its sign flipped
};

struct VerifyOptions {
  double fd_tolerance = 1e-4;
  Fault fault = Fault::none;
  std::uint64_t seed = 7;
  std::size_t gibbs_instances = 50;
  std::size_t gradient_points = 20;
  std::size_t loss_draws = 100;
  std::size_t weight_states = 1000;
};

/// Central differences of a scalar function, one coordinate at a time.
Vector central_difference(const std::function<double(const Vector&)>& f, const Vector& x, double h = 1e-6);

/// ‖a − b‖∞ / max(‖a‖∞, ‖b‖∞, 1e-6).
double relative_error(std::span<const double> a, std::span<const double> b);

std::vector<CheckResult> verify_gibbs(const VerifyOptions& opts);
/// Loss value/gradient/HVP, predictor backprop and the four players' gradients.
std::vector<CheckResult> verify_gradients(const VerifyOptions& opts);
/// Conditional normalization, KL sign and zero, environment isolation, L_outer composition.
std::vector<CheckResult> verify_normalization(const VerifyOptions& opts);
std::vector<CheckResult> verify_detach(const VerifyOptions& opts);
/// ERM reduction, inferred-vs-known with frozen one-hot assignments, uniform-π TV.
std::vector<CheckResult> verify_reductions(const VerifyOptions& opts);

std::vector<CheckResult> verify_all(const VerifyOptions& opts);

}  // namespace ectr
