#pragma once

#include <span>

#include "ectr/invariance.hpp"
#include "ectr/matrix.hpp"
#include "ectr/mlp.hpp"
#include "ectr/optimizer.hpp"
#include "ectr/weighting.hpp"

namespace ectr {

/// Soft environment-inference adversary η: a network from auxiliary variables to E logits,
/// followed by a temperature softmax over environments.
struct EnvInferenceNet {
  PredictorParams net;
  double temperature = 1.0;

  std::size_t num_envs() const { return net.output_dim(); }
};

struct InferencePass {
  EnvAssignment assignment;
  ForwardCache cache;
};

InferencePass infer_with_cache(const EnvInferenceNet& net, const Matrix& aux);

/// m(i,e) = softmax_e(logits(i,e)/T).
EnvAssignment infer_assignments(const EnvInferenceNet& net, const Matrix& aux);

/// Gradient with respect to the flattened η parameters given ∂L/∂m.
Vector assignment_backward(const EnvInferenceNet& net, const InferencePass& pass, const Matrix& dm);

struct InnerObjective {
  double p_tv = 0.0;
  Vector grad;  ///< ∇_η P_TV
};

/// P_TV(η) for fixed π and probes, and its gradient through m in both π(·|e) and g_e.
InnerObjective inner_objective(const EnvInferenceNet& net, const Matrix& aux,
                               std::span<const double> pi_global, const ProbeRecord& probes,
                               TvVariant variant, double epsilon = kDefaultMassEpsilon);

/// One ascent step on P_TV with respect to η only. Returns P_TV before the step.
/// Nothing but `net` and the optimizer's buffers is modified; in particular the KL
/// stabilizer never reaches η.
double inner_step(EnvInferenceNet& net, const Matrix& aux, std::span<const double> pi_global,
                  const ProbeRecord& probes, TvVariant variant, Optimizer& optimizer,
                  double epsilon = kDefaultMassEpsilon);

}  // namespace ectr
