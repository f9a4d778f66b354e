#include "ectr/envinfer.hpp"

#include <algorithm>
#include <cmath>

#include "ectr/error.hpp"

namespace ectr {

InferencePass infer_with_cache(const EnvInferenceNet& net, const Matrix& aux) {
  if (aux.rows() == 0) throw InputError("environment inference on an empty batch");
  if (net.num_envs() < 2) throw InputError("environment inference needs at least two environments");
  if (!(net.temperature > 0.0)) throw InputError("inference temperature must be positive");
  auto fwd = forward(net.net, aux);
  Matrix m = std::move(fwd.logits);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto row = m.row(i);
    double top = row[0] / net.temperature;
    for (double v : row) top = std::max(top, v / net.temperature);
    double z = 0.0;
    for (double& v : row) z += (v = std::exp(v / net.temperature - top));
    for (double& v : row) v /= z;
  }
  if (!m.all_finite()) throw NumericError("non-finite environment assignment", "eta");
  return {EnvAssignment::soft(std::move(m)), std::move(fwd.cache)};
}

EnvAssignment infer_assignments(const EnvInferenceNet& net, const Matrix& aux) {
  return infer_with_cache(net, aux).assignment;
}

Vector assignment_backward(const EnvInferenceNet& net, const InferencePass& pass, const Matrix& dm) {
  const Matrix& m = pass.assignment.mass;
  if (dm.rows() != m.rows() || dm.cols() != m.cols()) throw ShapeError("assignment gradient shape");
  Matrix dlogits(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double inner = dot(m.row(i), dm.row(i));
    for (std::size_t e = 0; e < m.cols(); ++e)
      dlogits(i, e) = m(i, e) * (dm(i, e) - inner) / net.temperature;
  }
  return backprop(net.net, pass.cache, dlogits).flatten();
}

InnerObjective inner_objective(const EnvInferenceNet& net, const Matrix& aux,
                               std::span<const double> pi_global, const ProbeRecord& probes,
                               TvVariant variant, double epsilon) {
  const auto pass = infer_with_cache(net, aux);
  const auto ws = condition_on_envs(pi_global, pass.assignment, epsilon);
  const auto tv = tv_penalty(ws.pi_cond, probes, variant, ws.active);
  const Matrix dcond = tv_grad_wrt_cond(probes, tv);
  const Matrix dm = conditional_backward_assignment(ws, pass.assignment, dcond);
  return {tv.value, assignment_backward(net, pass, dm)};
}

double inner_step(EnvInferenceNet& net, const Matrix& aux, std::span<const double> pi_global,
                  const ProbeRecord& probes, TvVariant variant, Optimizer& optimizer,
                  double epsilon) {
  const auto obj = inner_objective(net, aux, pi_global, probes, variant, epsilon);
  Vector params = net.net.flatten();
  optimizer.step(params, obj.grad, Direction::ascent);
  net.net.assign(params);
  return obj.p_tv;
}

}  // namespace ectr
