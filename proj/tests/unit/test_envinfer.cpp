#include <cmath>
#include <vector>

#include <doctest.h>

#include "ectr/envinfer.hpp"
#include "ectr/error.hpp"
#include "ectr/rng.hpp"
#include "ectr/verify.hpp"

using namespace ectr;

namespace {

EnvInferenceNet linear_net(std::size_t in, std::size_t envs, Rng& rng, double gain = 1.0) {
  const std::vector<std::size_t> w{in, envs};
  return {PredictorParams::glorot(w, Activation::tanh, rng, gain), 1.0};
}

ProbeRecord probes_with_d(Vector d) {
  ProbeRecord p;
  p.d = std::move(d);
  p.dgrad_f = Matrix(p.d.size(), 1, 1.0);
  p.loss = Vector(p.d.size(), 0.0);
  p.grad_f = Matrix(p.d.size(), 1, 0.0);
  return p;
}

}  // namespace

TEST_CASE("zero network gives uniform rows; identical inputs give identical rows") {
  const std::vector<std::size_t> w{2, 3};
  const EnvInferenceNet zero{PredictorParams::zeros(w, Activation::tanh), 1.0};
  const auto a = infer_assignments(zero, Matrix{{1, 2}, {-3, 0.5}});
  CHECK(a.mode == AssignmentMode::soft);
  for (double v : a.mass.data()) CHECK(v == doctest::Approx(1.0 / 3));

  Rng rng(1);
  const auto net = linear_net(2, 3, rng);
  const auto b = infer_assignments(net, Matrix{{0.3, 0.9}, {0.3, 0.9}, {-1, 1}});
  for (std::size_t e = 0; e < 3; ++e) CHECK(b.mass(0, e) == b.mass(1, e));
  for (std::size_t i = 0; i < 3; ++i) {
    double s = 0.0;
    for (std::size_t e = 0; e < 3; ++e) s += b.mass(i, e);
    CHECK(std::abs(s - 1.0) <= 1e-9);
  }
  CHECK_THROWS_AS(infer_assignments(net, Matrix(0, 2)), InputError);
}

TEST_CASE("low temperature sharpens rows toward one-hot") {
  const std::vector<std::size_t> w{1, 2};
  auto p = PredictorParams::zeros(w, Activation::tanh);
  p.layers[0].weight = Matrix{{1.0, -1.0}};
  const EnvInferenceNet cold{p, 1e-3};
  const auto a = infer_assignments(cold, Matrix{{0.5}, {-0.2}});
  CHECK(a.mass(0, 0) >= 1.0 - 1e-9);
  CHECK(a.mass(1, 1) >= 1.0 - 1e-9);
}

TEST_CASE("inner objective gradient matches finite differences on a 4-sample batch") {
  Rng rng(22);
  std::size_t checked = 0;
  for (int k = 0; k < 20; ++k) {
    const auto net = linear_net(1, 2, rng, 2.0);
    const Matrix aux{{-1.0}, {-0.3}, {0.4}, {1.2}};
    const Vector pi{0.1, 0.2, 0.3, 0.4};
    Vector d(4);
    for (auto& v : d) v = rng.normal();
    for (auto variant : {TvVariant::l1, TvVariant::l2}) {
      const auto obj = inner_objective(net, aux, pi, probes_with_d(d), variant);
      // Skip kinks of the absolute value.
      const auto ws = condition_on_envs(pi, infer_assignments(net, aux));
      const auto t = tv_penalty(ws.pi_cond, probes_with_d(d), variant, ws.active);
      if (variant == TvVariant::l1 && (std::abs(t.per_env_g[0]) < 1e-3 || std::abs(t.per_env_g[1]) < 1e-3)) continue;
      CHECK(obj.p_tv == doctest::Approx(t.value).epsilon(1e-12));
      const auto fd = central_difference(
          [&](const Vector& flat) {
            auto n = net;
            n.net.assign(flat);
            return inner_objective(n, aux, pi, probes_with_d(d), variant).p_tv;
          },
          net.net.flatten());
      CHECK(relative_error(obj.grad, fd) <= 1e-4);
      ++checked;
    }
  }
  CHECK(checked >= 20);
}

TEST_CASE("inner ascent separates samples with opposite probes and P_TV rises monotonically") {
  // Samples 0,1 have positive probes and negative aux; samples 2,3 the reverse.
  const Matrix aux{{-1.0}, {-0.8}, {0.9}, {1.1}};
  const Vector pi(4, 0.25);
  const auto p = probes_with_d({1.0, 0.8, -0.9, -1.2});
  Rng rng(3);
  auto net = linear_net(1, 2, rng, 0.1);
  Optimizer opt({OptimizerKind::sgd, 0.5}, "eta");
  double prev = -1.0;
  for (int s = 0; s < 10; ++s) {
    const double before = inner_step(net, aux, pi, p, TvVariant::l1, opt);
    CHECK(before > prev);
    prev = before;
  }
  const auto a = infer_assignments(net, aux);
  const std::size_t e0 = a.mass(0, 0) > 0.5 ? 0 : 1;
  CHECK(a.mass(1, e0) > 0.5);
  CHECK(a.mass(2, e0) < 0.5);
  CHECK(a.mass(3, e0) < 0.5);
}

TEST_CASE("stationary probes leave the inference network unchanged") {
  Rng rng(4);
  auto net = linear_net(2, 3, rng);
  const auto before = net.net.flatten();
  Optimizer opt({OptimizerKind::adam, 0.1}, "eta");
  const Matrix aux{{1, 0}, {0, 1}, {1, 1}};
  const double p_tv = inner_step(net, aux, Vector{0.2, 0.3, 0.5}, probes_with_d({0, 0, 0}), TvVariant::l1, opt);
  CHECK(p_tv == 0.0);
  CHECK(net.net.flatten() == before);
}

TEST_CASE("relabeling latent environments leaves P_TV and KL unchanged") {
  Rng rng(5);
  const auto net = linear_net(1, 3, rng, 1.5);
  auto swapped = net;
  auto& w = swapped.net.layers[0];
  for (std::size_t r = 0; r < w.weight.rows(); ++r) std::swap(w.weight(r, 0), w.weight(r, 2));
  std::swap(w.bias[0], w.bias[2]);

  const Matrix aux{{-1.0}, {0.1}, {0.7}, {2.0}, {-0.4}};
  Vector s(5), d(5);
  for (auto& v : s) v = rng.normal();
  for (auto& v : d) v = rng.normal();
  const auto a = infer_assignments(net, aux);
  const auto b = infer_assignments(swapped, aux);
  const auto wa = build_weight_state(s, a);
  const auto wb = build_weight_state(s, b);
  CHECK(wa.kl_env == doctest::Approx(wb.kl_env).epsilon(1e-13));
  const auto pi = global_softmax(s);
  for (auto variant : {TvVariant::l1, TvVariant::l2}) {
    CHECK(inner_objective(net, aux, pi, probes_with_d(d), variant).p_tv ==
          doctest::Approx(inner_objective(swapped, aux, pi, probes_with_d(d), variant).p_tv).epsilon(1e-13));
  }
}

TEST_CASE("assignment_backward matches finite differences") {
  Rng rng(6);
  const std::vector<std::size_t> w{2, 3, 2};
  EnvInferenceNet net{PredictorParams::glorot(w, Activation::tanh, rng), 0.7};
  const Matrix aux{{1, -1}, {0.2, 0.4}, {-2, 1}};
  Matrix up(3, 2);
  for (double& v : up.data()) v = rng.normal();
  const auto pass = infer_with_cache(net, aux);
  const auto analytic = assignment_backward(net, pass, up);
  const auto fd = central_difference(
      [&](const Vector& flat) {
        auto n = net;
        n.net.assign(flat);
        return dot(infer_assignments(n, aux).mass.data(), up.data());
      },
      net.net.flatten());
  CHECK(relative_error(analytic, fd) <= 1e-6);
}
