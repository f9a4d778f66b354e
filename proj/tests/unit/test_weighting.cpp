#include <cmath>
#include <vector>

#include <doctest.h>

#include "ectr/error.hpp"
#include "ectr/rng.hpp"
#include "ectr/verify.hpp"
#include "ectr/weighting.hpp"

using namespace ectr;

namespace {

EnvAssignment random_soft(std::size_t n, std::size_t e, Rng& rng) {
  Matrix m(n, e);
  for (std::size_t i = 0; i < n; ++i) {
    double z = 0.0;
    for (std::size_t k = 0; k < e; ++k) z += m(i, k) = rng.uniform(0.01, 1.0);
    for (std::size_t k = 0; k < e; ++k) m(i, k) /= z;
  }
  return EnvAssignment::soft(std::move(m));
}

}  // namespace

TEST_CASE("global_softmax examples") {
  for (double p : global_softmax(Vector{0, 0, 0})) CHECK(p == doctest::Approx(1.0 / 3));
  const auto pi = global_softmax(Vector{0, std::log(3.0)});
  CHECK(pi[0] == doctest::Approx(0.25));
  CHECK(pi[1] == doctest::Approx(0.75));
  const auto shifted = global_softmax(Vector{100, 100 + std::log(3.0)});
  CHECK(shifted[0] == doctest::Approx(0.25).epsilon(1e-12));
  const auto big = global_softmax(Vector{1000, 0});
  CHECK(big[0] == 1.0);
  CHECK_THROWS_AS(global_softmax(Vector{}), InputError);
  CHECK_THROWS_AS(global_softmax(Vector{1.0, INFINITY}), InputError);
}

TEST_CASE("softmax_backward matches finite differences") {
  Rng rng(8);
  for (int k = 0; k < 20; ++k) {
    Vector s(5), c(5);
    for (auto& v : s) v = rng.normal();
    for (auto& v : c) v = rng.normal();
    const auto analytic = softmax_backward(global_softmax(s), c);
    const auto fd = central_difference([&](const Vector& x) { return dot(global_softmax(x), c); }, s);
    CHECK(relative_error(analytic, fd) <= 1e-6);
  }
}

TEST_CASE("condition_on_envs: hand example") {
  const auto a = EnvAssignment::hard(std::vector<int>{0, 0, 1, 1}, 2);
  const auto ws = condition_on_envs(Vector{0.1, 0.2, 0.3, 0.4}, a);
  CHECK(ws.mass_e[0] == doctest::Approx(0.3));
  CHECK(ws.mass_e[1] == doctest::Approx(0.7));
  const double expect0[] = {1.0 / 3, 2.0 / 3, 0, 0};
  const double expect1[] = {0, 0, 3.0 / 7, 4.0 / 7};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(ws.pi_cond(i, 0) == doctest::Approx(expect0[i]).epsilon(1e-12));
    CHECK(ws.pi_cond(i, 1) == doctest::Approx(expect1[i]).epsilon(1e-12));
  }
  CHECK(ws.num_active() == 2);
}

TEST_CASE("condition_on_envs: single environment and uniform soft rows reproduce the global distribution") {
  const Vector pi{0.1, 0.5, 0.15, 0.25};
  const auto one = condition_on_envs(pi, EnvAssignment::hard(std::vector<int>{0, 0, 0, 0}, 1));
  for (std::size_t i = 0; i < 4; ++i) CHECK(one.pi_cond(i, 0) == doctest::Approx(pi[i]).epsilon(1e-12));

  const auto soft = condition_on_envs(pi, EnvAssignment::soft(Matrix(4, 3, 1.0 / 3)));
  for (std::size_t e = 0; e < 3; ++e)
    for (std::size_t i = 0; i < 4; ++i) CHECK(soft.pi_cond(i, e) == doctest::Approx(pi[i]).epsilon(1e-12));
}

TEST_CASE("assignments validate their rows") {
  CHECK_THROWS_AS(EnvAssignment::soft(Matrix{{0.5, 0.6}}), InputError);
  CHECK_THROWS_AS(EnvAssignment::soft(Matrix{{1.5, -0.5}}), InputError);
  CHECK_THROWS_AS(EnvAssignment::hard(std::vector<int>{0, 2}, 2), InputError);
  const auto h = EnvAssignment::hard(std::vector<int>{1, 0}, 2);
  CHECK(h.mass == Matrix{{0, 1}, {1, 0}});
}

TEST_CASE("normalization holds over random weight states") {
  Rng rng(21);
  for (int k = 0; k < 1000; ++k) {
    const std::size_t n = 2 + rng.below(10), e = 1 + rng.below(4);
    Vector s(n);
    for (auto& v : s) v = rng.normal(0.0, 3.0);
    EnvAssignment a;
    if (k % 2 == 0) {
      a = random_soft(n, e, rng);
    } else {
      std::vector<int> ids(n);
      for (auto& id : ids) id = static_cast<int>(rng.below(e));
      a = EnvAssignment::hard(ids, e);
    }
    const auto ws = build_weight_state(s, a);
    double total = 0.0;
    for (double p : ws.pi_global) total += p;
    CHECK(std::abs(total - 1.0) <= 1e-9);
    for (std::size_t c = 0; c < e; ++c) {
      double col = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(ws.pi_cond(i, c) >= 0.0);
        col += ws.pi_cond(i, c);
      }
      if (ws.active[c]) CHECK(std::abs(col - 1.0) <= 1e-9);
      else CHECK(col == 0.0);
    }
    CHECK(ws.kl_env >= 0.0);
  }
}

TEST_CASE("an empty environment is inactive") {
  const auto a = EnvAssignment::hard(std::vector<int>{0, 0, 0}, 2);
  const auto ws = build_weight_state(Vector{0, 1, 2}, a);
  CHECK(ws.active[0]);
  CHECK_FALSE(ws.active[1]);
  CHECK(ws.num_active() == 1);
}

TEST_CASE("environment isolation under hard assignments") {
  Rng rng(4);
  const std::vector<int> ids{0, 1, 0, 2, 1, 0, 2, 2};
  const auto a = EnvAssignment::hard(ids, 3);
  for (int k = 0; k < 50; ++k) {
    Vector s(ids.size());
    for (auto& v : s) v = rng.normal();
    const auto before = build_weight_state(s, a);
    auto t = s;
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (ids[i] != 0) t[i] += rng.normal(0.0, 2.0);
    const auto after = build_weight_state(t, a);
    for (std::size_t i = 0; i < ids.size(); ++i) CHECK(std::abs(before.pi_cond(i, 0) - after.pi_cond(i, 0)) <= 1e-9);
  }
}

TEST_CASE("kl_env examples") {
  {
    const auto a = EnvAssignment::hard(std::vector<int>{0, 0, 1, 1, 1}, 2);
    CHECK(kl_env(env_uniform(a), a) == 0.0);
  }
  {
    const auto a = EnvAssignment::hard(std::vector<int>{0, 0}, 1);
    CHECK(kl_env(Matrix{{1}, {0}}, a) == doctest::Approx(std::log(2.0)));
  }
  {
    const auto a = EnvAssignment::hard(std::vector<int>{0, 0, 0, 0}, 1);
    CHECK(kl_env(Matrix{{0}, {0}, {1}, {0}}, a) == doctest::Approx(std::log(4.0)));
  }
  {
    const auto a = EnvAssignment::hard(std::vector<int>{0, 1}, 2);
    CHECK_THROWS_AS(kl_env(Matrix{{0.5, 0}, {0.5, 1}}, a), NumericError);
  }
}

TEST_CASE("kl_env is zero only at the environment-uniform conditionals") {
  Rng rng(12);
  const auto a = random_soft(6, 2, rng);
  CHECK(std::abs(kl_env(env_uniform(a), a)) <= 1e-12);
  for (int k = 0; k < 50; ++k) {
    Vector s(6);
    for (auto& v : s) v = rng.normal();
    const auto ws = build_weight_state(s, a);
    CHECK(ws.kl_env > 0.0);
  }
}

TEST_CASE("the detached KL has no assignment gradient; the undetached one matches finite differences") {
  Rng rng(30);
  const auto a = random_soft(5, 2, rng);
  Vector s(5);
  for (auto& v : s) v = rng.normal();
  const auto ws = build_weight_state(s, a);
  const auto detached = kl_env_grad_assignment(ws, a, true);
  for (double g : detached.data()) CHECK(g == 0.0);

  const auto analytic = kl_env_grad_assignment(ws, a, false);
  const auto pi = ws.pi_global;
  const auto fd = central_difference(
      [&](const Vector& flat) {
        EnvAssignment b{AssignmentMode::soft, Matrix(5, 2, flat)};
        const auto w = condition_on_envs(pi, b);
        return kl_env(w.pi_cond, b, w.active);
      },
      a.mass.data());
  CHECK(relative_error(analytic.data(), fd) <= 1e-5);
}

TEST_CASE("gibbs_tail_distribution examples and limits") {
  const Vector uni2{0.5, 0.5};
  const auto g = gibbs_tail_distribution(Vector{1, 2}, uni2, 1.0);
  CHECK(g[0] == doctest::Approx(0.2689).epsilon(1e-4));
  CHECK(g[1] == doctest::Approx(0.7311).epsilon(1e-4));

  const Vector base{0.2, 0.3, 0.5};
  const Vector losses{0.4, -1.0, 2.5};
  const auto flat = gibbs_tail_distribution(losses, base, 1e6);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(flat[i] - base[i]) <= 1e-6);
  const auto sharp = gibbs_tail_distribution(losses, base, 1e-6);
  CHECK(std::abs(sharp[2] - 1.0) <= 1e-6);
  CHECK_THROWS_AS(gibbs_tail_distribution(losses, base, 0.0), InputError);
}

TEST_CASE("gibbs_tail_distribution is monotone in each loss") {
  Rng rng(17);
  for (int k = 0; k < 100; ++k) {
    Vector l(4), b(4, 0.25);
    for (auto& v : l) v = rng.normal();
    const auto i = rng.below(4);
    const auto before = gibbs_tail_distribution(l, b, 0.7);
    l[i] += rng.uniform(0.0, 2.0);
    CHECK(gibbs_tail_distribution(l, b, 0.7)[i] >= before[i]);
  }
}

TEST_CASE("brute force search agrees with the closed form and dominates simple candidates") {
  Rng rng(2);
  for (int k = 0; k < 10; ++k) {
    const std::size_t n = 2 + rng.below(3);
    Vector l(n), b(n);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      l[i] = rng.normal();
      z += b[i] = rng.uniform(0.05, 1.0);
    }
    for (auto& v : b) v /= z;
    const double beta = 0.5;
    const auto bf = brute_force_kl_dro(l, b, beta);
    const auto closed = gibbs_tail_distribution(l, b, beta);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(bf.argmax[i] - closed[i]) <= 1e-3);
    CHECK(bf.objective >= kl_dro_objective(b, l, b, beta) - 1e-12);
    for (std::size_t j = 0; j < n; ++j) {
      Vector one(n, 0.0);
      one[j] = 1.0;
      CHECK(bf.objective >= kl_dro_objective(one, l, b, beta));
    }
    CHECK(kl_dro_optimal_value(l, b, beta) == doctest::Approx(kl_dro_objective(closed, l, b, beta)).epsilon(1e-10));
  }
  const Vector big_l(7, 0.0), big_b(7, 1.0 / 7);
  CHECK_THROWS_AS(brute_force_kl_dro(big_l, big_b, 1.0), InputError);
  const auto flat = brute_force_kl_dro(Vector{0.3, -0.2, 1.0}, Vector{0.2, 0.3, 0.5}, 1e6);
  CHECK(std::abs(flat.argmax[0] - 0.2) <= 1e-3);
}

TEST_CASE("kl_dro_objective is -inf off the base support") {
  CHECK(std::isinf(kl_dro_objective(Vector{0.5, 0.5}, Vector{1, 2}, Vector{1, 0}, 1.0)));
}

TEST_CASE("tail adversary: scores per sample and detached loss column") {
  Rng rng(6);
  const std::vector<std::size_t> w{3, 4, 1};
  auto t = TailAdversary::network(PredictorParams::glorot(w, Activation::tanh, rng), TailInputs::features_plus_detached_loss);
  const Matrix x{{1, 2}, {0, -1}, {3, 3}};
  const auto pass = t.evaluate(x, Vector{0.1, 0.4, 2.0});
  CHECK(pass.scores.size() == 3);
  for (double s : pass.scores) CHECK(std::isfinite(s));
  const auto g = t.backward(pass, Vector{1, 0, -1});
  CHECK(g.size() == t.num_params());

  auto f = TailAdversary::free(Vector{0.5, -0.5, 0.0});
  CHECK(f.evaluate(x, {}).scores == Vector{0.5, -0.5, 0.0});
  CHECK(f.backward(f.evaluate(x, {}), Vector{1, 2, 3}) == Vector{1, 2, 3});
}
