#include <cmath>
#include <string>
#include <vector>

#include <doctest.h>

#include "ectr/data.hpp"
#include "ectr/error.hpp"
#include "ectr/report.hpp"
#include "ectr/rng.hpp"
#include "ectr/trainer.hpp"

using namespace ectr;

namespace {

// Two environments; in environment 1 the second feature flips sign relative to the label.
Dataset toy_dataset(std::uint64_t seed, std::size_t per_env = 20) {
  Rng rng(seed);
  Dataset d;
  d.num_train_envs = 2;
  d.train.x = Matrix(2 * per_env, 2);
  d.train.aux = Matrix(2 * per_env, 1);
  for (std::size_t i = 0; i < 2 * per_env; ++i) {
    const int e = i < per_env ? 0 : 1;
    const double y = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const double s = 2 * y - 1;
    d.train.x(i, 0) = s + rng.normal(0.0, 0.8);
    d.train.x(i, 1) = (e == 0 ? s : -0.5 * s) + rng.normal(0.0, 0.3);
    d.train.aux(i, 0) = e + rng.uniform(0.0, 0.5);
    d.train.y.push_back(y);
    d.train.env.push_back(e);
  }
  d.test = {d.train};
  d.test_names = {"pooled"};
  return d;
}

Batch labelled(std::vector<double> x, std::vector<double> y) {
  Batch b;
  const auto n = x.size();
  b.x = Matrix(n, 1, std::move(x));
  b.y = std::move(y);
  return b;
}

PredictorParams identity_scalar() {
  auto p = PredictorParams::zeros(std::vector<std::size_t>{1, 1}, Activation::identity);
  p.layers[0].weight(0, 0) = 1.0;
  return p;
}

}  // namespace

TEST_CASE("method names parse and list") {
  for (auto m : {Method::erm, Method::irmv1, Method::group_dro, Method::irm_tv_l1, Method::ood_tv_irm_l1,
                 Method::ectr_known, Method::ectr_inferred})
    CHECK(parse_method(to_string(m)) == m);
  try {
    parse_method("ectr_unknown");
    FAIL("no exception");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("ectr_inferred") != std::string::npos);
  }
}

TEST_CASE("the outer objective is composed exactly") {
  const auto data = toy_dataset(1);
  TrainConfig c;
  c.method = Method::ectr_known;
  c.psi_init = 0.7;
  c.beta = 0.3;
  c.seed = 2;
  Trainer t(c, data);
  for (int s = 0; s < 10; ++s) {
    const auto ev = evaluate_outer(t.players(), data.train, t.assignment_for(data.train), t.settings());
    const auto& b = ev.breakdown;
    CHECK(b.total == b.r_main + b.lambda * b.p_tv - 0.3 * b.kl_env);
    CHECK(b.lambda == lambda_of(t.players().psi));
    t.step(data.train);
  }
  // 1.0 + 0.5·2.0 − 0.1·0.3
  OuterLossBreakdown b{1.0, 2.0, 0.3, 0.5, 0.0};
  b.total = b.r_main + b.lambda * b.p_tv - 0.1 * b.kl_env;
  CHECK(b.total == doctest::Approx(1.97));
}

TEST_CASE("tail_risks: hand example and uniform endpoint") {
  const auto r = tail_risks(Vector{1, 3}, Matrix{{0.25}, {0.75}});
  CHECK(r.per_env[0] == doctest::Approx(2.5));
  CHECK(r.main == doctest::Approx(2.5));
  const auto a = EnvAssignment::hard(std::vector<int>{0, 0, 1, 1, 1}, 2);
  const auto u = tail_risks(Vector{1, 2, 4, 5, 9}, env_uniform(a));
  CHECK(u.per_env[0] == doctest::Approx(1.5));
  CHECK(u.per_env[1] == doctest::Approx(6.0));
  CHECK(u.main == doctest::Approx(3.75));
}

TEST_CASE("erm steps match a reference gradient-descent loop bit for bit") {
  const auto data = toy_dataset(3);
  TrainConfig c;
  c.method = Method::erm;
  c.hidden = {4};
  c.seed = 9;
  Trainer t(c, data);
  auto ref = t.players().phi;
  Optimizer opt(c.opt_phi, "phi");
  // Gradient of the mean loss (1/N)·Σ ℓ_i.
  const double w = 1.0 / static_cast<double>(data.train.size());
  for (int s = 0; s < 30; ++s) {
    t.step(data.train);
    const auto fwd = forward(ref, data.train.x);
    const auto pr = probe(c.loss, fwd.logits, data.train.y);
    Matrix up(data.train.size(), 1);
    for (std::size_t i = 0; i < data.train.size(); ++i) up(i, 0) = w * pr.grad_f(i, 0);
    auto flat = ref.flatten();
    opt.step(flat, backprop(ref, fwd.cache, up).flatten(), Direction::descent);
    ref.assign(flat);
    INFO("step " << s);
    REQUIRE(t.players().phi.flatten() == ref.flatten());
  }
}

TEST_CASE("lambda never decreases while the TV penalty is positive") {
  const auto data = toy_dataset(4);
  for (auto kind : {OptimizerKind::sgd, OptimizerKind::adam}) {
    TrainConfig c;
    c.method = Method::ectr_known;
    c.opt_psi = {kind, 0.1};
    c.seed = 1;
    Trainer t(c, data);
    double prev = lambda_of(t.players().psi);
    for (int s = 0; s < 20; ++s) {
      const auto b = t.step(data.train);
      const double now = lambda_of(t.players().psi);
      if (b.p_tv > 0.0) CHECK(now >= prev);
      prev = now;
    }
  }
}

TEST_CASE("group DRO picks the environment a hand computation picks") {
  const auto data = toy_dataset(5);
  TrainConfig c;
  c.method = Method::group_dro;
  c.init_gain = 2.0;
  c.opt_phi = {OptimizerKind::sgd, 0.5};
  c.group_dro_step = 0.2;
  c.seed = 3;
  Trainer t(c, data);
  REQUIRE(t.players().phi.num_params() == 3);
  Vector q{0.5, 0.5};
  for (int s = 0; s < 25; ++s) {
    const auto& p = t.players().phi;
    const double w0 = p.layers[0].weight(0, 0), w1 = p.layers[0].weight(1, 0), b = p.layers[0].bias[0];
    double risk[2] = {0, 0};
    int count[2] = {0, 0};
    for (std::size_t i = 0; i < data.train.size(); ++i) {
      const double z = w0 * data.train.x(i, 0) + w1 * data.train.x(i, 1) + b;
      const double y = data.train.y[i];
      risk[data.train.env[i]] += std::log1p(std::exp(-std::abs(z))) + std::max(z, 0.0) - y * z;
      ++count[data.train.env[i]];
    }
    for (int e = 0; e < 2; ++e) risk[e] /= count[e];
    const int expect = risk[1] > risk[0] ? 1 : 0;
    for (int e = 0; e < 2; ++e) q[e] *= std::exp(0.2 * risk[e]);
    const double z = q[0] + q[1];
    q[0] /= z;
    q[1] /= z;
    t.step(data.train);
    CHECK(t.report().group_dro_selected.back() == expect);
    CHECK(t.players().group_weights[0] == doctest::Approx(q[0]).epsilon(1e-12));
  }
}

TEST_CASE("irm_tv_l1 and ectr_known with huge beta reach the same TV penalty") {
  SimulationSpec s;
  s.n_per_env = 300;
  s.seed = 2;
  const auto data = generate_simulation(s);
  TrainConfig c;
  c.epochs = 600;
  c.eval_every = c.epochs;
  c.seed = 6;
  c.method = Method::irm_tv_l1;
  c.tv_lambda = 1.0;
  const auto plain = train(c, data);
  c.method = Method::ectr_known;
  c.beta = 1e9;
  c.psi_init = std::log(std::exp(1.0) - 1.0);  // λ = 1
  c.opt_psi.step = 0.0;
  const auto tail = train(c, data);
  const double a = plain.trace.back().breakdown.p_tv, b = tail.trace.back().breakdown.p_tv;
  INFO("irm_tv_l1 " << a << ", ectr_known " << b);
  CHECK(std::abs(a - b) <= 1e-3);
  CHECK(tail.trace.back().breakdown.kl_env <= 1e-6);
}

TEST_CASE("the probe stays at one for every method") {
  const auto data = toy_dataset(6);
  for (auto m : {Method::erm, Method::irmv1, Method::group_dro, Method::irm_tv_l1, Method::ood_tv_irm_l1,
                 Method::ectr_known, Method::ectr_inferred}) {
    TrainConfig c;
    c.method = m;
    c.epochs = 5;
    Trainer t(c, data);
    t.run();
    CHECK(t.players().phi.probe_w == 1.0);
  }
}

TEST_CASE("same seed, same report") {
  const auto data = toy_dataset(7, 40);
  for (auto m : {Method::ectr_known, Method::ectr_inferred}) {
    TrainConfig c;
    c.method = m;
    c.epochs = 15;
    c.batch_size = 20;
    c.seed = 11;
    const auto a = report_jsonl(train(c, data), {});
    const auto b = report_jsonl(train(c, data), {});
    CHECK(a == b);
    c.seed = 12;
    CHECK(report_jsonl(train(c, data), {}) != a);
  }
}

TEST_CASE("stratified minibatches cover every environment") {
  const auto data = toy_dataset(8, 30);
  TrainConfig c;
  c.method = Method::ectr_known;
  c.batch_size = 12;
  Trainer t(c, data);
  std::size_t seen = 0;
  for (const auto& b : t.epoch_batches()) {
    int count[2] = {0, 0};
    for (int e : b.env) ++count[e];
    CHECK(count[0] > 0);
    CHECK(count[1] > 0);
    seen += b.size();
  }
  CHECK(seen == data.train.size());
}

TEST_CASE("methods needing environment ids refuse data without them") {
  auto data = toy_dataset(9);
  data.train.env.clear();
  data.num_train_envs = 0;
  for (auto m : {Method::group_dro, Method::ectr_known, Method::irm_tv_l1}) {
    TrainConfig c;
    c.method = m;
    CHECK_THROWS_AS(Trainer(c, data), ConfigError);
  }
  TrainConfig c;
  c.method = Method::ectr_inferred;
  c.epochs = 3;
  CHECK_NOTHROW(train(c, data));
}

TEST_CASE("invalid configurations are config errors") {
  const auto data = toy_dataset(10);
  TrainConfig c;
  c.beta = -1.0;
  CHECK_THROWS_AS(Trainer(c, data), ConfigError);
  c = {};
  c.tail_mode = TailMode::free_scores;
  c.batch_size = 8;
  CHECK_THROWS_AS(Trainer(c, data), ConfigError);
  c = {};
  c.epochs = 0;
  CHECK_THROWS_AS(Trainer(c, data), ConfigError);
}

TEST_CASE("a diverging run aborts with the offending breakdown") {
  auto data = toy_dataset(11);
  data.train.x(0, 0) = 1e300;
  TrainConfig c;
  c.method = Method::ectr_known;
  c.loss = {LossKind::mse};
  c.epochs = 2;
  try {
    train(c, data);
    FAIL("no exception");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).size() > 0);
  }
}

TEST_CASE("evaluate: perfect, constant and mixed predictors") {
  const std::vector<std::string> names{"a", "b"};
  const auto x = identity_scalar();
  const LossSpec bce{LossKind::bce_with_logit};
  {
    const std::vector<Batch> splits{labelled({1, -2, 3}, {1, 0, 1}), labelled({-1, 0.5}, {0, 1})};
    const auto r = evaluate(x, bce, splits, names);
    CHECK(r.metric == "accuracy");
    CHECK(r.mean == 1.0);
    CHECK(r.worst == 1.0);
  }
  {
    const auto zero = PredictorParams::zeros(std::vector<std::size_t>{1, 1}, Activation::identity);
    const std::vector<Batch> splits{labelled({1, 2, 3, 4}, {1, 0, 1, 0}), labelled({5, 6}, {0, 1})};
    const auto r = evaluate(zero, bce, splits, names);
    for (const auto& m : r.per_env) CHECK(m.value == 0.5);
  }
  {
    // 9 of 10 right in the first split, 6 of 10 in the second.
    std::vector<double> xa(10, 1.0), ya(10, 1.0), xb(10, 1.0), yb(10, 1.0);
    ya[0] = 0.0;
    for (int i = 0; i < 4; ++i) yb[i] = 0.0;
    const std::vector<Batch> splits{labelled(xa, ya), labelled(xb, yb)};
    const auto r = evaluate(x, bce, splits, names);
    CHECK(r.mean == doctest::Approx(0.75));
    CHECK(r.worst == doctest::Approx(0.6));
  }
  {
    const std::vector<Batch> splits{labelled({1, 2}, {1, 2}), labelled({0, 0}, {1, -1})};
    const auto r = evaluate(x, LossSpec{LossKind::mse}, splits, names);
    CHECK(r.metric == "mse");
    CHECK(r.per_env[0].value == 0.0);
    CHECK(r.worst == 1.0);
  }
  {
    const std::vector<Batch> splits{labelled({1}, {1}), Batch{}};
    const auto r = evaluate(x, bce, splits, names);
    CHECK(r.per_env.size() == 1);
    CHECK(r.warnings.size() == 1);
  }
}

TEST_CASE("a full run reports a trace and final metrics") {
  const auto data = toy_dataset(12);
  TrainConfig c;
  c.method = Method::ood_tv_irm_l1;
  c.epochs = 10;
  c.eval_every = 4;
  const auto r = train(c, data);
  REQUIRE(r.trace.size() == 10);
  CHECK(r.trace[3].evaluated);
  CHECK_FALSE(r.trace[4].evaluated);
  CHECK(r.trace.back().evaluated);
  CHECK(r.final_test.per_env.size() == 1);
  CHECK(r.final_lambda == doctest::Approx(lambda_of(0.0)).epsilon(0.5));
}
