#include "ectr/verify.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ectr/envinfer.hpp"
#include "ectr/invariance.hpp"
#include "ectr/loss.hpp"
#include "ectr/mlp.hpp"
#include "ectr/optimizer.hpp"
#include "ectr/rng.hpp"
#include "ectr/trainer.hpp"
#include "ectr/weighting.hpp"

namespace ectr {

Vector central_difference(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
  Vector g(x.size());
  Vector probe = x;
  for (std::size_t k = 0; k < x.size(); ++k) {
    probe[k] = x[k] + h;
    const double up = f(probe);
    probe[k] = x[k] - h;
    const double down = f(probe);
    probe[k] = x[k];
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return INFINITY;
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
  return diff / std::max({max_abs(a), max_abs(b), 1e-6});
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

// Running maximum of an error measure against a bound.
struct Tally {
  std::string suite;
  std::string name;
  double bound;
  double worst = 0.0;
  std::size_t cases = 0;
  std::string extra;

  void add(double err) {
    ++cases;
    if (!(err <= worst)) worst = err;  // NaN sticks
  }
  CheckResult result() const {
    CheckResult r{suite, name, worst <= bound, {}};
    r.detail = std::to_string(cases) + " cases, max error " + fmt(worst) + " (bound " + fmt(bound) + ")";
    if (!extra.empty()) r.detail += "; " + extra;
    return r;
  }
};

CheckResult verdict(std::string suite, std::string name, bool ok, std::string detail) {
  return {std::move(suite), std::move(name), ok, std::move(detail)};
}

// 8 samples in two environments of 4, two features, an auxiliary pair for η.
Batch toy_batch(Rng& rng, std::size_t n = 8) {
  Batch b;
  b.x = Matrix(n, 2);
  b.aux = Matrix(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      b.x(i, j) = rng.normal();
      b.aux(i, j) = rng.normal();
    }
    b.y.push_back(rng.bernoulli(0.5) ? 1.0 : 0.0);
    b.env.push_back(i < n / 2 ? 0 : 1);
  }
  return b;
}

Players toy_players(Rng& rng) {
  Players p;
  const std::size_t pw[] = {2, 4, 1};
  p.phi = PredictorParams::glorot(pw, Activation::tanh, rng, 1.5);
  const std::size_t tw[] = {2, 4, 1};
  p.theta = TailAdversary::network(PredictorParams::glorot(tw, Activation::tanh, rng, 2.0), TailInputs::features);
  p.psi = rng.uniform(-1.0, 1.0);
  const std::size_t ew[] = {2, 3, 2};
  p.eta = EnvInferenceNet{PredictorParams::glorot(ew, Activation::tanh, rng, 2.0), 1.0};
  return p;
}

ObjectiveSettings tail_settings(double beta, TvVariant variant) {
  ObjectiveSettings s;
  s.loss.kind = LossKind::bce_with_logit;
  s.variant = variant;
  s.beta = beta;
  s.lambda_mode = LambdaMode::dual;
  s.tail = true;
  return s;
}

bool clear_of_kinks(const Vector& g) {
  return std::all_of(g.begin(), g.end(), [](double v) { return std::abs(v) >= 1e-3; });
}

}  // namespace

// --- Gibbs tail distribution vs search --------------------------------------

std::vector<CheckResult> verify_gibbs(const VerifyOptions& opts) {
  Rng rng(opts.seed);
  const double betas[] = {0.1, 1.0, 10.0};
  Tally arg{"gibbs", "closed_form_vs_bruteforce_argmax", 1e-3};
  Tally val{"gibbs", "bruteforce_value_vs_logsumexp", 1e-6};
  Tally self{"gibbs", "closed_form_attains_logsumexp", 1e-9};
  for (std::size_t k = 0; k < opts.gibbs_instances; ++k) {
    const std::size_t n = 2 + k % 3;
    const double beta = betas[(k / 3) % 3];
    Vector losses(n), base(n);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      losses[i] = rng.uniform(0.0, 2.0);
      base[i] = rng.uniform(0.05, 1.0);
      z += base[i];
    }
    for (double& b : base) b /= z;
    const Vector closed = gibbs_tail_distribution(losses, base, beta);
    const auto bf = brute_force_kl_dro(losses, base, beta);
    const double analytic = kl_dro_optimal_value(losses, base, beta);
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) d = std::max(d, std::abs(closed[i] - bf.argmax[i]));
    arg.add(d);
    val.add(std::abs(bf.objective - analytic));
    self.add(std::abs(kl_dro_objective(closed, losses, base, beta) - analytic));
  }
  return {arg.result(), val.result(), self.result()};
}

// --- finite differences ------------------------------------------------------

std::vector<CheckResult> verify_gradients(const VerifyOptions& opts) {
  Rng rng(opts.seed + 1);
  const double tol = opts.fd_tolerance;
  std::vector<CheckResult> out;

  // Per-sample loss: value → gradient, gradient → HVP.
  for (auto kind : {LossKind::mse, LossKind::bce_with_logit, LossKind::multiclass_cross_entropy}) {
    LossSpec spec{kind};
    const std::size_t k = kind == LossKind::multiclass_cross_entropy ? 3 : 1;
    Tally grad{"gradients", "loss_grad_" + std::string(to_string(kind)), tol};
    Tally hvp{"gradients", "loss_hvp_" + std::string(to_string(kind)), tol};
    for (std::size_t draw = 0; draw < opts.loss_draws; ++draw) {
      Vector z(k), v(k);
      for (std::size_t j = 0; j < k; ++j) {
        z[j] = rng.normal(0.0, 2.0);
        v[j] = rng.normal();
      }
      double label = 0.0;
      switch (kind) {
        case LossKind::mse: label = rng.normal(); break;
        case LossKind::bce_with_logit: label = rng.bernoulli(0.5) ? 1.0 : 0.0; break;
        case LossKind::multiclass_cross_entropy: label = static_cast<double>(rng.below(k)); break;
      }
      const auto ev = loss_value_grad_hvp(spec, z, label, v);
      grad.add(relative_error(ev.grad, central_difference([&](const Vector& p) { return loss_value(spec, p, label); }, z)));
      // Directional derivative of the gradient along v.
      const double h = 1e-6;
      Vector zp = z, zm = z;
      for (std::size_t j = 0; j < k; ++j) {
        zp[j] += h * v[j];
        zm[j] -= h * v[j];
      }
      const auto gp = loss_value_grad_hvp(spec, zp, label, {}).grad;
      const auto gm = loss_value_grad_hvp(spec, zm, label, {}).grad;
      Vector fd(k);
      for (std::size_t j = 0; j < k; ++j) fd[j] = (gp[j] - gm[j]) / (2.0 * h);
      hvp.add(relative_error(ev.hvp, fd));
    }
    out.push_back(grad.result());
    out.push_back(hvp.result());
  }

  // Predictor reverse mode.
  {
    Tally bp{"gradients", "predictor_backprop", tol};
    for (auto act : {Activation::tanh, Activation::identity}) {
      for (int rep = 0; rep < 5; ++rep) {
        const std::size_t widths[] = {3, 5, 4, 2};
        auto params = PredictorParams::glorot(widths, act, rng, 1.0);
        Matrix x(6, 3), up(6, 2);
        for (double& v : x.data()) v = rng.normal();
        for (double& v : up.data()) v = rng.normal();
        const auto fwd = forward(params, x);
        const auto analytic = backprop(params, fwd.cache, up).flatten();
        const auto fd = central_difference(
            [&](const Vector& flat) {
              auto p = params;
              p.assign(flat);
              return dot(predict(p, x).data(), up.data());
            },
            params.flatten());
        bp.add(relative_error(analytic, fd));
      }
    }
    out.push_back(bp.result());
  }

  // The four players, each against its own objective.
  Tally phi{"gradients", "player_phi", tol}, theta{"gradients", "player_theta", tol};
  Tally psi{"gradients", "player_psi", tol}, eta{"gradients", "player_eta", tol};
  std::size_t points = 0, attempts = 0;
  while (points < opts.gradient_points && attempts < 50 * opts.gradient_points) {
    ++attempts;
    Rng point_rng = rng.split();
    const Batch batch = toy_batch(point_rng);
    const Players players = toy_players(point_rng);
    const double beta = point_rng.uniform(0.1, 1.0);
    const auto variant = points % 2 == 0 ? TvVariant::l1 : TvVariant::l2;
    const auto settings = tail_settings(beta, variant);

    const auto hard = EnvAssignment::hard(batch.env, 2);
    const auto pass = infer_with_cache(*players.eta, batch.aux);
    const EnvAssignment* assigns[] = {&hard, &pass.assignment};

    // Skip points where some |g_e| sits near the l1 kink, for every objective involved.
    bool ok = true;
    std::vector<OuterEvaluation> evs;
    for (const auto* a : assigns) {
      evs.push_back(evaluate_outer(players, batch, *a, settings));
      ok = ok && clear_of_kinks(evs.back().tv.per_env_g);
    }
    const auto ws_inner = condition_on_envs(evs[1].weights.pi_global, pass.assignment, settings.epsilon);
    ok = ok && clear_of_kinks(tv_penalty(ws_inner.pi_cond, evs[1].probes, variant, ws_inner.active).per_env_g);
    if (!ok) continue;
    ++points;

    for (std::size_t a = 0; a < 2; ++a) {
      const auto& assign = *assigns[a];
      const auto& ev = evs[a];
      phi.add(relative_error(ev.grad_phi, central_difference(
                                              [&](const Vector& flat) {
                                                auto p = players;
                                                p.phi.assign(flat);
                                                return evaluate_outer(p, batch, assign, settings).breakdown.total;
                                              },
                                              players.phi.flatten())));
      theta.add(relative_error(ev.grad_theta, central_difference(
                                                  [&](const Vector& flat) {
                                                    auto p = players;
                                                    p.theta->assign(flat);
                                                    return evaluate_outer(p, batch, assign, settings).breakdown.total;
                                                  },
                                                  players.theta->flatten())));
      const Vector g_psi{ev.grad_psi};
      psi.add(relative_error(g_psi, central_difference(
                                        [&](const Vector& v) {
                                          auto p = players;
                                          p.psi = v[0];
                                          return evaluate_outer(p, batch, assign, settings).breakdown.total;
                                        },
                                        Vector{players.psi})));
    }
    const auto& ev = evs[1];
    const auto inner = inner_objective(*players.eta, batch.aux, ev.weights.pi_global, ev.probes, variant);
    eta.add(relative_error(inner.grad, central_difference(
                                           [&](const Vector& flat) {
                                             auto net = *players.eta;
                                             net.net.assign(flat);
                                             return inner_objective(net, batch.aux, ev.weights.pi_global, ev.probes,
                                                                    variant)
                                                 .p_tv;
                                           },
                                           players.eta->net.flatten())));
  }
  for (auto* t : {&phi, &theta, &psi, &eta}) {
    auto r = t->result();
    if (points < opts.gradient_points) {
      r.passed = false;
      r.detail += "; only " + std::to_string(points) + " points clear of |g_e| < 1e-3";
    }
    out.push_back(r);
  }
  return out;
}

// --- normalization and structural invariants ---------------------------------

std::vector<CheckResult> verify_normalization(const VerifyOptions& opts) {
  Rng rng(opts.seed + 2);
  std::vector<CheckResult> out;

  Tally norm{"normalization", "conditional_columns_sum_to_one", 1e-9};
  std::size_t kl_negative = 0;
  for (std::size_t s = 0; s < opts.weight_states; ++s) {
    const std::size_t n = 2 + rng.below(11);
    const std::size_t e_count = 1 + rng.below(4);
    Vector scores(n);
    for (double& v : scores) v = rng.normal(0.0, 3.0);
    EnvAssignment assign;
    if (rng.bernoulli(0.5)) {
      std::vector<int> ids(n);
      for (int& id : ids) id = static_cast<int>(rng.below(e_count));
      assign = EnvAssignment::hard(ids, e_count);
    } else {
      Matrix m(n, e_count);
      for (std::size_t i = 0; i < n; ++i) {
        Vector logits(e_count);
        for (double& v : logits) v = rng.normal(0.0, 2.0);
        const auto row = global_softmax(logits);
        std::copy(row.begin(), row.end(), m.row(i).begin());
      }
      assign = EnvAssignment::soft(std::move(m));
    }
    const auto ws = build_weight_state(scores, assign);
    for (std::size_t e = 0; e < e_count; ++e) {
      if (!ws.active[e]) continue;
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) sum += ws.pi_cond(i, e);
      norm.add(std::abs(sum - 1.0));
    }
    if (!(ws.kl_env >= 0.0)) ++kl_negative;
  }
  out.push_back(norm.result());
  out.push_back(verdict("normalization", "kl_env_nonnegative", kl_negative == 0,
                        std::to_string(opts.weight_states) + " states, " + std::to_string(kl_negative) + " negative"));

  // KL_env vanishes exactly at π(·|e) = Unif_e.
  {
    std::size_t nonzero = 0;
    for (int rep = 0; rep < 100; ++rep) {
      const std::size_t n = 3 + rng.below(8);
      std::vector<int> ids(n);
      for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<int>(i % 3);
      EnvAssignment assign = EnvAssignment::hard(ids, 3);
      if (rep % 2 == 1) {
        Matrix m(n, 3);
        for (std::size_t i = 0; i < n; ++i) {
          Vector logits{rng.normal(), rng.normal(), rng.normal()};
          const auto row = global_softmax(logits);
          std::copy(row.begin(), row.end(), m.row(i).begin());
        }
        assign = EnvAssignment::soft(std::move(m));
      }
      if (kl_env(env_uniform(assign), assign) != 0.0) ++nonzero;
    }
    out.push_back(verdict("normalization", "kl_env_zero_at_uniform", nonzero == 0,
                          "100 assignments, " + std::to_string(nonzero) + " with KL != 0"));
  }

  // Under hard assignments, what happens in environment 0 stays in environment 0.
  {
    Tally iso{"normalization", "environment_isolation", 1e-12};
    for (int rep = 0; rep < 100; ++rep) {
      const std::size_t n = 9;
      std::vector<int> ids(n);
      for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<int>(i % 3);
      const auto assign = EnvAssignment::hard(ids, 3);
      Vector scores(n), losses(n);
      ProbeRecord pr;
      for (std::size_t i = 0; i < n; ++i) {
        scores[i] = rng.normal();
        losses[i] = rng.uniform(0.0, 2.0);
        pr.d.push_back(rng.normal());
      }
      Vector scores2 = scores, losses2 = losses;
      ProbeRecord pr2 = pr;
      for (std::size_t i = 0; i < n; i += 3) {
        scores2[i] += rng.normal(0.0, 3.0);
        losses2[i] += rng.uniform(0.0, 5.0);
        pr2.d[i] += rng.normal(0.0, 3.0);
      }
      const auto a = build_weight_state(scores, assign);
      const auto b = build_weight_state(scores2, assign);
      const auto ra = tail_risks(losses, a.pi_cond, a.active), rb = tail_risks(losses2, b.pi_cond, b.active);
      const auto ta = tv_penalty(a.pi_cond, pr, TvVariant::l1), tb = tv_penalty(b.pi_cond, pr2, TvVariant::l1);
      double d = 0.0;
      for (std::size_t e = 1; e < 3; ++e) {
        for (std::size_t i = 0; i < n; ++i) d = std::max(d, std::abs(a.pi_cond(i, e) - b.pi_cond(i, e)));
        d = std::max({d, std::abs(ra.per_env[e] - rb.per_env[e]), std::abs(ta.per_env_g[e] - tb.per_env_g[e])});
      }
      iso.add(d);
    }
    out.push_back(iso.result());
  }

  // L_outer is composed as r_main + λ·p_tv − β·kl_env and the probe stays at 1.
  {
    std::size_t mismatched = 0, probe_moved = 0;
    for (int rep = 0; rep < 20; ++rep) {
      Rng r = rng.split();
      const Batch batch = toy_batch(r);
      Players players = toy_players(r);
      const auto settings = tail_settings(r.uniform(0.0, 2.0), rep % 2 ? TvVariant::l2 : TvVariant::l1);
      TrainConfig tc;
      PlayerOptimizers optimizers(tc);
      const auto assign = EnvAssignment::hard(batch.env, 2);
      for (int step = 0; step < 5; ++step) {
        const auto ev = outer_step(players, batch, assign, settings, optimizers);
        const auto& b = ev.breakdown;
        if (b.total != b.r_main + b.lambda * b.p_tv - settings.beta * b.kl_env) ++mismatched;
        if (players.phi.probe_w != 1.0) ++probe_moved;
      }
    }
    out.push_back(verdict("normalization", "outer_loss_composition", mismatched == 0,
                          "100 steps, " + std::to_string(mismatched) + " mismatched"));
    out.push_back(verdict("normalization", "probe_fixed_at_one", probe_moved == 0,
                          "100 steps, " + std::to_string(probe_moved) + " moved"));
  }
  return out;
}

// --- detach rule --------------------------------------------------------------

std::vector<CheckResult> verify_detach(const VerifyOptions& opts) {
  Rng rng(opts.seed + 3);
  std::vector<CheckResult> out;
  const double kl_sign = opts.fault == Fault::kl_sign_flip ? -1.0 : 1.0;

  std::size_t nonzero = 0, entries = 0;
  Tally undetached{"detach", "undetached_kl_gradient_fd", opts.fd_tolerance};
  double undetached_norm = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    Rng r = rng.split();
    const Batch batch = toy_batch(r);
    const Players players = toy_players(r);
    Vector scores(batch.size());
    for (double& s : scores) s = r.normal();
    const auto pass = infer_with_cache(*players.eta, batch.aux);
    const auto ws = build_weight_state(scores, pass.assignment);

    // What the outer objective's −β·KL_env term sends to η.
    const double beta = 0.5;
    Matrix dm = kl_env_grad_assignment(ws, pass.assignment, kl_sign > 0.0);
    for (double& v : dm.data()) v *= -beta * kl_sign;
    const auto g = assignment_backward(*players.eta, pass, dm);
    for (double v : g) {
      ++entries;
      if (v != 0.0) ++nonzero;
    }

    // The non-detached path is real: its gradient matches finite differences of KL_env(η).
    const auto full = assignment_backward(*players.eta, pass, kl_env_grad_assignment(ws, pass.assignment, false));
    undetached_norm = std::max(undetached_norm, max_abs(full));
    undetached.add(relative_error(full, central_difference(
                                            [&](const Vector& flat) {
                                              auto net = *players.eta;
                                              net.net.assign(flat);
                                              const auto a = infer_assignments(net, batch.aux);
                                              return build_weight_state(scores, a).kl_env;
                                            },
                                            players.eta->net.flatten())));
  }
  out.push_back(verdict("detach", "kl_env_gradient_wrt_eta_is_zero", nonzero == 0,
                        std::to_string(entries) + " components, " + std::to_string(nonzero) + " nonzero"));
  auto u = undetached.result();
  u.passed = u.passed && undetached_norm > 0.0;
  out.push_back(u);

  // A training step moves η identically whatever β is.
  {
    Dataset data;
    Rng r = rng.split();
    data.train = toy_batch(r, 16);
    data.train.env.clear();
    data.num_train_envs = 0;
    TrainConfig base;
    base.method = Method::ectr_inferred;
    base.epochs = 1;
    base.seed = 11;
    std::vector<Vector> eta_params;
    for (double beta : {0.0, 0.5, 10.0}) {
      auto c = base;
      c.beta = beta;
      Trainer t(c, data);
      t.step(data.train);
      eta_params.push_back(t.players().eta->net.flatten());
    }
    const bool same = eta_params[0] == eta_params[1] && eta_params[0] == eta_params[2];
    out.push_back(verdict("detach", "eta_trajectory_independent_of_beta", same, "one step at beta in {0, 0.5, 10}"));
  }
  return out;
}

// --- reductions -------------------------------------------------------------

std::vector<CheckResult> verify_reductions(const VerifyOptions& opts) {
  Rng rng(opts.seed + 4);
  std::vector<CheckResult> out;

  // β huge, λ ≡ 0, θ uniform and frozen: the step is environment-mean ERM.
  {
    Tally erm{"reductions", "ectr_known_reduces_to_erm", 1e-10};
    for (int rep = 0; rep < 5; ++rep) {
      Rng r = rng.split();
      const Batch batch = toy_batch(r, 12);
      Players players = toy_players(r);
      players.theta = TailAdversary::free(Vector(batch.size(), 0.0));
      auto settings = tail_settings(1e9, TvVariant::l1);
      settings.lambda_mode = LambdaMode::zero;
      TrainConfig tc;
      tc.opt_theta.step = 0.0;
      PlayerOptimizers optimizers(tc);
      const auto assign = EnvAssignment::hard(batch.env, 2);

      PredictorParams ref = players.phi;
      Optimizer ref_opt(tc.opt_phi, "phi");
      std::vector<double> weight(batch.size());
      std::size_t count[2] = {0, 0};
      for (int e : batch.env) ++count[e];
      for (std::size_t i = 0; i < batch.size(); ++i) weight[i] = 0.5 / static_cast<double>(count[batch.env[i]]);

      for (int step = 0; step < 50; ++step) {
        outer_step(players, batch, assign, settings, optimizers);
        const auto fwd = forward(ref, batch.x);
        const auto pr = probe(settings.loss, fwd.logits, batch.y);
        Matrix up(batch.size(), 1);
        for (std::size_t i = 0; i < batch.size(); ++i) up(i, 0) = weight[i] * pr.grad_f(i, 0);
        Vector flat = ref.flatten();
        ref_opt.step(flat, backprop(ref, fwd.cache, up).flatten(), Direction::descent);
        ref.assign(flat);
        erm.add(relative_error(players.phi.flatten(), ref.flatten()));
      }
    }
    out.push_back(erm.result());
  }

  // ectr_inferred with q_η pinned to the true one-hot assignment tracks ectr_known.
  {
    Dataset data;
    Rng r = rng.split();
    data.train = toy_batch(r, 16);
    data.num_train_envs = 2;
    for (std::size_t i = 0; i < data.train.size(); ++i) {
      data.train.aux(i, 0) = data.train.env[i] == 0 ? 1.0 : 0.0;
      data.train.aux(i, 1) = data.train.env[i] == 1 ? 1.0 : 0.0;
    }
    TrainConfig c;
    c.method = Method::ectr_known;
    c.seed = 5;
    c.tail_hidden = {4};
    c.tail_init_gain = 1.0;
    c.opt_eta.step = 0.0;
    Trainer known(c, data);
    c.method = Method::ectr_inferred;
    Trainer inferred(c, data);
    auto& net = inferred.players().eta->net;
    net = PredictorParams::zeros(std::vector<std::size_t>{2, 2}, Activation::identity);
    net.layers[0].weight(0, 0) = 1e3;
    net.layers[0].weight(1, 1) = 1e3;

    Tally track{"reductions", "inferred_frozen_one_hot_matches_known", 1e-10};
    for (int step = 0; step < 50; ++step) {
      known.step(data.train);
      inferred.step(data.train);
      const auto& a = known.players();
      const auto& b = inferred.players();
      double d = std::abs(a.psi - b.psi);
      const auto pa = a.phi.flatten(), pb = b.phi.flatten();
      const auto ta = a.theta->flatten(), tb = b.theta->flatten();
      for (std::size_t k = 0; k < pa.size(); ++k) d = std::max(d, std::abs(pa[k] - pb[k]));
      for (std::size_t k = 0; k < ta.size(); ++k) d = std::max(d, std::abs(ta[k] - tb[k]));
      track.add(d);
    }
    out.push_back(track.result());
  }

  // Uniform π makes the weighted TV penalty the plain per-environment-mean one.
  {
    Tally tv{"reductions", "uniform_pi_tv_equals_irm_tv_l1", 1e-12};
    for (int rep = 0; rep < 200; ++rep) {
      const std::size_t n = 4 + rng.below(20);
      const std::size_t e_count = 2 + rng.below(3);
      std::vector<int> ids(n);
      for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<int>(i % e_count);
      ProbeRecord pr;
      for (std::size_t i = 0; i < n; ++i) pr.d.push_back(rng.normal());
      const auto assign = EnvAssignment::hard(ids, e_count);
      const auto ws = condition_on_envs(Vector(n, 1.0 / static_cast<double>(n)), assign);
      const double weighted = tv_penalty(ws.pi_cond, pr, TvVariant::l1, ws.active).value;
      double plain = 0.0;
      for (std::size_t e = 0; e < e_count; ++e) {
        double s = 0.0;
        std::size_t c = 0;
        for (std::size_t i = 0; i < n; ++i)
          if (ids[i] == static_cast<int>(e)) {
            s += pr.d[i];
            ++c;
          }
        plain += std::abs(s / static_cast<double>(c));
      }
      plain /= static_cast<double>(e_count);
      tv.add(std::abs(weighted - plain));
    }
    out.push_back(tv.result());
  }
  return out;
}

std::vector<CheckResult> verify_all(const VerifyOptions& opts) {
  std::vector<CheckResult> all;
  for (auto suite : {verify_gibbs, verify_gradients, verify_normalization, verify_detach, verify_reductions}) {
    auto part = suite(opts);
    all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return all;
}

}  // namespace ectr
