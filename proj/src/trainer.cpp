#include "ectr/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ectr/log.hpp"

namespace ectr {

// --- methods ---------------------------------------------------------------

namespace {

constexpr std::pair<Method, std::string_view> kMethods[] = {
    {Method::erm, "erm"},
    {Method::irmv1, "irmv1"},
    {Method::group_dro, "group_dro"},
    {Method::irm_tv_l1, "irm_tv_l1"},
    {Method::ood_tv_irm_l1, "ood_tv_irm_l1"},
    {Method::ectr_known, "ectr_known"},
    {Method::ectr_inferred, "ectr_inferred"},
};

std::string num(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string widths(const std::vector<std::size_t>& w) {
  std::string s;
  for (auto x : w) {
    if (!s.empty()) s += ',';
    s += std::to_string(x);
  }
  return s;
}

}  // namespace

Method parse_method(std::string_view name) {
  for (const auto& [m, n] : kMethods)
    if (n == name) return m;
  throw ConfigError("unknown method '" + std::string(name) + "'; valid methods: " + method_names());
}

std::string_view to_string(Method m) {
  for (const auto& [mm, n] : kMethods)
    if (mm == m) return n;
  return "?";
}

std::string method_names() {
  std::string s;
  for (const auto& [m, n] : kMethods) {
    if (!s.empty()) s += ", ";
    s += n;
  }
  return s;
}

bool requires_env_ids(Method m) {
  return m != Method::erm && m != Method::ectr_inferred;
}

void TrainConfig::validate() const {
  if (!(beta >= 0.0)) throw ConfigError("beta must be nonnegative");
  if (!(gamma >= 0.0)) throw ConfigError("gamma must be nonnegative");
  if (!(tv_lambda >= 0.0)) throw ConfigError("tv_lambda must be nonnegative");
  if (!std::isfinite(psi_init)) throw ConfigError("psi_init must be finite");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (k_inner == 0) throw ConfigError("k_inner must be at least 1");
  if (latent_envs < 2) throw ConfigError("latent_envs must be at least 2");
  if (!(infer_temperature > 0.0)) throw ConfigError("inference temperature must be positive");
  if (!(group_dro_step >= 0.0)) throw ConfigError("group_dro_step must be nonnegative");
  if (eval_every == 0) throw ConfigError("eval_every must be positive");
  if (loss.kind == LossKind::multiclass_cross_entropy && num_classes < 2)
    throw ConfigError("multiclass loss needs num_classes ≥ 2");
  if (tail_mode == TailMode::free_scores && batch_size != 0)
    throw ConfigError("free_scores tail adversary requires full-batch training (batch_size = 0)");
  for (const auto* o : {&opt_phi, &opt_theta, &opt_psi, &opt_eta})
    if (!(o->step >= 0.0) || !std::isfinite(o->step)) throw ConfigError("step sizes must be finite and nonnegative");
}

std::vector<std::pair<std::string, std::string>> describe(const TrainConfig& c) {
  std::vector<std::pair<std::string, std::string>> out = {
      {"method", std::string(to_string(c.method))},
      {"loss", std::string(to_string(c.loss.kind))},
      {"num_classes", std::to_string(c.num_classes)},
      {"predictor.hidden", widths(c.hidden)},
      {"predictor.activation", std::string(to_string(c.activation))},
      {"predictor.init_gain", num(c.init_gain)},
      {"objective.beta", num(c.beta)},
      {"objective.gamma", num(c.gamma)},
      {"objective.tv_lambda", num(c.tv_lambda)},
      {"objective.tv_variant", std::string(to_string(c.tv_variant))},
      {"objective.psi_init", num(c.psi_init)},
      {"objective.epsilon", num(c.epsilon)},
      {"objective.group_dro_step", num(c.group_dro_step)},
      {"tail.mode", c.tail_mode == TailMode::free_scores ? "free_scores" : "score_network"},
      {"tail.inputs", std::string(to_string(c.tail_inputs))},
      {"tail.hidden", widths(c.tail_hidden)},
      {"tail.init_gain", num(c.tail_init_gain)},
      {"infer.latent_envs", std::to_string(c.latent_envs)},
      {"infer.hidden", widths(c.infer_hidden)},
      {"infer.temperature", num(c.infer_temperature)},
      {"infer.init_gain", num(c.infer_init_gain)},
      {"infer.k_inner", std::to_string(c.k_inner)},
      {"train.epochs", std::to_string(c.epochs)},
      {"train.batch_size", std::to_string(c.batch_size)},
      {"train.eval_every", std::to_string(c.eval_every)},
  };
  const std::pair<const char*, const OptimizerConfig*> opts[] = {
      {"phi", &c.opt_phi}, {"theta", &c.opt_theta}, {"psi", &c.opt_psi}, {"eta", &c.opt_eta}};
  for (const auto& [name, o] : opts) {
    const std::string p = std::string("optim.") + name + ".";
    out.emplace_back(p + "kind", std::string(to_string(o->kind)));
    out.emplace_back(p + "step", num(o->step));
    out.emplace_back(p + "momentum", num(o->momentum));
    out.emplace_back(p + "beta1", num(o->beta1));
    out.emplace_back(p + "beta2", num(o->beta2));
    out.emplace_back(p + "eps", num(o->eps));
  }
  out.emplace_back("seed", std::to_string(c.seed));
  return out;
}

ObjectiveSettings objective_settings(const TrainConfig& c) {
  ObjectiveSettings s;
  s.loss = c.loss;
  s.variant = c.tv_variant;
  s.epsilon = c.epsilon;
  switch (c.method) {
    case Method::erm:
    case Method::group_dro:
      s.tail = false;
      s.lambda_mode = LambdaMode::zero;
      s.beta = 0.0;
      break;
    case Method::irmv1:
      s.tail = false;
      s.lambda_mode = LambdaMode::fixed;
      s.fixed_lambda = c.gamma;
      s.variant = TvVariant::l2;
      s.beta = 0.0;
      break;
    case Method::irm_tv_l1:
      s.tail = false;
      s.lambda_mode = LambdaMode::fixed;
      s.fixed_lambda = c.tv_lambda;
      s.beta = 0.0;
      break;
    case Method::ood_tv_irm_l1:
      s.tail = false;
      s.lambda_mode = LambdaMode::dual;
      s.beta = 0.0;
      break;
    case Method::ectr_known:
    case Method::ectr_inferred:
      s.tail = true;
      s.lambda_mode = LambdaMode::dual;
      s.beta = c.beta;
      break;
  }
  return s;
}

// --- objective -------------------------------------------------------------

TailRisks tail_risks(std::span<const double> losses, const Matrix& pi_cond, std::span<const char> active) {
  if (losses.size() != pi_cond.rows()) throw ShapeError("one loss per weighted sample required");
  TailRisks r;
  r.per_env.assign(pi_cond.cols(), 0.0);
  std::size_t used = 0;
  for (std::size_t e = 0; e < pi_cond.cols(); ++e) {
    if (!active.empty() && !active[e]) continue;
    ++used;
    double acc = 0.0;
    for (std::size_t i = 0; i < losses.size(); ++i) acc += pi_cond(i, e) * losses[i];
    r.per_env[e] = acc;
    r.main += acc;
  }
  if (used == 0) throw InputError("no active environment for tail risks");
  r.main /= static_cast<double>(used);
  return r;
}

namespace {

// π uniform over the batch, so π(·|e) = Unif_e exactly.
WeightState uniform_weight_state(const EnvAssignment& assign, double epsilon) {
  const auto n = assign.num_samples();
  WeightState ws;
  ws.epsilon = epsilon;
  ws.pi_global.assign(n, 1.0 / static_cast<double>(n));
  ws.pi_cond = env_uniform(assign);
  ws.mass_e.assign(assign.num_envs(), 0.0);
  ws.active.assign(assign.num_envs(), 0);
  for (std::size_t e = 0; e < assign.num_envs(); ++e) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += assign.mass(i, e);
    ws.mass_e[e] = s / static_cast<double>(n);
    if (ws.mass_e[e] >= 10.0 * epsilon) {
      ws.active[e] = 1;
    } else {
      for (std::size_t i = 0; i < n; ++i) ws.pi_cond(i, e) = 0.0;
    }
  }
  return ws;
}

}  // namespace

OuterEvaluation evaluate_outer(const Players& players, const Batch& batch, const EnvAssignment& assign,
                               const ObjectiveSettings& settings) {
  if (batch.size() == 0) throw InputError("empty batch");
  if (assign.num_samples() != batch.size()) throw ShapeError("assignment does not cover the batch");
  if (players.phi.probe_w != 1.0) throw NumericError("probe w moved away from 1", "phi");

  OuterEvaluation ev;
  const auto fwd = forward(players.phi, batch.x);
  ev.probes = probe(settings.loss, fwd.logits, batch.y);

  std::optional<TailAdversary::Pass> pass;
  if (settings.tail) {
    if (!players.theta) throw ConfigError("tail-weighted objective without a tail adversary");
    pass = players.theta->evaluate(batch.x, ev.probes.loss);
    ev.weights = condition_on_envs(global_softmax(pass->scores), assign, settings.epsilon);
  } else {
    ev.weights = uniform_weight_state(assign, settings.epsilon);
  }
  const auto used = ev.weights.num_active();
  if (used == 0) throw NumericError("every environment is degenerate in this batch");

  const auto risks = tail_risks(ev.probes.loss, ev.weights.pi_cond, ev.weights.active);
  ev.env_risks = risks.per_env;
  ev.tv = tv_penalty(ev.weights.pi_cond, ev.probes, settings.variant, ev.weights.active);
  if (settings.tail) ev.weights.kl_env = kl_env(ev.weights.pi_cond, assign, ev.weights.active);

  double lambda = 0.0;
  switch (settings.lambda_mode) {
    case LambdaMode::zero: lambda = 0.0; break;
    case LambdaMode::fixed: lambda = settings.fixed_lambda; break;
    case LambdaMode::dual: lambda = lambda_of(players.psi); break;
  }

  auto& b = ev.breakdown;
  b.r_main = risks.main;
  b.p_tv = ev.tv.value;
  b.kl_env = ev.weights.kl_env;
  b.lambda = lambda;
  b.total = b.r_main + b.lambda * b.p_tv - settings.beta * b.kl_env;
  if (!std::isfinite(b.total)) throw TrainingAborted("non-finite outer objective", b);

  const double inv_e = 1.0 / static_cast<double>(used);
  const auto& pc = ev.weights.pi_cond;
  const auto n = batch.size();

  // Φ: the risk term through ℓ_i and the TV term through d_i.
  const Matrix tv_up = tv_grad_wrt_logits(pc, ev.probes, ev.tv);
  Matrix upstream(n, ev.probes.grad_f.cols());
  for (std::size_t i = 0; i < n; ++i) {
    double w = 0.0;
    for (std::size_t e = 0; e < pc.cols(); ++e)
      if (ev.weights.active[e]) w += pc(i, e) * inv_e;
    for (std::size_t j = 0; j < upstream.cols(); ++j)
      upstream(i, j) = w * ev.probes.grad_f(i, j) + lambda * tv_up(i, j);
  }
  ev.grad_phi = backprop(players.phi, fwd.cache, upstream).flatten();

  // θ: every term depends on π(·|e).
  if (settings.tail) {
    const Matrix tv_cond = tv_grad_wrt_cond(ev.probes, ev.tv);
    const Matrix kl_cond = kl_env_grad_cond(ev.weights, assign);
    Matrix dcond(n, pc.cols());
    for (std::size_t e = 0; e < pc.cols(); ++e) {
      if (!ev.weights.active[e]) continue;
      for (std::size_t i = 0; i < n; ++i)
        dcond(i, e) = inv_e * ev.probes.loss[i] + lambda * tv_cond(i, e) - settings.beta * kl_cond(i, e);
    }
    const Vector dpi = conditional_backward_pi(ev.weights, assign, dcond);
    const Vector ds = softmax_backward(ev.weights.pi_global, dpi);
    ev.grad_theta = players.theta->backward(*pass, ds);
  }

  if (settings.lambda_mode == LambdaMode::dual) ev.grad_psi = lambda_grad(players.psi) * ev.tv.value;
  return ev;
}

PlayerOptimizers::PlayerOptimizers(const TrainConfig& c)
    : phi(c.opt_phi, "phi"), theta(c.opt_theta, "theta"), psi(c.opt_psi, "psi"), eta(c.opt_eta, "eta") {}

OuterEvaluation outer_step(Players& players, const Batch& batch, const EnvAssignment& assign,
                           const ObjectiveSettings& settings, PlayerOptimizers& optimizers) {
  auto ev = evaluate_outer(players, batch, assign, settings);
  if (settings.tail) {
    Vector flat = players.theta->flatten();
    optimizers.theta.step(flat, ev.grad_theta, Direction::ascent);
    players.theta->assign(flat);
  }
  if (settings.lambda_mode == LambdaMode::dual) {
    double psi = players.psi;
    const double g = ev.grad_psi;
    optimizers.psi.step(std::span<double>(&psi, 1), std::span<const double>(&g, 1), Direction::ascent);
    players.psi = psi;
  }
  Vector flat = players.phi.flatten();
  optimizers.phi.step(flat, ev.grad_phi, Direction::descent);
  players.phi.assign(flat);
  return ev;
}

// --- evaluation ------------------------------------------------------------

EvalResult evaluate(const PredictorParams& params, const LossSpec& loss, std::span<const Batch> splits,
                    std::span<const std::string> names) {
  if (names.size() != splits.size()) throw ShapeError("one name per evaluation split required");
  EvalResult r;
  r.metric = loss.is_classification() ? "accuracy" : "mse";
  for (std::size_t s = 0; s < splits.size(); ++s) {
    const auto& b = splits[s];
    if (b.size() == 0) {
      r.warnings.push_back("evaluation split '" + names[s] + "' is empty and was excluded");
      continue;
    }
    const Matrix logits = predict(params, b.x);
    double acc = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
      const auto row = logits.row(i);
      switch (loss.kind) {
        case LossKind::mse: {
          const double res = row[0] - b.y[i];
          acc += res * res;
          break;
        }
        case LossKind::bce_with_logit:
          acc += ((row[0] > 0.0 ? 1.0 : 0.0) == b.y[i]) ? 1.0 : 0.0;
          break;
        case LossKind::multiclass_cross_entropy: {
          const auto arg = static_cast<double>(std::max_element(row.begin(), row.end()) - row.begin());
          acc += arg == b.y[i] ? 1.0 : 0.0;
          break;
        }
      }
    }
    r.per_env.push_back({names[s], b.size(), acc / static_cast<double>(b.size())});
  }
  if (r.per_env.empty()) throw InputError("no nonempty evaluation split");
  double sum = 0.0;
  r.worst = r.per_env.front().value;
  for (const auto& m : r.per_env) {
    sum += m.value;
    r.worst = loss.is_classification() ? std::min(r.worst, m.value) : std::max(r.worst, m.value);
  }
  r.mean = sum / static_cast<double>(r.per_env.size());
  return r;
}

// --- trainer ---------------------------------------------------------------

namespace {

Players init_players(const TrainConfig& c, const Dataset& data, Rng& root) {
  Rng phi_rng = root.split();
  Rng theta_rng = root.split();
  Rng eta_rng = root.split();

  Players p;
  const auto d = data.train.x.cols();
  std::vector<std::size_t> w{d};
  w.insert(w.end(), c.hidden.begin(), c.hidden.end());
  w.push_back(c.loss.logit_dim(c.num_classes));
  p.phi = PredictorParams::glorot(w, c.activation, phi_rng, c.init_gain);
  p.psi = c.psi_init;

  const auto settings = objective_settings(c);
  if (settings.tail) {
    if (c.tail_mode == TailMode::free_scores) {
      p.theta = TailAdversary::free(Vector(data.train.size(), 0.0));
    } else {
      std::vector<std::size_t> tw{d + (c.tail_inputs == TailInputs::features_plus_detached_loss ? 1u : 0u)};
      tw.insert(tw.end(), c.tail_hidden.begin(), c.tail_hidden.end());
      tw.push_back(1);
      p.theta = TailAdversary::network(PredictorParams::glorot(tw, Activation::tanh, theta_rng, c.tail_init_gain),
                                       c.tail_inputs);
    }
  }
  if (c.method == Method::ectr_inferred) {
    const auto a = data.train.has_aux() ? data.train.aux.cols() : d;
    std::vector<std::size_t> ew{a};
    ew.insert(ew.end(), c.infer_hidden.begin(), c.infer_hidden.end());
    ew.push_back(c.latent_envs);
    p.eta = EnvInferenceNet{PredictorParams::glorot(ew, Activation::tanh, eta_rng, c.infer_init_gain),
                            c.infer_temperature};
  }
  if (c.method == Method::group_dro)
    p.group_weights.assign(data.num_train_envs, 1.0 / static_cast<double>(data.num_train_envs));
  return p;
}

const TrainConfig& checked(const TrainConfig& c, const Dataset& data) {
  c.validate();
  if (data.train.size() == 0) throw ConfigError("training split is empty");
  if (requires_env_ids(c.method) && (!data.train.has_env_ids() || data.num_train_envs == 0))
    throw ConfigError("method " + std::string(to_string(c.method)) +
                      " requires environment ids, but the training data has none");
  return c;
}

}  // namespace

Trainer::Trainer(TrainConfig config, const Dataset& dataset)
    : config_(checked(config, dataset)),
      data_(dataset),
      settings_(objective_settings(config_)),
      optimizers_(config_),
      batch_rng_(0) {
  Rng root(config_.seed);
  players_ = init_players(config_, data_, root);
  batch_rng_ = root.split();
  report_.method = config_.method;
  report_.seed = config_.seed;
  report_.config_echo = describe(config_);

  const std::size_t envs = config_.method == Method::ectr_inferred ? config_.latent_envs : data_.num_train_envs;
  if (config_.batch_size != 0 && config_.batch_size < 2 * envs) {
    const auto msg = "batch_size " + std::to_string(config_.batch_size) + " is below 2·E = " +
                     std::to_string(2 * envs) + "; environments may be missing from batches";
    report_.events.push_back(msg);
    log::info(msg);
  }
}

EnvAssignment Trainer::assignment_for(const Batch& batch) const {
  switch (config_.method) {
    case Method::erm:
      return EnvAssignment::hard(std::vector<int>(batch.size(), 0), 1);
    case Method::ectr_inferred:
      return infer_assignments(*players_.eta, batch.has_aux() ? batch.aux : batch.x);
    default:
      return EnvAssignment::hard(batch.env, data_.num_train_envs);
  }
}

void Trainer::note_degenerate(const WeightState& ws) {
  for (std::size_t e = 0; e < ws.active.size(); ++e) {
    if (ws.active[e]) continue;
    ++report_.degenerate_events;
    if (report_.events.size() < 200) {
      std::ostringstream os;
      os << "epoch " << epoch_ << " step " << step_in_epoch_ << ": environment " << e << " mass "
         << ws.mass_e[e] << " below 10*epsilon; skipped in this batch";
      report_.events.push_back(os.str());
    }
  }
}

OuterLossBreakdown Trainer::group_dro_step(const Batch& batch) {
  const auto e_count = data_.num_train_envs;
  const auto fwd = forward(players_.phi, batch.x);
  const auto probes = probe(config_.loss, fwd.logits, batch.y);
  Vector risk(e_count, 0.0);
  std::vector<std::size_t> count(e_count, 0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto e = static_cast<std::size_t>(batch.env[i]);
    risk[e] += probes.loss[i];
    ++count[e];
  }
  int selected = -1;
  for (std::size_t e = 0; e < e_count; ++e) {
    if (count[e] == 0) continue;
    risk[e] /= static_cast<double>(count[e]);
    if (selected < 0 || risk[e] > risk[static_cast<std::size_t>(selected)]) selected = static_cast<int>(e);
  }
  report_.group_dro_selected.push_back(selected);

  // Exponentiated-gradient ascent on the environment mixture.
  auto& q = players_.group_weights;
  double z = 0.0;
  for (std::size_t e = 0; e < e_count; ++e) {
    if (count[e] > 0) q[e] *= std::exp(config_.group_dro_step * risk[e]);
    z += q[e];
  }
  for (double& v : q) v /= z;

  OuterLossBreakdown b;
  for (std::size_t e = 0; e < e_count; ++e)
    if (count[e] > 0) b.r_main += q[e] * risk[e];
  b.total = b.r_main;
  if (!std::isfinite(b.total)) throw TrainingAborted("non-finite group DRO objective", b);

  Matrix upstream(batch.size(), probes.grad_f.cols());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto e = static_cast<std::size_t>(batch.env[i]);
    const double w = q[e] / static_cast<double>(count[e]);
    for (std::size_t j = 0; j < upstream.cols(); ++j) upstream(i, j) = w * probes.grad_f(i, j);
  }
  Vector flat = players_.phi.flatten();
  optimizers_.phi.step(flat, backprop(players_.phi, fwd.cache, upstream).flatten(), Direction::descent);
  players_.phi.assign(flat);
  return b;
}

OuterLossBreakdown Trainer::step(const Batch& batch) {
  if (config_.method == Method::group_dro) return group_dro_step(batch);

  if (config_.method == Method::ectr_inferred) {
    const Matrix& aux = batch.has_aux() ? batch.aux : batch.x;
    const auto pass = infer_with_cache(*players_.eta, aux);
    const auto ev = outer_step(players_, batch, pass.assignment, settings_, optimizers_);
    note_degenerate(ev.weights);
    // Inner ascent uses the same pre-update π and probes as the outer step.
    for (std::size_t k = 0; k < config_.k_inner; ++k)
      inner_step(*players_.eta, aux, ev.weights.pi_global, ev.probes, settings_.variant, optimizers_.eta,
                 settings_.epsilon);
    return ev.breakdown;
  }

  const auto ev = outer_step(players_, batch, assignment_for(batch), settings_, optimizers_);
  note_degenerate(ev.weights);
  return ev.breakdown;
}

std::vector<Batch> Trainer::epoch_batches() {
  const auto n = data_.train.size();
  if (config_.batch_size == 0 || config_.batch_size >= n) return {data_.train};

  const std::size_t steps = (n + config_.batch_size - 1) / config_.batch_size;
  std::vector<std::vector<std::size_t>> rows(steps);
  const bool stratify = requires_env_ids(config_.method);
  if (stratify) {
    for (std::size_t e = 0; e < data_.num_train_envs; ++e) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < n; ++i)
        if (data_.train.env[i] == static_cast<int>(e)) members.push_back(i);
      batch_rng_.shuffle(members.begin(), members.end());
      for (std::size_t k = 0; k < members.size(); ++k) rows[k * steps / members.size()].push_back(members[k]);
    }
  } else {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    batch_rng_.shuffle(order.begin(), order.end());
    for (std::size_t k = 0; k < n; ++k) rows[k * steps / n].push_back(order[k]);
  }
  std::vector<Batch> out;
  out.reserve(steps);
  for (auto& r : rows) {
    if (r.empty()) continue;
    std::sort(r.begin(), r.end());
    out.push_back(data_.train.select(r));
  }
  return out;
}

RunReport Trainer::run() {
  for (epoch_ = 1; epoch_ <= config_.epochs; ++epoch_) {
    const auto batches = epoch_batches();
    OuterLossBreakdown mean;
    step_in_epoch_ = 0;
    for (const auto& b : batches) {
      ++step_in_epoch_;
      const auto s = step(b);
      mean.r_main += s.r_main;
      mean.p_tv += s.p_tv;
      mean.kl_env += s.kl_env;
      mean.lambda += s.lambda;
      mean.total += s.total;
    }
    const double k = static_cast<double>(batches.size());
    mean.r_main /= k;
    mean.p_tv /= k;
    mean.kl_env /= k;
    mean.lambda /= k;
    mean.total /= k;

    EpochRecord rec;
    rec.epoch = epoch_;
    rec.breakdown = mean;
    if (epoch_ % config_.eval_every == 0 || epoch_ == config_.epochs) {
      const auto ev = evaluate(players_.phi, config_.loss, data_.test, data_.test_names);
      rec.test_mean = ev.mean;
      rec.test_worst = ev.worst;
      rec.evaluated = true;
    }
    report_.trace.push_back(rec);
    if (log::level() == log::Level::trace) {
      std::ostringstream os;
      os << to_string(config_.method) << " epoch " << epoch_ << " total " << mean.total << " r_main "
         << mean.r_main << " p_tv " << mean.p_tv << " kl " << mean.kl_env << " lambda " << mean.lambda;
      if (rec.evaluated) os << " test mean " << rec.test_mean << " worst " << rec.test_worst;
      log::trace(os.str());
    }
  }
  report_.final_test = evaluate(players_.phi, config_.loss, data_.test, data_.test_names);
  for (const auto& w : report_.final_test.warnings) report_.events.push_back(w);
  switch (settings_.lambda_mode) {
    case LambdaMode::zero: report_.final_lambda = 0.0; break;
    case LambdaMode::fixed: report_.final_lambda = settings_.fixed_lambda; break;
    case LambdaMode::dual: report_.final_lambda = lambda_of(players_.psi); break;
  }
  return report_;
}

RunReport train(const TrainConfig& config, const Dataset& dataset) {
  Trainer t(config, dataset);
  return t.run();
}

}  // namespace ectr
