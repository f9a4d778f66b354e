#include "ectr/weighting.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>

#include "ectr/error.hpp"

namespace ectr {

TailInputs parse_tail_inputs(std::string_view name) {
  if (name == "features") return TailInputs::features;
  if (name == "features_plus_detached_loss") return TailInputs::features_plus_detached_loss;
  throw ConfigError("unknown tail adversary inputs '" + std::string(name) +
                    "' (expected features, features_plus_detached_loss)");
}

std::string_view to_string(TailInputs t) {
  return t == TailInputs::features ? "features" : "features_plus_detached_loss";
}

// --- TailAdversary ---------------------------------------------------------

TailAdversary TailAdversary::network(PredictorParams net, TailInputs inputs) {
  if (net.output_dim() != 1) throw ShapeError("tail score network must have a scalar output");
  TailAdversary a;
  a.mode_ = TailMode::score_network;
  a.inputs_ = inputs;
  a.net_ = std::move(net);
  return a;
}

TailAdversary TailAdversary::free(Vector scores) {
  TailAdversary a;
  a.mode_ = TailMode::free_scores;
  a.free_scores_ = std::move(scores);
  return a;
}

TailAdversary::Pass TailAdversary::evaluate(const Matrix& features,
                                            std::span<const double> losses) const {
  Pass pass;
  if (mode_ == TailMode::free_scores) {
    if (free_scores_.size() != features.rows())
      throw ShapeError("free scores hold " + std::to_string(free_scores_.size()) +
                       " entries but the batch has " + std::to_string(features.rows()));
    pass.scores = free_scores_;
  } else {
    Matrix input = features;
    if (inputs_ == TailInputs::features_plus_detached_loss) {
      if (losses.size() != features.rows()) throw ShapeError("one loss per sample required");
      input = Matrix(features.rows(), features.cols() + 1);
      for (std::size_t i = 0; i < features.rows(); ++i) {
        std::copy(features.row(i).begin(), features.row(i).end(), input.row(i).begin());
        input(i, features.cols()) = losses[i];
      }
    }
    auto fwd = forward(net_, input);
    pass.scores = std::move(fwd.logits.data());
    pass.cache = std::move(fwd.cache);
  }
  if (!all_finite(pass.scores)) throw NumericError("non-finite tail score", "theta");
  return pass;
}

Vector TailAdversary::backward(const Pass& pass, std::span<const double> dscores) const {
  if (dscores.size() != pass.scores.size()) throw ShapeError("score gradient length mismatch");
  if (mode_ == TailMode::free_scores) return Vector(dscores.begin(), dscores.end());
  Matrix upstream(dscores.size(), 1, Vector(dscores.begin(), dscores.end()));
  return backprop(net_, pass.cache, upstream).flatten();
}

Vector TailAdversary::flatten() const {
  return mode_ == TailMode::free_scores ? free_scores_ : net_.flatten();
}

void TailAdversary::assign(std::span<const double> flat) {
  if (mode_ == TailMode::free_scores) {
    if (flat.size() != free_scores_.size()) throw ShapeError("free score length mismatch");
    std::copy(flat.begin(), flat.end(), free_scores_.begin());
  } else {
    net_.assign(flat);
  }
}

std::size_t TailAdversary::num_params() const {
  return mode_ == TailMode::free_scores ? free_scores_.size() : net_.num_params();
}

// --- EnvAssignment ---------------------------------------------------------

EnvAssignment EnvAssignment::hard(std::span<const int> ids, std::size_t num_envs) {
  if (num_envs == 0) throw InputError("at least one environment is required");
  EnvAssignment a;
  a.mode = AssignmentMode::hard;
  a.mass = Matrix(ids.size(), num_envs);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= num_envs)
      throw InputError("environment id " + std::to_string(ids[i]) + " outside [0, " +
                       std::to_string(num_envs) + ")");
    a.mass(i, static_cast<std::size_t>(ids[i])) = 1.0;
  }
  return a;
}

EnvAssignment EnvAssignment::soft(Matrix m) {
  if (m.cols() == 0) throw InputError("at least one environment is required");
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (double v : m.row(i)) {
      if (!(v >= 0.0 && v <= 1.0)) throw InputError("soft assignment entry outside [0,1]");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-9)
      throw InputError("soft assignment row " + std::to_string(i) + " sums to " +
                       std::to_string(s));
  }
  EnvAssignment a;
  a.mode = AssignmentMode::soft;
  a.mass = std::move(m);
  return a;
}

// --- weights ---------------------------------------------------------------

std::size_t WeightState::num_active() const {
  return static_cast<std::size_t>(std::count(active.begin(), active.end(), char{1}));
}

Vector global_softmax(std::span<const double> scores) {
  if (scores.empty()) throw InputError("softmax of an empty batch");
  if (!all_finite(scores)) throw InputError("softmax input is not finite");
  const double smax = *std::max_element(scores.begin(), scores.end());
  Vector pi(scores.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) denom += (pi[i] = std::exp(scores[i] - smax));
  for (double& p : pi) p /= denom;
  return pi;
}

WeightState condition_on_envs(std::span<const double> pi, const EnvAssignment& assign,
                              double epsilon) {
  const auto n = assign.num_samples();
  const auto e_count = assign.num_envs();
  if (pi.size() != n) throw ShapeError("weights and assignment disagree on batch size");
  if (!(epsilon > 0.0)) throw InputError("mass epsilon must be positive");

  WeightState ws;
  ws.pi_global.assign(pi.begin(), pi.end());
  ws.epsilon = epsilon;
  ws.mass_e.assign(e_count, 0.0);
  ws.active.assign(e_count, 0);
  ws.pi_cond = Matrix(n, e_count);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t e = 0; e < e_count; ++e) ws.mass_e[e] += pi[i] * assign.mass(i, e);

  for (std::size_t e = 0; e < e_count; ++e) {
    if (ws.mass_e[e] < 10.0 * epsilon) continue;
    ws.active[e] = 1;
    const double denom = ws.mass_e[e] + epsilon;
    double col = 0.0;
    for (std::size_t i = 0; i < n; ++i) col += (ws.pi_cond(i, e) = pi[i] * assign.mass(i, e) / denom);
    for (std::size_t i = 0; i < n; ++i) ws.pi_cond(i, e) /= col;
  }
  return ws;
}

WeightState build_weight_state(std::span<const double> scores, const EnvAssignment& assign,
                               double epsilon) {
  auto ws = condition_on_envs(global_softmax(scores), assign, epsilon);
  if (ws.num_active() > 0) ws.kl_env = kl_env(ws.pi_cond, assign, ws.active);
  return ws;
}

Matrix env_uniform(const EnvAssignment& assign) {
  Matrix u(assign.num_samples(), assign.num_envs());
  for (std::size_t e = 0; e < assign.num_envs(); ++e) {
    double s = 0.0;
    for (std::size_t i = 0; i < assign.num_samples(); ++i) s += assign.mass(i, e);
    if (s <= 0.0) continue;
    for (std::size_t i = 0; i < assign.num_samples(); ++i) u(i, e) = assign.mass(i, e) / s;
  }
  return u;
}

namespace {

bool is_active(std::span<const char> active, std::size_t e) {
  return active.empty() || active[e] != 0;
}

std::size_t count_active(std::span<const char> active, std::size_t e_count) {
  if (active.empty()) return e_count;
  return static_cast<std::size_t>(std::count(active.begin(), active.end(), char{1}));
}

}  // namespace

double kl_env(const Matrix& pi_cond, const EnvAssignment& assign, std::span<const char> active) {
  if (pi_cond.rows() != assign.num_samples() || pi_cond.cols() != assign.num_envs())
    throw ShapeError("conditional weights and assignment shapes differ");
  const auto used = count_active(active, assign.num_envs());
  if (used == 0) throw InputError("no active environment");
  const Matrix unif = env_uniform(assign);
  double total = 0.0;
  for (std::size_t e = 0; e < assign.num_envs(); ++e) {
    if (!is_active(active, e)) continue;
    double kl = 0.0;
    for (std::size_t i = 0; i < pi_cond.rows(); ++i) {
      const double c = pi_cond(i, e);
      if (c <= 0.0) continue;
      if (unif(i, e) <= 0.0)
        throw NumericError("KL support violation: sample " + std::to_string(i) +
                           " has weight in environment " + std::to_string(e) +
                           " outside the environment's support");
      kl += c * std::log(c / unif(i, e));
    }
    total += kl;
  }
  // Rounding can leave a value like -1e-17 at the uniform point.
  return std::max(0.0, total / static_cast<double>(used));
}

// --- reverse mode ----------------------------------------------------------

Vector softmax_backward(std::span<const double> pi, std::span<const double> dpi) {
  if (pi.size() != dpi.size()) throw ShapeError("softmax backward length mismatch");
  const double inner = dot(pi, dpi);
  Vector ds(pi.size());
  for (std::size_t k = 0; k < pi.size(); ++k) ds[k] = pi[k] * (dpi[k] - inner);
  return ds;
}

namespace {

// Σ_i G(i,e)·π(i|e) for each environment.
Vector weighted_column_means(const WeightState& ws, const Matrix& dcond) {
  Vector out(ws.pi_cond.cols(), 0.0);
  for (std::size_t e = 0; e < out.size(); ++e)
    for (std::size_t i = 0; i < ws.pi_cond.rows(); ++i) out[e] += dcond(i, e) * ws.pi_cond(i, e);
  return out;
}

void check_dcond(const WeightState& ws, const Matrix& dcond) {
  if (dcond.rows() != ws.pi_cond.rows() || dcond.cols() != ws.pi_cond.cols())
    throw ShapeError("gradient with respect to conditional weights has the wrong shape");
}

}  // namespace

Vector conditional_backward_pi(const WeightState& ws, const EnvAssignment& assign,
                               const Matrix& dcond) {
  check_dcond(ws, dcond);
  const Vector centre = weighted_column_means(ws, dcond);
  Vector dpi(ws.pi_global.size(), 0.0);
  for (std::size_t e = 0; e < ws.mass_e.size(); ++e) {
    if (!ws.active[e]) continue;
    for (std::size_t j = 0; j < dpi.size(); ++j)
      dpi[j] += assign.mass(j, e) / ws.mass_e[e] * (dcond(j, e) - centre[e]);
  }
  return dpi;
}

Matrix conditional_backward_assignment(const WeightState& ws, const EnvAssignment& assign,
                                       const Matrix& dcond) {
  check_dcond(ws, dcond);
  (void)assign;
  const Vector centre = weighted_column_means(ws, dcond);
  Matrix dm(ws.pi_cond.rows(), ws.pi_cond.cols());
  for (std::size_t e = 0; e < ws.mass_e.size(); ++e) {
    if (!ws.active[e]) continue;
    for (std::size_t j = 0; j < dm.rows(); ++j)
      dm(j, e) = ws.pi_global[j] / ws.mass_e[e] * (dcond(j, e) - centre[e]);
  }
  return dm;
}

Matrix kl_env_grad_cond(const WeightState& ws, const EnvAssignment& assign) {
  const Matrix unif = env_uniform(assign);
  const double scale = 1.0 / static_cast<double>(ws.num_active());
  Matrix g(ws.pi_cond.rows(), ws.pi_cond.cols());
  for (std::size_t e = 0; e < g.cols(); ++e) {
    if (!ws.active[e]) continue;
    for (std::size_t i = 0; i < g.rows(); ++i) {
      const double c = ws.pi_cond(i, e);
      if (c > 0.0 && unif(i, e) > 0.0) g(i, e) = scale * (std::log(c / unif(i, e)) + 1.0);
    }
  }
  return g;
}

Matrix kl_env_grad_assignment(const WeightState& ws, const EnvAssignment& assign,
                              bool detach_assignment) {
  if (detach_assignment) return Matrix(assign.num_samples(), assign.num_envs());
  Matrix dm = conditional_backward_assignment(ws, assign, kl_env_grad_cond(ws, assign));
  // Dependence through Unif_e: ∂/∂m(j,e) = 1/S_e − π(j)/mass_e per active environment.
  const double scale = 1.0 / static_cast<double>(ws.num_active());
  for (std::size_t e = 0; e < assign.num_envs(); ++e) {
    if (!ws.active[e]) continue;
    double s = 0.0;
    for (std::size_t i = 0; i < assign.num_samples(); ++i) s += assign.mass(i, e);
    for (std::size_t j = 0; j < assign.num_samples(); ++j)
      dm(j, e) += scale * (1.0 / s - ws.pi_global[j] / ws.mass_e[e]);
  }
  return dm;
}

// --- KL-regularized DRO ----------------------------------------------------

namespace {

void check_dro_inputs(std::span<const double> losses, std::span<const double> base, double beta) {
  if (!(beta > 0.0)) throw InputError("beta must be positive");
  if (losses.empty() || losses.size() != base.size())
    throw ShapeError("losses and base must be nonempty and of equal length");
  double s = 0.0;
  for (double b : base) {
    if (!(b >= 0.0)) throw InputError("base distribution has a negative entry");
    s += b;
  }
  if (std::abs(s - 1.0) > 1e-9) throw InputError("base distribution does not sum to 1");
}

}  // namespace

double kl_dro_objective(std::span<const double> pi, std::span<const double> losses,
                        std::span<const double> base, double beta) {
  double value = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    if (pi[i] <= 0.0) continue;
    if (base[i] <= 0.0) return -std::numeric_limits<double>::infinity();
    value += pi[i] * losses[i] - beta * pi[i] * std::log(pi[i] / base[i]);
  }
  return value;
}

Vector gibbs_tail_distribution(std::span<const double> losses, std::span<const double> base,
                               double beta) {
  check_dro_inputs(losses, base, beta);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < losses.size(); ++i)
    if (base[i] > 0.0) top = std::max(top, losses[i] / beta);
  Vector pi(losses.size(), 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i)
    if (base[i] > 0.0) z += (pi[i] = base[i] * std::exp(losses[i] / beta - top));
  for (double& p : pi) p /= z;
  return pi;
}

double kl_dro_optimal_value(std::span<const double> losses, std::span<const double> base,
                            double beta) {
  check_dro_inputs(losses, base, beta);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < losses.size(); ++i)
    if (base[i] > 0.0) top = std::max(top, losses[i] / beta);
  double z = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i)
    if (base[i] > 0.0) z += base[i] * std::exp(losses[i] / beta - top);
  return beta * (top + std::log(z));
}

KlDroSearchResult brute_force_kl_dro(std::span<const double> losses, std::span<const double> base,
                                     double beta, std::size_t grid_resolution) {
  check_dro_inputs(losses, base, beta);
  const std::size_t n = losses.size();
  if (n > 6) throw InputError("brute-force KL-DRO search supports at most 6 samples");
  if (grid_resolution < 200) throw InputError("grid resolution must be at least 200");

  auto objective = [&](std::span<const double> p) { return kl_dro_objective(p, losses, base, beta); };

  // Start from the base itself, then try the full lattice {k/R : Σk = R} when small enough.
  KlDroSearchResult best{Vector(base.begin(), base.end()), 0.0};
  best.objective = objective(best.argmax);

  double lattice_points = 1.0;
  for (std::size_t k = 1; k < n; ++k)
    lattice_points *= static_cast<double>(grid_resolution + k) / static_cast<double>(k);
  if (lattice_points <= 2.0e6) {
    const double h = 1.0 / static_cast<double>(grid_resolution);
    std::vector<std::size_t> counts(n, 0);
    Vector p(n);
    std::function<void(std::size_t, std::size_t)> walk = [&](std::size_t idx, std::size_t left) {
      if (idx + 1 == n) {
        counts[idx] = left;
        for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<double>(counts[i]) * h;
        const double v = objective(p);
        if (v > best.objective) best = {p, v};
        return;
      }
      for (std::size_t c = 0; c <= left; ++c) {
        counts[idx] = c;
        walk(idx + 1, left - c);
      }
    };
    walk(0, grid_resolution);
  }

  // Pairwise refinement: move mass between two coordinates along a grid, zooming in
  // around the best transfer. The objective is concave and separable under a single
  // sum constraint, so no pair improving means the maximizer has been reached.
  Vector p = best.argmax;
  for (int sweep = 0; sweep < 400; ++sweep) {
    bool improved = false;
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        const double total = p[a] + p[b];
        if (total <= 0.0) continue;
        double lo = 0.0, hi = total;
        double best_x = p[a];
        double best_v = objective(p);
        const double start_v = best_v;
        for (int zoom = 0; zoom < 30; ++zoom) {
          const double step = (hi - lo) / static_cast<double>(grid_resolution);
          for (std::size_t k = 0; k <= grid_resolution; ++k) {
            const double x = std::min(total, lo + static_cast<double>(k) * step);
            Vector q = p;
            q[a] = x;
            q[b] = total - x;
            const double v = objective(q);
            if (v > best_v) {
              best_v = v;
              best_x = x;
            }
          }
          lo = std::max(0.0, best_x - 2.0 * step);
          hi = std::min(total, best_x + 2.0 * step);
          if (hi - lo < 1e-15) break;
        }
        if (best_v > start_v) {
          p[a] = best_x;
          p[b] = total - best_x;
          if (best_v - start_v > 1e-16) improved = true;
        }
      }
    }
    if (!improved) break;
  }
  best.argmax = p;
  best.objective = objective(p);
  return best;
}

}  // namespace ectr
