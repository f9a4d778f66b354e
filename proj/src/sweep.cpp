#include "ectr/sweep.hpp"

#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "ectr/error.hpp"
#include "ectr/log.hpp"

namespace ectr {

std::size_t SweepGrid::num_points() const {
  return beta.size() * phi_step.size() * theta_step.size() * psi_step.size() * eta_step.size();
}

SweepGrid sweep_grid_from(const Config& cfg, const TrainConfig& base) {
  bool any = false;
  for (const auto& [k, v] : cfg.entries())
    if (k.rfind("sweep.", 0) == 0) any = true;
  if (!any) throw ConfigError("sweep grid is empty: no sweep.* keys in the config");

  SweepGrid g;
  auto axis = [&](const char* key, double fallback) {
    auto v = cfg.get_doubles(key, {fallback});
    if (v.empty()) throw ConfigError(std::string(key) + " is empty");
    return v;
  };
  g.beta = axis("sweep.beta", base.beta);
  g.phi_step = axis("sweep.phi_step", base.opt_phi.step);
  g.theta_step = axis("sweep.theta_step", base.opt_theta.step);
  g.psi_step = axis("sweep.psi_step", base.opt_psi.step);
  g.eta_step = axis("sweep.eta_step", base.opt_eta.step);
  g.seeds = cfg.get_u64s("sweep.seeds", {base.seed});
  if (g.seeds.empty()) throw ConfigError("sweep.seeds is empty");
  g.max_runs = cfg.get_size("sweep.max_runs", g.max_runs);
  if (g.num_runs() > g.max_runs)
    throw ConfigError("sweep grid has " + std::to_string(g.num_runs()) + " runs, above the cap of " +
                      std::to_string(g.max_runs) + " (raise sweep.max_runs to allow it)");
  return g;
}

namespace {

std::vector<SweepPoint> expand(const SweepGrid& g) {
  std::vector<SweepPoint> pts;
  for (double b : g.beta)
    for (double a : g.phi_step)
      for (double t : g.theta_step)
        for (double p : g.psi_step)
          for (double e : g.eta_step) pts.push_back({b, a, t, p, e});
  return pts;
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {NAN, NAN};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  if (v.size() < 2) return {m, 0.0};
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size() - 1))};
}

nlohmann::ordered_json point_json(const SweepPoint& p) {
  return {{"beta", p.beta}, {"phi_step", p.phi_step}, {"theta_step", p.theta_step},
          {"psi_step", p.psi_step}, {"eta_step", p.eta_step}};
}

}  // namespace

SweepResult run_sweep(const TrainConfig& base, const Dataset& dataset, const SweepGrid& grid, std::size_t jobs) {
  const auto points = expand(grid);
  SweepResult result;
  result.rows.resize(points.size() * grid.seeds.size());
  for (std::size_t k = 0; k < result.rows.size(); ++k) {
    auto& row = result.rows[k];
    row.point = k / grid.seeds.size();
    row.params = points[row.point];
    row.seed = grid.seeds[k % grid.seeds.size()];
  }

  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  std::size_t done = 0;
  auto worker = [&] {
    for (std::size_t k = next++; k < result.rows.size(); k = next++) {
      auto& row = result.rows[k];
      TrainConfig c = base;
      c.beta = row.params.beta;
      c.opt_phi.step = row.params.phi_step;
      c.opt_theta.step = row.params.theta_step;
      c.opt_psi.step = row.params.psi_step;
      c.opt_eta.step = row.params.eta_step;
      c.seed = row.seed;
      try {
        const auto report = train(c, dataset);
        row.metric = report.final_test.metric;
        row.mean = report.final_test.mean;
        row.worst = report.final_test.worst;
        if (!report.trace.empty()) row.final_breakdown = report.trace.back().breakdown;
      } catch (const Error& e) {
        row.error = e.what();
      }
      std::lock_guard lock(log_mutex);
      ++done;
      log::info("sweep run " + std::to_string(done) + "/" + std::to_string(result.rows.size()) +
                (row.error.empty() ? "" : " failed: " + row.error));
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(jobs, result.rows.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  for (std::size_t p = 0; p < points.size(); ++p) {
    std::vector<double> means, worsts, kls;
    for (std::size_t s = 0; s < grid.seeds.size(); ++s) {
      const auto& row = result.rows[p * grid.seeds.size() + s];
      if (!row.error.empty()) {
        ++result.failures;
        continue;
      }
      means.push_back(row.mean);
      worsts.push_back(row.worst);
      kls.push_back(row.final_breakdown.kl_env);
    }
    SweepAggregate a;
    a.point = p;
    a.params = points[p];
    a.runs = means.size();
    std::tie(a.mean_avg, a.mean_std) = mean_std(means);
    std::tie(a.worst_avg, a.worst_std) = mean_std(worsts);
    a.kl_env_avg = mean_std(kls).first;
    result.aggregates.push_back(a);
  }
  return result;
}

std::string sweep_jsonl(const SweepResult& r) {
  using nlohmann::ordered_json;
  std::string out;
  auto emit = [&out](const ordered_json& j) {
    out += j.dump();
    out += '\n';
  };
  for (const auto& row : r.rows) {
    ordered_json j{{"record", "run"}, {"point", row.point}};
    j.update(point_json(row.params));
    j["seed"] = row.seed;
    if (!row.error.empty()) {
      j["error"] = row.error;
    } else {
      j["metric"] = row.metric;
      j["mean"] = row.mean;
      j["worst"] = row.worst;
      j["r_main"] = row.final_breakdown.r_main;
      j["p_tv"] = row.final_breakdown.p_tv;
      j["kl_env"] = row.final_breakdown.kl_env;
      j["lambda"] = row.final_breakdown.lambda;
    }
    emit(j);
  }
  for (const auto& a : r.aggregates) {
    ordered_json j{{"record", "aggregate"}, {"point", a.point}};
    j.update(point_json(a.params));
    j["runs"] = a.runs;
    j["mean"] = a.mean_avg;
    j["mean_std"] = a.mean_std;
    j["worst"] = a.worst_avg;
    j["worst_std"] = a.worst_std;
    j["kl_env"] = a.kl_env_avg;
    emit(j);
  }
  emit({{"record", "summary"}, {"runs", r.rows.size()}, {"points", r.aggregates.size()}, {"failures", r.failures}});
  return out;
}

}  // namespace ectr
