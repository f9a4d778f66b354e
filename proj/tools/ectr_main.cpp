// ectr: generate data, train, sweep and verify.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ectr/config.hpp"
#include "ectr/error.hpp"
#include "ectr/log.hpp"
#include "ectr/report.hpp"
#include "ectr/rng.hpp"
#include "ectr/sweep.hpp"
#include "ectr/verify.hpp"

namespace fs = std::filesystem;
using namespace ectr;

namespace {

const char* kSimulationNote =
    "synthetic data: the generative equations and test grid are this implementation's own instantiation";

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
  if (!out) throw InputError("failed writing " + path.string());
}

void prepare_out(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw InputError("cannot create output directory " + dir.string());
}

/// Data keys with file paths made absolute, so the echo replays from any directory.
Echo data_echo(const Config& cfg, const fs::path& base_dir) {
  auto absolute = [&](const std::string& p) {
    const fs::path path(p);
    return fs::weakly_canonical(fs::absolute(path.is_absolute() ? path : base_dir / path)).string();
  };
  Echo e;
  for (const auto& [k, v] : cfg.entries()) {
    if (k.rfind("data.", 0) != 0) continue;
    if (k == "data.dir") {
      e.emplace_back(k, absolute(v));
    } else if (k == "data.train" || k == "data.test") {
      std::string joined;
      for (const auto& f : cfg.get_strings(k, {})) joined += (joined.empty() ? "" : ", ") + absolute(f);
      e.emplace_back(k, joined);
    } else {
      e.emplace_back(k, v);
    }
  }
  return e;
}

void finish(const fs::path& out, RunManifest m, const Echo& echo) {
  m.config = echo;
  m.rng = std::string(Rng::kAlgorithm);
  m.finished = utc_timestamp();
  write_file(out / "manifest.json", manifest_json(m));
  write_file(out / "run.cfg", echo_as_config(echo));
}

struct Loaded {
  Config cfg;
  TrainConfig train;
  Dataset data;
  Echo echo;
  bool simulated = false;
};

Loaded load_training(const std::string& config_path, std::optional<std::uint64_t> seed) {
  Loaded l;
  l.cfg = Config::load(config_path);
  if (seed) l.cfg.set("seed", std::to_string(*seed));
  l.train = train_config_from(l.cfg);
  const auto base_dir = fs::path(config_path).parent_path();
  l.data = dataset_from(l.cfg, base_dir);
  l.simulated = l.cfg.get_string("data.source", "files") == "simulation";
  l.echo = describe(l.train);
  if (l.simulated) {
    const auto sim = describe(simulation_spec_from(l.cfg));
    l.echo.insert(l.echo.end(), sim.begin(), sim.end());
  }
  const auto d = data_echo(l.cfg, base_dir);
  l.echo.insert(l.echo.end(), d.begin(), d.end());
  return l;
}

int cmd_generate(const std::string& config_path, std::optional<std::uint64_t> seed, const fs::path& out) {
  RunManifest m{"generate"};
  m.started = utc_timestamp();
  auto cfg = Config::load(config_path);
  if (seed) cfg.set("simulation.seed", std::to_string(*seed));
  const auto spec = simulation_spec_from(cfg);
  reject_unused(cfg);
  const auto ds = generate_simulation(spec);
  prepare_out(out);
  for (std::size_t e = 0; e < ds.num_train_envs; ++e)
    write_delimited(out / ("train_e" + std::to_string(e) + ".csv"), ds.train_env(e), ds.feature_names, ds.aux_names);
  for (std::size_t k = 0; k < ds.test.size(); ++k)
    write_delimited(out / ("test_e" + std::to_string(k) + ".csv"), ds.test[k], ds.feature_names, ds.aux_names);
  m.seed = spec.seed;
  finish(out, m, describe(spec));
  log::info("wrote " + std::to_string(ds.num_train_envs) + " train and " + std::to_string(ds.test.size()) +
            " test environments to " + out.string());
  return 0;
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed, const fs::path& out) {
  RunManifest m{"train"};
  m.started = utc_timestamp();
  auto l = load_training(config_path, seed);
  reject_unused(l.cfg);
  prepare_out(out);
  const auto report = train(l.train, l.data);
  std::vector<std::string> notes;
  if (l.simulated) notes.emplace_back(kSimulationNote);
  write_file(out / "report.jsonl", report_jsonl(report, notes));
  m.seed = l.train.seed;
  finish(out, m, l.echo);
  log::info(std::string(to_string(report.method)) + " " + report.final_test.metric + " mean " +
            std::to_string(report.final_test.mean) + " worst " + std::to_string(report.final_test.worst));
  return 0;
}

int cmd_sweep(const std::string& config_path, std::optional<std::uint64_t> seed, const fs::path& out,
              std::size_t jobs) {
  RunManifest m{"sweep"};
  m.started = utc_timestamp();
  auto l = load_training(config_path, seed);
  const auto grid = sweep_grid_from(l.cfg, l.train);
  reject_unused(l.cfg);
  prepare_out(out);
  const auto result = run_sweep(l.train, l.data, grid, jobs);
  write_file(out / "sweep.jsonl", sweep_jsonl(result));
  for (const auto& [k, v] : l.cfg.entries())
    if (k.rfind("sweep.", 0) == 0) l.echo.emplace_back(k, v);
  m.seed = l.train.seed;
  finish(out, m, l.echo);
  for (const auto& a : result.aggregates)
    std::printf("point %zu beta=%g phi_step=%g theta_step=%g psi_step=%g eta_step=%g: mean %.4f +- %.4f, worst %.4f +- %.4f (%zu runs)\n",
                a.point, a.params.beta, a.params.phi_step, a.params.theta_step, a.params.psi_step, a.params.eta_step, a.mean_avg, a.mean_std, a.worst_avg,
                a.worst_std, a.runs);
  return result.failures == 0 ? 0 : 1;
}

int cmd_verify(double tolerance, const std::string& fault, std::optional<std::uint64_t> seed) {
  VerifyOptions opts;
  opts.fd_tolerance = tolerance;
  if (seed) opts.seed = *seed;
  if (fault == "kl-sign-flip") opts.fault = Fault::kl_sign_flip;
  else if (!fault.empty()) throw ConfigError("unknown fault '" + fault + "'");
  const auto results = verify_all(opts);
  std::size_t failed = 0;
  for (const auto& r : results) {
    std::printf("%s %s/%s: %s\n", r.passed ? "PASS" : "FAIL", r.suite.c_str(), r.name.c_str(), r.detail.c_str());
    if (!r.passed) ++failed;
  }
  std::printf("%zu checks, %zu failed\n", results.size(), failed);
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Environment-conditioned tail reweighting for TV-based invariant risk minimization"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  std::string config;
  std::uint64_t seed = 0;
  std::string out = ".";
  std::size_t jobs = 1;
  double tolerance = 1e-4;
  std::string fault;

  auto* gen = app.add_subcommand("generate", "write the synthetic benchmark as delimited files");
  auto* trn = app.add_subcommand("train", "train one method and write a report");
  auto* swp = app.add_subcommand("sweep", "train over a grid of beta, step sizes and seeds");
  auto* ver = app.add_subcommand("verify", "run the oracle and invariant suites");
  std::vector<CLI::Option*> seed_opts;
  for (auto* sc : {gen, trn, swp}) {
    sc->add_option("--config", config, "configuration file")->required()->check(CLI::ExistingFile);
    sc->add_option("--out", out, "output directory");
  }
  for (auto* sc : {gen, trn, swp, ver}) seed_opts.push_back(sc->add_option("--seed", seed, "override the seed"));
  swp->add_option("--jobs", jobs, "parallel training runs")->check(CLI::PositiveNumber);
  ver->add_option("--tolerance", tolerance, "finite-difference relative error bound")->check(CLI::PositiveNumber);
  ver->add_option("--inject-fault", fault, "mutation control")->group("");

  CLI11_PARSE(app, argc, argv);

  std::optional<std::uint64_t> seed_override;
  for (auto* o : seed_opts)
    if (o->count() > 0) seed_override = seed;

  try {
    if (gen->parsed()) return cmd_generate(config, seed_override, out);
    if (trn->parsed()) return cmd_train(config, seed_override, out);
    if (swp->parsed()) return cmd_sweep(config, seed_override, out, jobs);
    if (ver->parsed()) return cmd_verify(tolerance, fault, seed_override);
  } catch (const TrainingAborted& e) {
    const auto& b = e.snapshot();
    std::fprintf(stderr, "error: %s (r_main %g, p_tv %g, kl_env %g, lambda %g, total %g)\n", e.what(), b.r_main,
                 b.p_tv, b.kl_env, b.lambda, b.total);
    return 3;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 1;
}
