#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ectr/config.hpp"
#include "ectr/data.hpp"
#include "ectr/trainer.hpp"

namespace ectr {

/// Cartesian grid over β, the four step sizes and seeds. An axis left unset holds the
/// base configuration's value.
struct SweepGrid {
  std::vector<double> beta;
  std::vector<double> phi_step;
  std::vector<double> theta_step;
  std::vector<double> psi_step;
  std::vector<double> eta_step;
  std::vector<std::uint64_t> seeds;
  std::size_t max_runs = 512;

  std::size_t num_points() const;
  std::size_t num_runs() const { return num_points() * seeds.size(); }
};

/// Reads `sweep.beta`, `sweep.phi_step`, `sweep.theta_step`, `sweep.psi_step`,
/// `sweep.eta_step`, `sweep.seeds` and `sweep.max_runs`. Throws ConfigError on an empty
/// grid or when the run count exceeds the cap.
SweepGrid sweep_grid_from(const Config& cfg, const TrainConfig& base);

struct SweepPoint {
  double beta = 0.0;
  double phi_step = 0.0;
  double theta_step = 0.0;
  double psi_step = 0.0;
  double eta_step = 0.0;
};

struct SweepRow {
  std::size_t point = 0;
  SweepPoint params;
  std::uint64_t seed = 0;
  std::string metric;
  double mean = 0.0;
  double worst = 0.0;
  OuterLossBreakdown final_breakdown;
  std::string error;  ///< nonempty when the run failed
};

struct SweepAggregate {
  std::size_t point = 0;
  SweepPoint params;
  std::size_t runs = 0;
  double mean_avg = 0.0;
  double mean_std = 0.0;
  double worst_avg = 0.0;
  double worst_std = 0.0;
  double kl_env_avg = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;  ///< ordered by (point, seed) regardless of scheduling
  std::vector<SweepAggregate> aggregates;
  std::size_t failures = 0;
};

/// Runs every (point, seed) with up to `jobs` worker threads, each owning its trainer.
SweepResult run_sweep(const TrainConfig& base, const Dataset& dataset, const SweepGrid& grid, std::size_t jobs);

/// One `run` record per row, one `aggregate` record per point, then a `summary` record.
std::string sweep_jsonl(const SweepResult& result);

}  // namespace ectr
