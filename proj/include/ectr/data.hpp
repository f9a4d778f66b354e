#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ectr/matrix.hpp"

namespace ectr {

/// One set of samples. `env` is empty when environment ids are unknown; `aux` has zero
/// columns when no auxiliary variables exist.
struct Batch {
  Matrix x;
  Vector y;
  std::vector<int> env;
  Matrix aux;

  std::size_t size() const noexcept { return y.size(); }
  bool has_env_ids() const noexcept { return !env.empty(); }
  bool has_aux() const noexcept { return aux.cols() > 0; }
  Batch select(std::span<const std::size_t> rows) const;
};

/// Concatenates batches row-wise. Environment ids are kept only if every part has them.
Batch concat(std::span<const Batch> parts);

struct Dataset {
  /// Pooled training samples; `train.env` holds ids in [0, num_train_envs) when known.
  Batch train;
  std::size_t num_train_envs = 0;
  std::vector<Batch> test;
  std::vector<std::string> test_names;
  std::vector<std::string> feature_names;
  std::vector<std::string> aux_names;

  /// Samples of training environment e (requires known ids).
  Batch train_env(std::size_t e) const;
};

// ---------------------------------------------------------------------------
// Synthetic mixed-shift benchmark
// ---------------------------------------------------------------------------

struct SimulationSpec {
  std::size_t n_per_env = 5000;
  double p_v = 0.8;
  double p_s_minus = 0.999;  ///< spurious agreement for t < 0.5
  double p_s_plus = 0.9;     ///< spurious agreement for t ≥ 0.5
  std::vector<double> p_s_test = {0.9, 0.7, 0.5, 0.3, 0.1};
  double invariant_scale = 1.0;
  double spurious_scale = 1.0;
  double noise_std = 0.1;
  std::uint64_t seed = 0;

  /// Throws ConfigError when a field is out of range.
  void validate() const;
};

/// Two training environments (the time segments t < 0.5 and t ≥ 0.5, n_per_env each) and
/// one test environment per p_s_test entry with t uniform on [0,1]. Features are
/// (x_inv, x_sp); the auxiliary variable is t.
Dataset generate_simulation(const SimulationSpec& spec);

/// Empirical accuracy of the threshold rules 1[x_inv > 0] and 1[x_sp > 0].
struct ReferenceAccuracies {
  Vector invariant_train, spurious_train;
  Vector invariant_test, spurious_test;
};

ReferenceAccuracies split_metrics_oracle(const Dataset& dataset);

// ---------------------------------------------------------------------------
// Delimited text
// ---------------------------------------------------------------------------

enum class ColumnRole { feature, label, env_id, aux, ignore };

ColumnRole parse_column_role(std::string_view name);

/// Column name → role, in any order.
using Schema = std::map<std::string, ColumnRole, std::less<>>;

/// "name:role,name:role,...".
Schema parse_schema(std::string_view text);

/// Parses a headered comma- or tab-delimited file. Columns appear in the batch in file
/// order within each role. Quoted fields are rejected. Environment ids must be
/// nonnegative integers and are kept verbatim.
struct LoadedTable {
  Batch batch;
  std::vector<std::string> feature_names;
  std::vector<std::string> aux_names;
};

LoadedTable load_delimited(const std::filesystem::path& path, const Schema& schema, char delimiter = ',');

/// Loads train and test files, pools the training files, remaps training environment ids
/// to 0..E-1 in ascending order, and standardizes features and auxiliaries with the
/// training mean and standard deviation (std floored at 1e-12). Each test file is one
/// test environment.
Dataset load_dataset(std::span<const std::filesystem::path> train_files,
                     std::span<const std::filesystem::path> test_files, const Schema& schema,
                     char delimiter = ',');

/// Writes a batch with the given header. Columns: features, aux, label, env (if known).
/// Numbers use the shortest round-trip representation.
void write_delimited(const std::filesystem::path& path, const Batch& batch,
                     std::span<const std::string> feature_names,
                     std::span<const std::string> aux_names, char delimiter = ',');

}  // namespace ectr
