#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ectr/data.hpp"
#include "ectr/trainer.hpp"

namespace ectr {

/// Flat key/value configuration. Lines are `key = value`; `#` starts a comment; a
/// `[section]` line prefixes every following key, dotted or not, with `section.`; an
/// empty `[]` returns to the top level.
class Config {
 public:
  static Config parse(std::string_view text, const std::string& source = "<string>");
  static Config load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  bool has(std::string_view key) const;
  const std::map<std::string, std::string, std::less<>>& entries() const noexcept { return entries_; }

  std::string get_string(std::string_view key, std::string_view fallback) const;
  double get_double(std::string_view key, double fallback) const;
  std::size_t get_size(std::string_view key, std::size_t fallback) const;
  std::uint64_t get_u64(std::string_view key, std::uint64_t fallback) const;
  std::vector<double> get_doubles(std::string_view key, std::vector<double> fallback) const;
  std::vector<std::uint64_t> get_u64s(std::string_view key, std::vector<std::uint64_t> fallback) const;
  std::vector<std::size_t> get_sizes(std::string_view key, std::vector<std::size_t> fallback) const;
  std::vector<std::string> get_strings(std::string_view key, std::vector<std::string> fallback) const;

  /// Keys never read by any getter, for rejecting typos.
  std::vector<std::string> unused_keys() const;

 private:
  std::optional<std::string_view> lookup(std::string_view key) const;

  std::string source_;
  std::map<std::string, std::string, std::less<>> entries_;
  mutable std::set<std::string, std::less<>> used_;
};

TrainConfig train_config_from(const Config& cfg);
SimulationSpec simulation_spec_from(const Config& cfg);

/// Resolves the dataset a config points at: `data.source = simulation` generates it in
/// memory from `simulation.*`; otherwise `data.dir` (files written by `ectr generate`)
/// or explicit `data.train` / `data.test` file lists with `data.schema`.
Dataset dataset_from(const Config& cfg, const std::filesystem::path& base_dir);

/// Key/value echo of a simulation spec under `simulation.*`.
std::vector<std::pair<std::string, std::string>> describe(const SimulationSpec& spec);

/// Throws ConfigError listing every key that no getter consumed.
void reject_unused(const Config& cfg);

}  // namespace ectr
