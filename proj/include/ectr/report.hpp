#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ectr/trainer.hpp"

namespace ectr {

inline constexpr std::string_view kVersion = "ectr 0.3.0";

using Echo = std::vector<std::pair<std::string, std::string>>;

struct RunManifest {
  std::string command;
  Echo config;
  std::string rng = "";
  std::uint64_t seed = 0;
  std::string started;
  std::string finished;
  std::string version = std::string(kVersion);
};

/// JSON-lines rendering of a report: one `header`, the per-epoch trace, warnings,
/// per-environment test metrics and a closing `summary` record. Carries no timestamps,
/// so equal inputs give byte-equal text. `notes` go into the header verbatim.
std::string report_jsonl(const RunReport& report, const std::vector<std::string>& notes = {});

std::string manifest_json(const RunManifest& manifest);

/// `key = value` lines that Config::parse reads back.
std::string echo_as_config(const Echo& echo);

/// Current UTC time, ISO 8601 with seconds.
std::string utc_timestamp();

}  // namespace ectr
