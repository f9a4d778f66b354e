#include "ectr/report.hpp"

#include <chrono>
#include <ctime>

#include <json.hpp>

namespace ectr {

using nlohmann::ordered_json;

namespace {

ordered_json breakdown_json(const OuterLossBreakdown& b) {
  return {{"r_main", b.r_main}, {"p_tv", b.p_tv}, {"kl_env", b.kl_env}, {"lambda", b.lambda}, {"total", b.total}};
}

}  // namespace

std::string report_jsonl(const RunReport& r, const std::vector<std::string>& notes) {
  std::string out;
  auto emit = [&out](const ordered_json& j) {
    out += j.dump();
    out += '\n';
  };

  ordered_json header{{"record", "header"}, {"method", to_string(r.method)}, {"seed", r.seed}};
  ordered_json cfg = ordered_json::object();
  for (const auto& [k, v] : r.config_echo) cfg[k] = v;
  header["config"] = std::move(cfg);
  if (!notes.empty()) header["notes"] = notes;
  emit(header);

  for (const auto& rec : r.trace) {
    ordered_json j{{"record", "epoch"}, {"epoch", rec.epoch}};
    j.update(breakdown_json(rec.breakdown));
    if (rec.evaluated) {
      j["test_mean"] = rec.test_mean;
      j["test_worst"] = rec.test_worst;
    }
    emit(j);
  }
  for (const auto& e : r.events) emit({{"record", "event"}, {"message", e}});
  for (const auto& m : r.final_test.per_env)
    emit({{"record", "test_env"}, {"name", m.name}, {"samples", m.samples}, {"metric", r.final_test.metric}, {"value", m.value}});

  ordered_json summary{{"record", "summary"},
                       {"method", to_string(r.method)},
                       {"seed", r.seed},
                       {"metric", r.final_test.metric},
                       {"mean", r.final_test.mean},
                       {"worst", r.final_test.worst},
                       {"final_lambda", r.final_lambda},
                       {"degenerate_events", r.degenerate_events},
                       {"epochs", r.trace.size()}};
  if (!r.trace.empty()) summary["final"] = breakdown_json(r.trace.back().breakdown);
  if (!r.group_dro_selected.empty()) summary["group_dro_selected"] = r.group_dro_selected;
  emit(summary);
  return out;
}

std::string manifest_json(const RunManifest& m) {
  ordered_json cfg = ordered_json::object();
  for (const auto& [k, v] : m.config) cfg[k] = v;
  ordered_json j{{"command", m.command}, {"config", std::move(cfg)}, {"rng", m.rng},    {"seed", m.seed},
                 {"started", m.started}, {"finished", m.finished},   {"version", m.version}};
  return j.dump(2) + "\n";
}

std::string echo_as_config(const Echo& echo) {
  std::string out;
  for (const auto& [k, v] : echo) out += k + " = " + v + "\n";
  return out;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace ectr
