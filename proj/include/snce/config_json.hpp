#pragma once

#include <json.hpp>

#include <cstdint>
#include <vector>

#include "snce/toy_lab.hpp"

namespace snce {

// Parsed toy-experiment plan: the shared base configuration plus the run
// matrix (objectives, optional tau / label-smoothing sweeps, seeds).
struct ToyRunPlan {
  ToyConfig base;
  std::vector<Objective> objectives;
  std::vector<double> tau_grid;
  std::vector<double> label_smoothing_grid;
  std::vector<std::uint64_t> seeds;
};

// Strict parse: unknown fields are rejected, every valid field is
// range-checked with an error message naming the field.
ToyRunPlan parse_toy_plan(const nlohmann::json& j);

// Canonical JSON echo of a config (sorted keys); hashing this gives the
// manifest's config_hash.
nlohmann::json toy_config_to_json(const ToyConfig& cfg);

nlohmann::json run_record_to_json(const RunRecord& record,
                                  const ToyConfig& cfg);

}  // namespace snce
