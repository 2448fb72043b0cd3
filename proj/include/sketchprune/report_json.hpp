#pragma once

#include "json.hpp"

#include "sketchprune/analysis.hpp"
#include "sketchprune/planner.hpp"

namespace sketchprune {

// Reports keep deterministic content apart from wall-clock measurements:
// every elapsed time lives under a top-level "timing" key so outputs can be
// diffed after dropping it.
nlohmann::ordered_json to_json(const QualityReport& q);
nlohmann::ordered_json to_json(const PrunePlan& plan);
nlohmann::ordered_json to_json(const PruneReport& report);
nlohmann::ordered_json to_json(const WeightStats& stats);
nlohmann::ordered_json to_json(const ComplexityReport& report);

// Copy of `report` without its "timing" key.
nlohmann::ordered_json deterministic_payload(const nlohmann::ordered_json& report);

}  // namespace sketchprune
