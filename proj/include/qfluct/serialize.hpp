#pragma once

#include <json.hpp>

#include "qfluct/plan.hpp"
#include "qfluct/schedule.hpp"

namespace qfluct {

nlohmann::json plan_to_json(const ExperimentPlan& plan);
ExperimentPlan plan_from_json(const nlohmann::json& j);

nlohmann::json schedule_to_json(const NoiseSchedule& schedule);
NoiseSchedule schedule_from_json(const nlohmann::json& j);

// Parses with a data-shaped error message on failure.
nlohmann::json parse_json(const std::string& text, const std::string& what);

}  // namespace qfluct
