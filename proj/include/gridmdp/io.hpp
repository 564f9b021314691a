#pragma once

#include <stdexcept>
#include <string>

#include <json.hpp>

#include "gridmdp/env.hpp"

namespace gridmdp {

/// Raised for action documents that do not match the action schema
/// (schema/action.schema.json). The message carries the validation detail.
class ActionParseError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Elements are referenced by id. Curtailment caps and storage set points are
/// objects keyed by element id; renewables left out keep their current cap and
/// storages left out idle.
nlohmann::json action_to_json(const Action& action, const Grid& grid);
Action action_from_json(const nlohmann::json& doc, const Grid& grid, const EnvState& state);

/// Per-generator and per-storage arrays follow grid index order.
nlohmann::json step_info_to_json(const StepInfo& info);
StepInfo step_info_from_json(const nlohmann::json& doc);

/// Labeled view with one record per element.
nlohmann::json observation_to_json(const Observation& obs, const Grid& grid);
nlohmann::json step_result_to_json(const StepResult& result, const Grid& grid);

}  // namespace gridmdp
