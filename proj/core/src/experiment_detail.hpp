#pragma once

#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "curaloop/experiment.hpp"
#include "curaloop/fixed_points.hpp"

namespace curaloop::detail {

nlohmann::ordered_json metric_json(double value);
nlohmann::ordered_json metric_json(const MetricValue& value);
nlohmann::ordered_json assumption_json(const AssumptionReport& report);

struct LimitOutcome {
  std::optional<FixedPointResult> limit;
  /// Why there is no limit, when there is none.
  std::string note;
};

/// The regime's limit from the configured p0 (pure), p_ref (mixed finite)
/// or the closed form (mixed infinite). Errors become notes.
LimitOutcome compute_limit(const ExperimentConfig& cfg, const PreferenceModel& model, const RegimeConfig& rc);

}  // namespace curaloop::detail
