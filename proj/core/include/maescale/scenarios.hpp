#pragma once

// Fitted laws evaluated at hypothetical scale points, the 90% human-level
// threshold test, and closed-form inversion for the scale that reaches it.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maescale/scaling_law.hpp"

namespace maescale {

inline constexpr double kHumanLevelPct = 90.0;

struct ScenarioSpec {
    std::string label;
    double i_thousands = 1.0;
    double ppi = 1.0;
    std::int64_t param_count = 0;  // informational; the law has no model-size term
    std::optional<double> expected_pct;
};

// Current Test (200, 256, 0.3e9, 40), 4 x Test (2400, 1280, 9.6e9, 65),
// 10 x Test (12600, 4096, 522e9, 91).
std::vector<ScenarioSpec> builtin_table1();

bool is_human_level(double pct);  // inclusive at 90

struct ScenarioOutcome {
    double predicted_pct = 0.0;
    double clamped_pct = 0.0;
    bool human_level = false;
    std::optional<double> residual_vs_expected;  // predicted - expected
};

ScenarioOutcome evaluate_scenario(const CanonicalScalingParams& params, const ScenarioSpec& spec);

struct ThresholdSolution {
    std::optional<double> value;
    std::string diagnosis;  // why it is unreachable; empty when solved

    bool reachable() const noexcept { return value.has_value(); }
};

// ppi such that predict(params, i, ppi) = threshold. Unreachable when the
// fixed factor c * (ln i + a) is not positive or the result overflows.
ThresholdSolution solve_threshold_ppi(const CanonicalScalingParams& params, double i,
                                      double threshold_pct = kHumanLevelPct);
ThresholdSolution solve_threshold_i(const CanonicalScalingParams& params, double ppi,
                                    double threshold_pct = kHumanLevelPct);

// CSV with header label,i_thousands,ppi,param_count,expected_pct.
std::string scenarios_to_csv(std::span<const ScenarioSpec> specs);
std::vector<ScenarioSpec> scenarios_from_csv(const std::string& text);
std::vector<ScenarioSpec> load_scenarios(const std::filesystem::path& path);

struct ScenarioRow {
    std::string model;
    std::string protocol;
    ScenarioSpec spec;
    ScenarioOutcome outcome;
};

// Scenario columns followed by model,protocol,predicted_pct,clamped_pct,
// human_level,residual.
std::string scenario_results_to_csv(std::span<const ScenarioRow> rows);

}  // namespace maescale
