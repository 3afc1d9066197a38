#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "maescale/harness.hpp"
#include "maescale/scenarios.hpp"

namespace maescale {

// Accuracy against data amount (log horizontal axis) for one protocol: the
// ledger's points and each model's fitted curve at every grid resolution, a
// dashed line at 90 labelled "human level", and a legend of model colours.
std::string render_protocol_svg(const RunLedger& ledger, std::span<const GroupFit> fits,
                                const EvalProtocol& protocol);

// Columns model,protocol,fraction,repeat_index,resolution,i,ppi,accuracy_pct;
// one row per ok result.
std::string points_csv(const RunLedger& ledger);

// Every scenario evaluated under every fit.
std::vector<ScenarioRow> evaluate_scenarios(std::span<const GroupFit> fits,
                                            std::span<const ScenarioSpec> scenarios);

// Writes points.csv, fits.json, accuracy_<protocol>.svg per protocol and
// scenarios.csv into out_dir. Returns the written paths. Throws IoError if the
// directory cannot be written and DomainError if `fits` is empty.
std::vector<std::filesystem::path> emit_report(const RunLedger& ledger,
                                               std::span<const GroupFit> fits,
                                               std::span<const ScenarioSpec> scenarios,
                                               const std::filesystem::path& out_dir);

}  // namespace maescale
