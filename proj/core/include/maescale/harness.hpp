#pragma once

// Experiment grid, cell execution, the append-only JSONL run ledger, and
// per-(model, protocol) scaling-law fits over ledger results.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maescale/corpus.hpp"
#include "maescale/eval.hpp"
#include "maescale/mae.hpp"
#include "maescale/scaling_law.hpp"

namespace maescale {

std::string tool_version();

struct ExperimentConfig {
    std::vector<double> fractions{1.0, 0.5, 0.25, 0.05};
    std::vector<int> resolutions{16, 24, 32};
    std::vector<std::string> ladder{"TOY-A", "TOY-B", "TOY-C", "TOY-D"};
    std::vector<EvalProtocol> protocols{EvalProtocol::no_finetune()};
    std::uint64_t master_seed = 0;
    int epochs = 5;
    int batch_size = 16;
    double learning_rate = 0.3;

    // Optional keys; defaults apply when absent from the JSON.
    int repeats = 4;  // subset draws per fraction below 1
    double mask_ratio = kDefaultMaskRatio;
    double eval_split = kDefaultEvalSplit;
    double ridge = kDefaultRidge;
    FinetuneSchedule finetune;

    // Throws ConfigError.
    void validate() const;
    static ExperimentConfig from_json(const std::string& text);
    static ExperimentConfig load(const std::filesystem::path& path);
    std::string to_json() const;
    std::uint64_t hash() const;  // of the canonical JSON
};

struct CellSeeds {
    std::uint64_t subset = 0;
    std::uint64_t init = 0;
    std::uint64_t train = 0;
    std::uint64_t eval = 0;

    friend bool operator==(const CellSeeds&, const CellSeeds&) = default;
};

struct ExperimentCell {
    double fraction = 1.0;
    int repeat_index = 0;
    int resolution = 16;
    std::string model_name;
    EvalProtocol protocol;
    CellSeeds seeds;

    // Identity of the cell inside a ledger.
    std::string key() const;

    friend bool operator==(const ExperimentCell&, const ExperimentCell&) = default;
};

// Seeds are hashes of the master seed and the cell coordinates each stream
// depends on:
//   subset <- (fraction)                        repeat_index is mixed in by the sampler
//   init   <- (model, resolution, repeat)
//   train  <- (model, resolution, fraction, repeat)
//   eval   <- (protocol)                        every cell shares one held-out split
CellSeeds derive_seeds(std::uint64_t master_seed, double fraction, int repeat_index,
                       int resolution, const std::string& model, const EvalProtocol& protocol);

// Fractions descending, then repeat, resolution ascending, ladder order,
// protocol order. One instance at fraction 1, `repeats` below it.
std::vector<ExperimentCell> design_grid(const ExperimentConfig& config);

struct ExperimentResult {
    ExperimentCell cell;
    double i_thousands = 0.0;  // subset size / 1000
    std::optional<double> accuracy_pct;
    double final_train_loss = 0.0;
    std::size_t n_eval = 0;
    double wall_seconds = 0.0;
    std::string status = "ok";  // "ok" or "failed:<reason>"

    bool ok() const { return status == "ok"; }
};

// The base corpus re-rendered at every grid resolution.
class CorpusSet {
public:
    CorpusSet(const CorpusManifest& base, std::span<const int> resolutions);

    const CorpusManifest& at(int resolution) const;
    std::uint64_t fingerprint() const noexcept { return fingerprint_; }

private:
    std::map<int, CorpusManifest> by_resolution_;
    std::uint64_t fingerprint_ = 0;
};

// sample_subset -> train -> evaluate. Training and evaluation failures are
// recorded in `status`; configuration problems throw.
ExperimentResult run_cell(const ExperimentCell& cell, const CorpusSet& corpora,
                          const ExperimentConfig& config);

struct LedgerHeader {
    std::uint64_t corpus_fingerprint = 0;
    std::uint64_t config_hash = 0;
    std::string tool_version;
};

struct RunLedger {
    LedgerHeader header;
    std::vector<ExperimentResult> results;
};

std::string ledger_header_line(const LedgerHeader& header);
std::string ledger_result_line(const ExperimentResult& result);

// A malformed final line (an interrupted append) is dropped; malformed lines
// elsewhere throw IoError.
RunLedger load_ledger(const std::filesystem::path& path);

struct RunGridOptions {
    int workers = 1;
    // Stop after this many newly executed cells, as if interrupted.
    std::optional<std::size_t> stop_after;
    std::function<void(const ExperimentResult&)> on_result;
};

struct RunGridSummary {
    std::size_t executed = 0;
    std::size_t skipped = 0;
    RunLedger ledger;
};

// Runs the cells missing from the ledger on up to `workers` threads and
// appends results in grid order. Refuses to resume a ledger written for a
// different corpus or config (ConfigError).
RunGridSummary run_grid(std::span<const ExperimentCell> cells, const CorpusSet& corpora,
                        const ExperimentConfig& config, const std::filesystem::path& ledger_path,
                        const RunGridOptions& options = {});

std::vector<ScalingPoint> ledger_points(const RunLedger& ledger, const std::string& model,
                                        const EvalProtocol& protocol);

struct GroupFit {
    std::string model;
    EvalProtocol protocol;
    FitResult fit;
};

struct LedgerFits {
    std::vector<GroupFit> fits;         // groups in first-appearance order
    std::vector<std::string> warnings;  // groups that were skipped, and why
};

LedgerFits fit_from_ledger(const RunLedger& ledger, const FitOptions& options = {});

// Array of {model, protocol, fit: {c, a, b, rmse, n_points, objective}}.
std::string fits_to_json(std::span<const GroupFit> fits);
std::vector<GroupFit> fits_from_json(const std::string& text);
void save_fits(const std::filesystem::path& path, std::span<const GroupFit> fits);
std::vector<GroupFit> load_fits(const std::filesystem::path& path);

}  // namespace maescale
