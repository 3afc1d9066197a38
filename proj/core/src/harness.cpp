#include "maescale/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

#include "binary_io.hpp"
#include "maescale/error.hpp"
#include "maescale/random.hpp"
#include "text_format.hpp"
#include <json.hpp>

namespace maescale {

using nlohmann::ordered_json;

std::string tool_version() { return MAESCALE_VERSION; }

namespace {

template <class T>
std::vector<T> read_list(const ordered_json& j, const char* key) {
    if (!j.contains(key)) throw ConfigError(std::string("config is missing '") + key + "'");
    const auto& v = j.at(key);
    if (!v.is_array()) throw ConfigError(std::string("config '") + key + "' must be an array");
    return v.get<std::vector<T>>();
}

template <class T>
T read_value(const ordered_json& j, const char* key) {
    if (!j.contains(key)) throw ConfigError(std::string("config is missing '") + key + "'");
    return j.at(key).get<T>();
}

template <class T>
void read_optional(const ordered_json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void ExperimentConfig::validate() const {
    if (fractions.empty() || resolutions.empty() || ladder.empty() || protocols.empty()) {
        throw ConfigError("fractions, resolutions, ladder and protocols must all be nonempty");
    }
    for (double f : fractions) {
        if (!(f > 0.0 && f <= 1.0)) throw ConfigError("fractions must lie in (0, 1]");
    }
    if (std::set<double>(fractions.begin(), fractions.end()).size() != fractions.size()) {
        throw ConfigError("fractions must be distinct");
    }
    for (int r : resolutions) {
        if (r < 8 || r % 4 != 0) {
            throw ConfigError("resolutions must be multiples of 4 and at least 8, got " +
                              std::to_string(r));
        }
    }
    if (std::set<int>(resolutions.begin(), resolutions.end()).size() != resolutions.size()) {
        throw ConfigError("resolutions must be distinct");
    }
    const auto names = size_ladder(resolutions.front());
    for (const auto& m : ladder) {
        if (!names.contains(m)) throw ConfigError("unknown model size '" + m + "'");
    }
    if (std::set<std::string>(ladder.begin(), ladder.end()).size() != ladder.size()) {
        throw ConfigError("ladder entries must be distinct");
    }
    for (std::size_t k = 0; k < protocols.size(); ++k) {
        for (std::size_t q = 0; q < k; ++q) {
            if (protocols[k] == protocols[q]) throw ConfigError("protocols must be distinct");
        }
    }
    if (epochs < 0 || batch_size < 1) throw ConfigError("need epochs >= 0 and batch_size >= 1");
    if (!std::isfinite(learning_rate) || learning_rate < 0.0) {
        throw ConfigError("learning_rate must be finite and nonnegative");
    }
    if (repeats < 1 || repeats > 4) throw ConfigError("repeats must lie in [1, 4]");
    if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) throw ConfigError("mask_ratio must lie in (0, 1)");
    if (!(eval_split > 0.0 && eval_split < 1.0)) throw ConfigError("eval_split must lie in (0, 1)");
    if (!(ridge >= 0.0)) throw ConfigError("ridge must be nonnegative");
    if (finetune.epochs < 0 || finetune.batch_size < 1 || !(finetune.learning_rate >= 0.0)) {
        throw ConfigError("invalid fine-tune schedule");
    }
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
    ExperimentConfig c;
    try {
        const auto j = ordered_json::parse(text);
        if (!j.is_object()) throw ConfigError("config must be a JSON object");
        c.fractions = read_list<double>(j, "fractions");
        c.resolutions = read_list<int>(j, "resolutions");
        c.ladder = read_list<std::string>(j, "ladder");
        c.protocols.clear();
        for (const auto& name : read_list<std::string>(j, "protocols")) {
            try {
                c.protocols.push_back(EvalProtocol::parse(name));
            } catch (const DomainError& e) {
                throw ConfigError(e.what());
            }
        }
        c.master_seed = read_value<std::uint64_t>(j, "master_seed");
        c.epochs = read_value<int>(j, "epochs");
        c.batch_size = read_value<int>(j, "batch_size");
        c.learning_rate = read_value<double>(j, "learning_rate");
        read_optional(j, "repeats", c.repeats);
        read_optional(j, "mask_ratio", c.mask_ratio);
        read_optional(j, "eval_split", c.eval_split);
        read_optional(j, "ridge", c.ridge);
        if (j.contains("finetune")) {
            const auto& f = j.at("finetune");
            read_optional(f, "epochs", c.finetune.epochs);
            read_optional(f, "batch_size", c.finetune.batch_size);
            read_optional(f, "learning_rate", c.finetune.learning_rate);
        }
    } catch (const ordered_json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    return from_json(read_text_file(path));
}

std::string ExperimentConfig::to_json() const {
    ordered_json j;
    j["fractions"] = fractions;
    j["resolutions"] = resolutions;
    j["ladder"] = ladder;
    auto names = ordered_json::array();
    for (const auto& p : protocols) names.push_back(p.name());
    j["protocols"] = names;
    j["master_seed"] = master_seed;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["learning_rate"] = learning_rate;
    j["repeats"] = repeats;
    j["mask_ratio"] = mask_ratio;
    j["eval_split"] = eval_split;
    j["ridge"] = ridge;
    j["finetune"] = {{"epochs", finetune.epochs},
                     {"batch_size", finetune.batch_size},
                     {"learning_rate", finetune.learning_rate}};
    return j.dump();
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a64(to_json()); }

std::string ExperimentCell::key() const {
    return format_double(fraction) + '|' + std::to_string(repeat_index) + '|' +
           std::to_string(resolution) + '|' + model_name + '|' + protocol.name();
}

CellSeeds derive_seeds(std::uint64_t master_seed, double fraction, int repeat_index,
                       int resolution, const std::string& model, const EvalProtocol& protocol) {
    const auto rep = static_cast<std::uint64_t>(repeat_index);
    const auto res = static_cast<std::uint64_t>(resolution);
    CellSeeds s;
    s.subset = json_safe_seed(hash_words({master_seed, fnv1a64("subset"), double_bits(fraction)}));
    s.init = json_safe_seed(hash_words({master_seed, fnv1a64("init"), fnv1a64(model), res, rep}));
    s.train = json_safe_seed(hash_words(
        {master_seed, fnv1a64("train"), fnv1a64(model), res, double_bits(fraction), rep}));
    s.eval = json_safe_seed(hash_words({master_seed, fnv1a64("eval"), fnv1a64(protocol.name())}));
    return s;
}

std::vector<ExperimentCell> design_grid(const ExperimentConfig& config) {
    config.validate();
    auto fractions = config.fractions;
    std::sort(fractions.begin(), fractions.end(), std::greater<>());
    auto resolutions = config.resolutions;
    std::sort(resolutions.begin(), resolutions.end());

    std::vector<ExperimentCell> cells;
    for (double f : fractions) {
        const int repeats = f == 1.0 ? 1 : config.repeats;
        for (int rep = 0; rep < repeats; ++rep) {
            for (int res : resolutions) {
                for (const auto& model : config.ladder) {
                    for (const auto& protocol : config.protocols) {
                        ExperimentCell cell;
                        cell.fraction = f;
                        cell.repeat_index = rep;
                        cell.resolution = res;
                        cell.model_name = model;
                        cell.protocol = protocol;
                        cell.seeds = derive_seeds(config.master_seed, f, rep, res, model, protocol);
                        cells.push_back(std::move(cell));
                    }
                }
            }
        }
    }
    return cells;
}

CorpusSet::CorpusSet(const CorpusManifest& base, std::span<const int> resolutions)
    : fingerprint_(corpus_fingerprint(base)) {
    if (base.empty()) throw ConfigError("corpus is empty");
    for (int r : resolutions) {
        if (by_resolution_.count(r)) continue;
        try {
            by_resolution_.emplace(r, rerender_corpus(base, r));
        } catch (const DomainError& e) {
            throw ConfigError(std::string("cannot build the corpus at resolution ") +
                              std::to_string(r) + ": " + e.what());
        }
    }
}

const CorpusManifest& CorpusSet::at(int resolution) const {
    const auto it = by_resolution_.find(resolution);
    if (it == by_resolution_.end()) {
        throw ConfigError("no corpus rendered at resolution " + std::to_string(resolution));
    }
    return it->second;
}

ExperimentResult run_cell(const ExperimentCell& cell, const CorpusSet& corpora,
                          const ExperimentConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    const auto ladder = size_ladder(cell.resolution);
    if (!ladder.contains(cell.model_name)) {
        throw ConfigError("unknown model size '" + cell.model_name + "'");
    }
    const MaeModelConfig model = ladder.at(cell.model_name).config;
    const CorpusManifest& manifest = corpora.at(cell.resolution);

    ExperimentResult result;
    result.cell = cell;
    const CorpusManifest subset =
        sample_subset(manifest, {cell.fraction, cell.seeds.subset, cell.repeat_index});
    result.i_thousands = static_cast<double>(subset.size()) / 1000.0;

    try {
        TrainSchedule schedule;
        schedule.epochs = config.epochs;
        schedule.batch_size = config.batch_size;
        schedule.learning_rate = config.learning_rate;
        schedule.seed = cell.seeds.train;
        schedule.mask_ratio = config.mask_ratio;
        const auto trained =
            train(ParameterStore::initialize(model, cell.seeds.init), model, subset, schedule);
        result.final_train_loss = trained.loss_trace.empty() ? 0.0 : trained.loss_trace.back();

        EvalReport report;
        if (cell.protocol.kind == EvalKind::NoFinetune) {
            const Matrix features = extract_features(trained.params, model, manifest);
            report = linear_probe(features, manifest_labels(manifest), config.eval_split,
                                  config.ridge, cell.seeds.eval);
        } else {
            report = finetune_two_percent(trained.params, model, manifest, config.finetune,
                                          cell.seeds.eval, {config.eval_split, config.ridge, {}});
        }
        result.accuracy_pct = report.accuracy_pct;
        result.n_eval = report.n_eval;
    } catch (const TrainingDiverged&) {
        result.status = "failed:nan-loss";
    } catch (const NumericError&) {
        result.status = std::string("failed:numeric");
    }
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

std::vector<ScalingPoint> ledger_points(const RunLedger& ledger, const std::string& model,
                                        const EvalProtocol& protocol) {
    std::vector<ScalingPoint> points;
    for (const auto& r : ledger.results) {
        if (!r.ok() || !r.accuracy_pct || r.cell.model_name != model ||
            !(r.cell.protocol == protocol)) {
            continue;
        }
        points.push_back({r.i_thousands, static_cast<double>(r.cell.resolution), *r.accuracy_pct});
    }
    return points;
}

LedgerFits fit_from_ledger(const RunLedger& ledger, const FitOptions& options) {
    std::vector<std::pair<std::string, EvalProtocol>> groups;
    for (const auto& r : ledger.results) {
        const std::pair<std::string, EvalProtocol> g{r.cell.model_name, r.cell.protocol};
        if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
    }
    LedgerFits out;
    for (const auto& [model, protocol] : groups) {
        const auto points = ledger_points(ledger, model, protocol);
        const std::string name = model + "/" + protocol.name();
        if (auto defect = check_identifiability(points)) {
            out.warnings.push_back(name + ": " + *defect);
            continue;
        }
        try {
            out.fits.push_back({model, protocol, fit(points, options)});
        } catch (const NumericError& e) {
            out.warnings.push_back(name + ": " + e.what());
        }
    }
    return out;
}

std::string fits_to_json(std::span<const GroupFit> fits) {
    auto arr = ordered_json::array();
    for (const auto& g : fits) {
        ordered_json e;
        e["model"] = g.model;
        e["protocol"] = g.protocol.name();
        e["fit"] = ordered_json::parse(fit_to_json(g.fit));
        arr.push_back(std::move(e));
    }
    return arr.dump(2) + '\n';
}

std::vector<GroupFit> fits_from_json(const std::string& text) {
    std::vector<GroupFit> out;
    try {
        const auto arr = ordered_json::parse(text);
        if (!arr.is_array()) throw ConfigError("fits JSON must be an array");
        for (const auto& e : arr) {
            out.push_back({e.at("model").get<std::string>(),
                           EvalProtocol::parse(e.at("protocol").get<std::string>()),
                           fit_from_json(e.at("fit").dump())});
        }
    } catch (const ordered_json::exception& e) {
        throw ConfigError(std::string("malformed fits JSON: ") + e.what());
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
    return out;
}

void save_fits(const std::filesystem::path& path, std::span<const GroupFit> fits) {
    write_text_file(path, fits_to_json(fits));
}

std::vector<GroupFit> load_fits(const std::filesystem::path& path) {
    return fits_from_json(read_text_file(path));
}

}  // namespace maescale
