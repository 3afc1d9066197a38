// maescale: corpus generation, grid runs, fits, predictions, scenarios and reports.
//
// Exit codes: 0 ok, 2 config error, 3 identifiability error, 4 I/O error,
// 1 anything else.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "maescale/corpus.hpp"
#include "maescale/error.hpp"
#include "maescale/harness.hpp"
#include "maescale/report.hpp"
#include "maescale/scaling_law.hpp"
#include "maescale/scenarios.hpp"

namespace {

using namespace maescale;

constexpr int kExitConfig = 2;
constexpr int kExitIdentifiability = 3;
constexpr int kExitIo = 4;

std::vector<GroupFit> select_fits(const std::vector<GroupFit>& fits, const std::string& model,
                                  const std::string& protocol) {
    std::vector<GroupFit> out;
    for (const auto& f : fits) {
        if (!model.empty() && f.model != model) continue;
        if (!protocol.empty() && f.protocol.name() != protocol) continue;
        out.push_back(f);
    }
    if (out.empty()) throw ConfigError("no fit matches the requested model/protocol");
    return out;
}

int cmd_generate(const std::string& out, std::size_t images, int classes, int side,
                 std::uint64_t seed) {
    const auto corpus = build_synthetic_corpus(images, reference_mixture(), classes, side, seed);
    save_corpus(corpus, out);
    std::cout << "wrote " << corpus.size() << " images (" << classes << " classes, " << side << "x"
              << side << ") to " << out << '\n';
    for (const auto& [tag, n] : source_counts(corpus)) {
        std::cout << "  " << tag.to_string() << ' ' << n << '\n';
    }
    return 0;
}

int cmd_run_grid(const std::string& corpus_dir, const std::string& config_path,
                 const std::string& ledger, int workers, std::optional<std::size_t> stop_after) {
    const auto config = ExperimentConfig::load(config_path);
    const auto base = load_corpus(corpus_dir);
    const CorpusSet corpora(base, config.resolutions);
    const auto cells = design_grid(config);
    RunGridOptions options;
    options.workers = workers;
    options.stop_after = stop_after;
    std::size_t done = 0;
    options.on_result = [&](const ExperimentResult& r) {
        ++done;
        std::cerr << '[' << done << "] " << r.cell.model_name << " res=" << r.cell.resolution
                  << " f=" << r.cell.fraction << " rep=" << r.cell.repeat_index << ' '
                  << r.cell.protocol.name() << " -> "
                  << (r.ok() ? std::to_string(*r.accuracy_pct) + "%" : r.status) << " ("
                  << r.wall_seconds << " s)\n";
    };
    const auto summary = run_grid(cells, corpora, config, ledger, options);
    std::cout << cells.size() << " cells: " << summary.executed << " executed, " << summary.skipped
              << " already in ledger\n";
    return 0;
}

void report_warnings(const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) std::cerr << "warning: skipped " << w << '\n';
}

int cmd_fit(const std::string& ledger, const std::string& points, const std::string& out,
            const std::string& model, const std::string& protocol) {
    std::vector<GroupFit> fits;
    if (!points.empty()) {
        const auto pts = load_points(points);
        fits.push_back({model.empty() ? "custom" : model,
                        protocol.empty() ? EvalProtocol::no_finetune()
                                         : EvalProtocol::parse(protocol),
                        fit(pts)});
    } else {
        const auto result = fit_from_ledger(load_ledger(ledger));
        report_warnings(result.warnings);
        if (result.fits.empty()) {
            throw IdentifiabilityError("no model/protocol group in the ledger could be fitted");
        }
        fits = result.fits;
    }
    save_fits(out, fits);
    for (const auto& g : fits) {
        std::cout << g.model << ' ' << g.protocol.name() << ' ' << fit_to_json(g.fit) << '\n';
    }
    return 0;
}

int cmd_predict(const std::string& fits_path, double i, double ppi, const std::string& model,
                const std::string& protocol) {
    for (const auto& g : select_fits(load_fits(fits_path), model, protocol)) {
        const double p = predict(g.fit.params, i, ppi);
        std::cout << g.model << ' ' << g.protocol.name() << " predicted_pct=" << p
                  << " clamped_pct=" << clamp_pct(p)
                  << " human_level=" << (is_human_level(clamp_pct(p)) ? "true" : "false") << '\n';
    }
    return 0;
}

int cmd_scenario(const std::string& fits_path, bool table1, const std::string& file,
                 const std::string& out) {
    if (table1 == !file.empty()) throw ConfigError("give exactly one of --table1 or --file");
    const auto scenarios = table1 ? builtin_table1() : load_scenarios(file);
    const auto fits = load_fits(fits_path);
    const auto rows = evaluate_scenarios(fits, scenarios);
    FILE* f = std::fopen(out.c_str(), "wb");
    if (!f) throw IoError("cannot write " + out);
    const auto csv = scenario_results_to_csv(rows);
    const bool ok = std::fwrite(csv.data(), 1, csv.size(), f) == csv.size();
    if (std::fclose(f) != 0 || !ok) throw IoError("short write to " + out);
    for (const auto& r : rows) {
        std::cout << r.model << ' ' << r.protocol << " '" << r.spec.label
                  << "' predicted=" << r.outcome.predicted_pct
                  << " human_level=" << (r.outcome.human_level ? "true" : "false");
        if (r.outcome.residual_vs_expected) {
            std::cout << " residual=" << *r.outcome.residual_vs_expected;
        }
        std::cout << '\n';
    }
    return 0;
}

int cmd_report(const std::string& ledger, const std::string& fits_path, const std::string& out,
               const std::string& scenario_file) {
    const auto scenarios = scenario_file.empty() ? builtin_table1() : load_scenarios(scenario_file);
    const auto fits = load_fits(fits_path);
    for (const auto& path : emit_report(load_ledger(ledger), fits, scenarios, out)) {
        std::cout << "wrote " << path.string() << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Masked-autoencoder scaling experiments and log-log accuracy law fitting"};
    app.require_subcommand(1);
    app.set_version_flag("--version", maescale::tool_version());

    std::string out, corpus, config, ledger, fits, points, model, protocol, file, scenario_file;
    std::size_t images = 2000;
    int classes = 4, side = 16, workers = 1;
    std::uint64_t seed = 0;
    std::size_t stop_after = 0;
    double i = 0, ppi = 0;
    bool table1 = false;

    auto* gen = app.add_subcommand("generate-corpus", "Write a synthetic labelled corpus");
    gen->add_option("--out", out, "Output directory")->required();
    gen->add_option("--images", images, "Number of images")->required()->check(CLI::PositiveNumber);
    gen->add_option("--classes", classes, "Number of classes")->required()->check(CLI::PositiveNumber);
    gen->add_option("--side", side, "Image side in pixels")->required()->check(CLI::PositiveNumber);
    gen->add_option("--seed", seed, "Generator seed")->required();

    auto* run = app.add_subcommand("run-grid", "Pretrain and evaluate every grid cell");
    run->add_option("--corpus", corpus, "Corpus directory")->required();
    run->add_option("--config", config, "Experiment config JSON")->required();
    run->add_option("--ledger", ledger, "JSONL run ledger (resumed if present)")->required();
    run->add_option("--workers", workers, "Concurrent cells")->default_val(1)->check(CLI::PositiveNumber);
    auto* stop_opt = run->add_option("--stop-after", stop_after,
                                     "Stop after this many new cells (resume later)");

    auto* fit_cmd = app.add_subcommand("fit", "Fit the accuracy law per model and protocol");
    auto* ledger_opt = fit_cmd->add_option("--ledger", ledger, "Run ledger");
    auto* points_opt = fit_cmd->add_option("--points", points, "CSV with i,ppi,accuracy_pct");
    ledger_opt->excludes(points_opt);
    fit_cmd->add_option("--out", out, "Output fits JSON")->required();
    fit_cmd->add_option("--model", model, "Model label for --points");
    fit_cmd->add_option("--protocol", protocol, "Protocol label for --points");

    auto* pred = app.add_subcommand("predict", "Evaluate fitted laws at one scale point");
    pred->add_option("--fits", fits, "Fits JSON")->required();
    pred->add_option("--i", i, "Data amount in thousands of images")->required();
    pred->add_option("--ppi", ppi, "Resolution")->required();
    pred->add_option("--model", model, "Restrict to one model size");
    pred->add_option("--protocol", protocol, "Restrict to one protocol");

    auto* scen = app.add_subcommand("scenario", "Evaluate scenarios against fitted laws");
    scen->add_option("--fits", fits, "Fits JSON")->required();
    scen->add_flag("--table1", table1, "Use the built-in reference scenarios");
    scen->add_option("--file", file, "Scenario CSV");
    scen->add_option("--out", out, "Output CSV")->required();

    auto* rep = app.add_subcommand("report", "Write points, fits, plots and scenarios");
    rep->add_option("--ledger", ledger, "Run ledger")->required();
    rep->add_option("--fits", fits, "Fits JSON")->required();
    rep->add_option("--out", out, "Output directory")->required();
    rep->add_option("--scenarios", scenario_file, "Scenario CSV (default: built-in)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (*gen) return cmd_generate(out, images, classes, side, seed);
        if (*run) {
            return cmd_run_grid(corpus, config, ledger, workers,
                                *stop_opt ? std::optional<std::size_t>(stop_after) : std::nullopt);
        }
        if (*fit_cmd) {
            if (ledger.empty() == points.empty()) {
                throw ConfigError("give exactly one of --ledger or --points");
            }
            return cmd_fit(ledger, points, out, model, protocol);
        }
        if (*pred) return cmd_predict(fits, i, ppi, model, protocol);
        if (*scen) return cmd_scenario(fits, table1, file, out);
        if (*rep) return cmd_report(ledger, fits, out, scenario_file);
    } catch (const IdentifiabilityError& e) {
        std::cerr << "identifiability error: " << e.what() << '\n';
        return kExitIdentifiability;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DomainError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
