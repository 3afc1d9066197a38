#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "maescale/error.hpp"
#include "maescale/harness.hpp"
#include "maescale/report.hpp"

using namespace maescale;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
    auto p = fs::temp_directory_path() / ("maescale_test_" + name);
    fs::remove_all(p);
    return p;
}

ExperimentConfig small_config() {
    ExperimentConfig c;
    c.fractions = {1.0, 0.5};
    c.resolutions = {8, 12};
    c.ladder = {"TOY-A"};
    c.repeats = 2;
    c.master_seed = 11;
    c.epochs = 1;
    c.batch_size = 8;
    return c;
}

const CorpusManifest& small_corpus() {
    static const auto m = build_synthetic_corpus(160, reference_mixture(), 4, 8, 3);
    return m;
}

std::vector<std::string> read_lines(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

// The ledger text with every wall-clock field zeroed.
std::vector<std::string> without_wall_clock(const fs::path& p) {
    auto lines = read_lines(p);
    for (auto& line : lines) {
        auto j = nlohmann::ordered_json::parse(line);
        if (j.contains("wall_seconds")) j["wall_seconds"] = 0;
        line = j.dump();
    }
    return lines;
}

ExperimentResult synthetic_result(const std::string& model, double i, int res, double acc) {
    ExperimentResult r;
    r.cell.model_name = model;
    r.cell.resolution = res;
    r.cell.fraction = i;
    r.i_thousands = i;
    r.accuracy_pct = acc;
    r.n_eval = 10;
    return r;
}

}  // namespace

TEST(Grid, DefaultConfigHas156Cells) {
    const auto cells = design_grid(ExperimentConfig{});
    EXPECT_EQ(cells.size(), 156u);
    std::set<std::string> keys;
    for (const auto& c : cells) keys.insert(c.key());
    EXPECT_EQ(keys.size(), 156u);
    EXPECT_EQ(cells.front().fraction, 1.0);
    EXPECT_EQ(cells.back().fraction, 0.05);
}

TEST(Grid, SingleFullFractionAndProtocolPairGivesTwoCells) {
    ExperimentConfig c;
    c.fractions = {1.0};
    c.resolutions = {16};
    c.ladder = {"TOY-A"};
    c.protocols = {EvalProtocol::no_finetune(), EvalProtocol::finetune_two_percent()};
    const auto cells = design_grid(c);
    ASSERT_EQ(cells.size(), 2u);
    EXPECT_EQ(cells[0].protocol, EvalProtocol::no_finetune());
    EXPECT_EQ(cells[0].seeds.init, cells[1].seeds.init);
    EXPECT_NE(cells[0].seeds.eval, cells[1].seeds.eval);
}

TEST(Grid, SeedsAreDeterministicAndJsonSafe) {
    const auto a = design_grid(ExperimentConfig{});
    const auto b = design_grid(ExperimentConfig{});
    EXPECT_EQ(a, b);
    for (const auto& c : a) {
        for (std::uint64_t s : {c.seeds.subset, c.seeds.init, c.seeds.train, c.seeds.eval}) {
            EXPECT_LT(s, std::uint64_t{1} << 53);
        }
    }
    // Every cell shares the held-out split of its protocol.
    for (const auto& c : a) EXPECT_EQ(c.seeds.eval, a.front().seeds.eval);
}

TEST(Config, RoundTripsAndHashesCanonically) {
    const auto c = small_config();
    const auto back = ExperimentConfig::from_json(c.to_json());
    EXPECT_EQ(back.to_json(), c.to_json());
    EXPECT_EQ(back.hash(), c.hash());
    auto other = c;
    other.master_seed = 12;
    EXPECT_NE(other.hash(), c.hash());
}

TEST(Config, InvalidValuesAreConfigErrors) {
    auto bad = small_config();
    bad.fractions = {0.0};
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = small_config();
    bad.resolutions = {10};
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = small_config();
    bad.ladder = {"TOY-Z"};
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = small_config();
    bad.batch_size = 0;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = small_config();
    bad.resolutions = {8, 8};
    EXPECT_THROW(bad.validate(), ConfigError);
    EXPECT_THROW(ExperimentConfig::from_json("{\"fractions\":[1.0]}"), ConfigError);
    EXPECT_THROW(ExperimentConfig::from_json("not json"), ConfigError);
}

TEST(RunCell, RecordsScaleAndIsDeterministic) {
    const auto config = small_config();
    const CorpusSet corpora(small_corpus(), config.resolutions);
    const auto cells = design_grid(config);
    const auto& half = cells.back();
    ASSERT_EQ(half.fraction, 0.5);
    const auto a = run_cell(half, corpora, config);
    const auto b = run_cell(half, corpora, config);
    EXPECT_TRUE(a.ok()) << a.status;
    EXPECT_DOUBLE_EQ(a.i_thousands, 0.08);
    EXPECT_EQ(a.accuracy_pct, b.accuracy_pct);
    EXPECT_EQ(a.final_train_loss, b.final_train_loss);
    EXPECT_EQ(a.n_eval, 32u);
    EXPECT_GE(*a.accuracy_pct, 0.0);
    EXPECT_LE(*a.accuracy_pct, 100.0);
}

TEST(RunCell, DivergenceIsRecordedNotThrown) {
    auto config = small_config();
    config.learning_rate = 1e6;
    const CorpusSet corpora(small_corpus(), config.resolutions);
    const auto r = run_cell(design_grid(config).front(), corpora, config);
    EXPECT_EQ(r.status, "failed:nan-loss");
    EXPECT_FALSE(r.accuracy_pct.has_value());
    EXPECT_EQ(ledger_result_line(r).find("NaN"), std::string::npos);
}

TEST(RunGrid, WorkerCountDoesNotChangeTheLedger) {
    const auto config = small_config();
    const CorpusSet corpora(small_corpus(), config.resolutions);
    const auto cells = design_grid(config);
    const auto one = temp_path("ledger_w1.jsonl");
    const auto four = temp_path("ledger_w4.jsonl");
    run_grid(cells, corpora, config, one, {1});
    run_grid(cells, corpora, config, four, {4});
    EXPECT_EQ(read_lines(one).size(), cells.size() + 1);
    EXPECT_EQ(without_wall_clock(one), without_wall_clock(four));
    fs::remove(one);
    fs::remove(four);
}

TEST(RunGrid, ResumeCompletesExactlyTheRemainingCells) {
    const auto config = small_config();
    const CorpusSet corpora(small_corpus(), config.resolutions);
    const auto cells = design_grid(config);
    const auto full = temp_path("ledger_full.jsonl");
    const auto resumed = temp_path("ledger_resumed.jsonl");
    run_grid(cells, corpora, config, full);

    RunGridOptions interrupt;
    interrupt.stop_after = 2;
    const auto first = run_grid(cells, corpora, config, resumed, interrupt);
    EXPECT_EQ(first.executed, 2u);
    const auto second = run_grid(cells, corpora, config, resumed);
    EXPECT_EQ(second.skipped, 2u);
    EXPECT_EQ(second.executed, cells.size() - 2);
    EXPECT_EQ(without_wall_clock(full), without_wall_clock(resumed));

    const auto again = run_grid(cells, corpora, config, resumed);
    EXPECT_EQ(again.executed, 0u);
    EXPECT_EQ(again.skipped, cells.size());
    fs::remove(full);
    fs::remove(resumed);
}

TEST(RunGrid, RefusesLedgerFromAnotherCorpusOrConfig) {
    const auto config = small_config();
    const CorpusSet corpora(small_corpus(), config.resolutions);
    const auto cells = design_grid(config);
    const auto path = temp_path("ledger_mismatch.jsonl");
    RunGridOptions one_cell;
    one_cell.stop_after = 1;
    run_grid(cells, corpora, config, path, one_cell);

    const CorpusSet other(build_synthetic_corpus(160, reference_mixture(), 4, 8, 4), config.resolutions);
    EXPECT_THROW(run_grid(cells, other, config, path), ConfigError);
    auto changed = config;
    changed.master_seed = 99;
    EXPECT_THROW(run_grid(design_grid(changed), corpora, changed, path), ConfigError);
    fs::remove(path);
}

TEST(Ledger, TruncatedFinalLineIsDropped) {
    const auto config = small_config();
    const CorpusSet corpora(small_corpus(), config.resolutions);
    const auto cells = design_grid(config);
    const auto path = temp_path("ledger_tail.jsonl");
    RunGridOptions two;
    two.stop_after = 2;
    run_grid(cells, corpora, config, path, two);
    std::ofstream(path, std::ios::app) << "{\"type\":\"result\",\"cell\":{\"fra";
    const auto loaded = load_ledger(path);
    EXPECT_EQ(loaded.results.size(), 2u);
    const auto resumed = run_grid(cells, corpora, config, path);
    EXPECT_EQ(resumed.executed, cells.size() - 2);
    EXPECT_EQ(load_ledger(path).results.size(), cells.size());
    fs::remove(path);
}

TEST(Ledger, MalformedInteriorLineIsAnIoError) {
    const auto path = temp_path("ledger_bad.jsonl");
    std::ofstream(path) << ledger_header_line({1, 2, "x"}) << "\n{broken\n"
                        << ledger_result_line(synthetic_result("TOY-A", 1, 16, 50)) << "\n";
    EXPECT_THROW(load_ledger(path), IoError);
    fs::remove(path);
}

TEST(LedgerFit, RecoversPlantedLawPerModel) {
    const CanonicalScalingParams truth{1.7, 2.0, 1.2};
    RunLedger ledger;
    for (const std::string model : {"TOY-A", "TOY-B"}) {
        for (double i : {0.1, 0.5, 2.0, 10.0}) {
            for (int res : {16, 24, 32}) {
                ledger.results.push_back(synthetic_result(model, i, res, predict(truth, i, res)));
            }
        }
    }
    auto failed = synthetic_result("TOY-A", 3.0, 16, 0);
    failed.accuracy_pct.reset();
    failed.status = "failed:nan-loss";
    ledger.results.push_back(failed);

    const auto fits = fit_from_ledger(ledger);
    ASSERT_EQ(fits.fits.size(), 2u);
    EXPECT_TRUE(fits.warnings.empty());
    for (const auto& g : fits.fits) {
        EXPECT_EQ(g.fit.n_points, 12u);
        EXPECT_NEAR(g.fit.params.c, 1.7, 1.7e-6);
        EXPECT_NEAR(g.fit.params.a, 2.0, 2e-6);
        EXPECT_NEAR(g.fit.params.b, 1.2, 1.2e-6);
    }
    const auto back = fits_from_json(fits_to_json(fits.fits));
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[1].model, "TOY-B");
    EXPECT_EQ(back[1].fit.params, fits.fits[1].fit.params);
}

TEST(LedgerFit, SingleResolutionGroupIsSkippedWithReason) {
    RunLedger ledger;
    for (double i : {0.1, 0.5, 2.0}) ledger.results.push_back(synthetic_result("TOY-A", i, 16, 40 + i));
    const auto fits = fit_from_ledger(ledger);
    EXPECT_TRUE(fits.fits.empty());
    ASSERT_EQ(fits.warnings.size(), 1u);
    EXPECT_NE(fits.warnings[0].find("ppi not varied"), std::string::npos);
}

TEST(Report, OneChartPerProtocolWithOneThresholdLine) {
    RunLedger ledger;
    for (const auto& proto : {EvalProtocol::no_finetune(), EvalProtocol::finetune_two_percent()}) {
        for (double i : {0.1, 0.5, 2.0}) {
            for (int res : {16, 24}) {
                auto r = synthetic_result("TOY-A", i, res, predict({2, 3, 1}, i, res));
                r.cell.protocol = proto;
                ledger.results.push_back(r);
            }
        }
    }
    auto failed = synthetic_result("TOY-A", 1.0, 16, 0);
    failed.accuracy_pct.reset();
    failed.status = "failed:numeric";
    ledger.results.push_back(failed);

    const auto fits = fit_from_ledger(ledger).fits;
    ASSERT_EQ(fits.size(), 2u);
    const auto dir = temp_path("report");
    const auto written = emit_report(ledger, fits, builtin_table1(), dir);
    EXPECT_TRUE(fs::exists(dir / "accuracy_no_finetune.svg"));
    EXPECT_TRUE(fs::exists(dir / "accuracy_finetune_2pct.svg"));
    EXPECT_TRUE(fs::exists(dir / "scenarios.csv"));

    std::ifstream in(dir / "accuracy_no_finetune.svg");
    const std::string svg((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t thresholds = 0;
    for (auto pos = svg.find("class=\"threshold\""); pos != std::string::npos;
         pos = svg.find("class=\"threshold\"", pos + 1)) {
        ++thresholds;
    }
    EXPECT_EQ(thresholds, 1u);
    EXPECT_NE(svg.find("human level"), std::string::npos);

    EXPECT_EQ(read_lines(dir / "points.csv").size(), 1u + 12u);
    EXPECT_EQ(read_lines(dir / "scenarios.csv").size(), 1u + 3u * 2u);
    EXPECT_THROW(emit_report(ledger, {}, builtin_table1(), dir), DomainError);
    fs::remove_all(dir);
}

#ifdef MAESCALE_CLI_PATH
namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(MAESCALE_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int raw = std::system(cmd.c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

}  // namespace

TEST(Cli, ExitCodesFollowTheErrorKind) {
    const auto dir = temp_path("cli");
    fs::create_directories(dir);
    const auto points = dir / "points.csv";
    save_points(points, std::vector<ScalingPoint>{{1, 256, 10}, {2, 256, 20}, {3, 256, 30}});
    EXPECT_EQ(run_cli("fit --points " + points.string() + " --out " + (dir / "f.json").string()), 3);
    EXPECT_EQ(run_cli("fit --ledger " + (dir / "missing.jsonl").string() + " --out x.json"), 4);
    EXPECT_EQ(run_cli("no-such-command"), 2);

    save_points(points, std::vector<ScalingPoint>{{200, 256, 40}, {2400, 1280, 65}, {12600, 4096, 91}});
    EXPECT_EQ(run_cli("fit --points " + points.string() + " --out " + (dir / "f.json").string()), 0);
    EXPECT_EQ(run_cli("scenario --fits " + (dir / "f.json").string() + " --table1 --out " +
                      (dir / "s.csv").string()),
              0);
    EXPECT_EQ(read_lines(dir / "s.csv").size(), 4u);
    EXPECT_EQ(run_cli("predict --fits " + (dir / "f.json").string() + " --i -1 --ppi 16"), 2);
    fs::remove_all(dir);
}
#endif
