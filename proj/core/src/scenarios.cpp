#include "maescale/scenarios.hpp"

#include <cmath>
#include <sstream>

#include "binary_io.hpp"
#include "maescale/error.hpp"
#include "text_format.hpp"

namespace maescale {

namespace {

constexpr const char* kScenarioHeader = "label,i_thousands,ppi,param_count,expected_pct";

void check_spec(const ScenarioSpec& spec) {
    if (!(spec.i_thousands > 0.0) || !(spec.ppi > 0.0)) {
        throw DomainError("scenario '" + spec.label + "' needs i > 0 and ppi > 0");
    }
}

// Solves fixed * (ln x + offset) = threshold for x.
ThresholdSolution invert(double fixed, double offset, double threshold, const char* factor) {
    ThresholdSolution s;
    if (!(fixed > 0.0)) {
        s.diagnosis = std::string(factor) + (fixed == 0.0 ? " is zero" : " is negative") +
                      ", so the threshold cannot be reached by increasing the other axis";
        return s;
    }
    const double x = std::exp(threshold / fixed - offset);
    if (!std::isfinite(x) || !(x > 0.0)) {
        s.diagnosis = "solution overflows double precision";
        return s;
    }
    s.value = x;
    return s;
}

}  // namespace

std::vector<ScenarioSpec> builtin_table1() {
    return {
        {"Current Test", 200.0, 256.0, 300000000, 40.0},
        {"4 x Test", 2400.0, 1280.0, 9600000000, 65.0},
        {"10 x Test", 12600.0, 4096.0, 522000000000, 91.0},
    };
}

bool is_human_level(double pct) { return pct >= kHumanLevelPct; }

ScenarioOutcome evaluate_scenario(const CanonicalScalingParams& params, const ScenarioSpec& spec) {
    check_spec(spec);
    ScenarioOutcome out;
    out.predicted_pct = predict(params, spec.i_thousands, spec.ppi);
    out.clamped_pct = clamp_pct(out.predicted_pct);
    out.human_level = is_human_level(out.clamped_pct);
    if (spec.expected_pct) out.residual_vs_expected = out.predicted_pct - *spec.expected_pct;
    return out;
}

ThresholdSolution solve_threshold_ppi(const CanonicalScalingParams& params, double i,
                                      double threshold_pct) {
    if (!(i > 0.0)) throw DomainError("solve_threshold_ppi needs i > 0");
    if (!(threshold_pct > 0.0)) throw DomainError("threshold must be positive");
    return invert(params.c * (std::log(i) + params.a), params.b, threshold_pct, "c*(ln i + a)");
}

ThresholdSolution solve_threshold_i(const CanonicalScalingParams& params, double ppi,
                                    double threshold_pct) {
    if (!(ppi > 0.0)) throw DomainError("solve_threshold_i needs ppi > 0");
    if (!(threshold_pct > 0.0)) throw DomainError("threshold must be positive");
    return invert(params.c * (std::log(ppi) + params.b), params.a, threshold_pct,
                  "c*(ln ppi + b)");
}

std::string scenarios_to_csv(std::span<const ScenarioSpec> specs) {
    std::string csv = std::string(kScenarioHeader) + '\n';
    for (const auto& s : specs) {
        csv += csv_field(s.label) + ',' + format_double(s.i_thousands) + ',' +
               format_double(s.ppi) + ',' + std::to_string(s.param_count) + ',' +
               (s.expected_pct ? format_double(*s.expected_pct) : std::string()) + '\n';
    }
    return csv;
}

std::vector<ScenarioSpec> scenarios_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("scenario CSV is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kScenarioHeader) {
        throw ConfigError(std::string("scenario CSV header must be '") + kScenarioHeader + "'");
    }
    std::vector<ScenarioSpec> specs;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto f = split_csv_line(line);
        if (f.size() != 5) throw ConfigError("scenario CSV rows need 5 fields: " + line);
        ScenarioSpec s;
        s.label = f[0];
        s.i_thousands = parse_double(f[1], "i_thousands");
        s.ppi = parse_double(f[2], "ppi");
        const double count = f[3].empty() ? 0.0 : parse_double(f[3], "param_count");
        if (!(count >= 0.0) || count > 9.2e18) throw ConfigError("param_count out of range");
        s.param_count = static_cast<std::int64_t>(std::llround(count));
        if (!f[4].empty()) s.expected_pct = parse_double(f[4], "expected_pct");
        if (!(s.i_thousands > 0.0) || !(s.ppi > 0.0)) {
            throw ConfigError("scenario '" + s.label + "' needs i_thousands > 0 and ppi > 0");
        }
        specs.push_back(std::move(s));
    }
    return specs;
}

std::vector<ScenarioSpec> load_scenarios(const std::filesystem::path& path) {
    return scenarios_from_csv(read_text_file(path));
}

std::string scenario_results_to_csv(std::span<const ScenarioRow> rows) {
    std::string csv = std::string(kScenarioHeader) +
                      ",model,protocol,predicted_pct,clamped_pct,human_level,residual\n";
    for (const auto& r : rows) {
        const auto& s = r.spec;
        csv += csv_field(s.label) + ',' + format_double(s.i_thousands) + ',' +
               format_double(s.ppi) + ',' + std::to_string(s.param_count) + ',' +
               (s.expected_pct ? format_double(*s.expected_pct) : std::string()) + ',' +
               csv_field(r.model) + ',' + csv_field(r.protocol) + ',' +
               format_double(r.outcome.predicted_pct) + ',' + format_double(r.outcome.clamped_pct) +
               ',' + (r.outcome.human_level ? "true" : "false") + ',' +
               (r.outcome.residual_vs_expected ? format_double(*r.outcome.residual_vs_expected)
                                               : std::string()) +
               '\n';
    }
    return csv;
}

}  // namespace maescale
