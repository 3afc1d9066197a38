#include "maescale/report.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <set>

#include "binary_io.hpp"
#include "maescale/error.hpp"
#include "text_format.hpp"

namespace maescale {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

constexpr double kWidth = 760, kHeight = 480;
constexpr double kLeft = 70, kRight = 170, kTop = 30, kBottom = 60;

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char ch : s) {
        switch (ch) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += ch;
        }
    }
    return out;
}

std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", x);
    return buf;
}

struct Axes {
    double log_lo, log_hi;

    double x(double i) const {
        return kLeft + (std::log10(i) - log_lo) / (log_hi - log_lo) * (kWidth - kLeft - kRight);
    }
    static double y(double pct) { return kTop + (100.0 - pct) / 100.0 * (kHeight - kTop - kBottom); }
};

std::vector<std::string> protocols_in(const RunLedger& ledger, std::span<const GroupFit> fits) {
    std::vector<std::string> names;
    auto add = [&](const std::string& n) {
        if (std::find(names.begin(), names.end(), n) == names.end()) names.push_back(n);
    };
    for (const auto& r : ledger.results) {
        if (r.ok()) add(r.cell.protocol.name());
    }
    for (const auto& f : fits) add(f.protocol.name());
    return names;
}

}  // namespace

std::string render_protocol_svg(const RunLedger& ledger, std::span<const GroupFit> fits,
                                const EvalProtocol& protocol) {
    std::vector<std::string> models;
    std::set<int> resolutions;
    double lo = INFINITY, hi = -INFINITY;
    auto add_model = [&](const std::string& m) {
        if (std::find(models.begin(), models.end(), m) == models.end()) models.push_back(m);
    };
    for (const auto& r : ledger.results) {
        if (!r.ok() || !r.accuracy_pct || !(r.cell.protocol == protocol)) continue;
        add_model(r.cell.model_name);
        resolutions.insert(r.cell.resolution);
        lo = std::min(lo, r.i_thousands);
        hi = std::max(hi, r.i_thousands);
    }
    for (const auto& f : fits) {
        if (f.protocol == protocol) add_model(f.model);
    }
    if (!(lo > 0.0)) {
        lo = 0.1;
        hi = 10.0;
    }
    Axes axes{std::floor(std::log10(lo) * 10.0) / 10.0 - 0.1,
              std::ceil(std::log10(hi) * 10.0) / 10.0 + 0.1};
    if (axes.log_hi - axes.log_lo < 0.5) {
        axes.log_lo -= 0.25;
        axes.log_hi += 0.25;
    }
    const auto color = [&](const std::string& model) {
        const auto k = static_cast<std::size_t>(
            std::find(models.begin(), models.end(), model) - models.begin());
        return kPalette[k % std::size(kPalette)];
    };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
           num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + ' ' + num(kHeight) + "\">\n";
    svg += "<title>" + xml_escape(protocol.name()) + "</title>\n";
    svg += "<rect x=\"0\" y=\"0\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
           "\" fill=\"white\"/>\n";

    const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
    svg += "<g class=\"axes\" stroke=\"black\" fill=\"none\">\n";
    svg += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x1) + "\" y2=\"" +
           num(y0) + "\"/>\n";
    svg += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x0) + "\" y2=\"" +
           num(y1) + "\"/>\n</g>\n";
    svg += "<g class=\"ticks\" font-family=\"sans-serif\" font-size=\"11\">\n";
    for (int e = static_cast<int>(std::ceil(axes.log_lo)); e <= axes.log_hi; ++e) {
        const double x = axes.x(std::pow(10.0, e));
        svg += "<line x1=\"" + num(x) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x) + "\" y2=\"" +
               num(y0 + 5) + "\" stroke=\"black\"/>\n";
        svg += "<text x=\"" + num(x) + "\" y=\"" + num(y0 + 18) + "\" text-anchor=\"middle\">" +
               format_double(std::pow(10.0, e)) + "</text>\n";
    }
    for (int pct = 0; pct <= 100; pct += 20) {
        const double y = Axes::y(pct);
        svg += "<line x1=\"" + num(x0 - 5) + "\" y1=\"" + num(y) + "\" x2=\"" + num(x0) +
               "\" y2=\"" + num(y) + "\" stroke=\"black\"/>\n";
        svg += "<text x=\"" + num(x0 - 8) + "\" y=\"" + num(y + 4) + "\" text-anchor=\"end\">" +
               std::to_string(pct) + "</text>\n";
    }
    svg += "</g>\n";
    svg += "<text x=\"" + num((x0 + x1) / 2) + "\" y=\"" + num(kHeight - 15) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
           "data amount (thousands of images, log scale)</text>\n";
    svg += "<text x=\"18\" y=\"" + num((y0 + y1) / 2) + "\" transform=\"rotate(-90 18 " +
           num((y0 + y1) / 2) +
           ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
           "accuracy (%)</text>\n";

    const double y90 = Axes::y(kHumanLevelPct);
    svg += "<line class=\"threshold\" x1=\"" + num(x0) + "\" y1=\"" + num(y90) + "\" x2=\"" +
           num(x1) + "\" y2=\"" + num(y90) +
           "\" stroke=\"gray\" stroke-dasharray=\"6,4\"/>\n";
    svg += "<text class=\"threshold-label\" x=\"" + num(x1 - 4) + "\" y=\"" + num(y90 - 5) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\"gray\">"
           "human level</text>\n";

    for (const auto& f : fits) {
        if (!(f.protocol == protocol)) continue;
        for (int res : resolutions) {
            std::string pts;
            constexpr int kSamples = 64;
            for (int s = 0; s <= kSamples; ++s) {
                const double li = axes.log_lo + (axes.log_hi - axes.log_lo) * s / kSamples;
                const double i = std::pow(10.0, li);
                const double y = Axes::y(clamp_pct(predict(f.fit.params, i, res)));
                pts += num(axes.x(i)) + ',' + num(y) + ' ';
            }
            svg += "<polyline class=\"fit\" data-model=\"" + xml_escape(f.model) +
                   "\" data-ppi=\"" + std::to_string(res) + "\" fill=\"none\" stroke=\"" +
                   color(f.model) + "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
        }
    }
    for (const auto& r : ledger.results) {
        if (!r.ok() || !r.accuracy_pct || !(r.cell.protocol == protocol)) continue;
        svg += "<circle class=\"point\" cx=\"" + num(axes.x(r.i_thousands)) + "\" cy=\"" +
               num(Axes::y(clamp_pct(*r.accuracy_pct))) + "\" r=\"3\" fill=\"" +
               color(r.cell.model_name) + "\"/>\n";
    }

    svg += "<g class=\"legend\" font-family=\"sans-serif\" font-size=\"12\">\n";
    for (std::size_t k = 0; k < models.size(); ++k) {
        const double y = kTop + 10 + 20.0 * static_cast<double>(k);
        svg += "<rect x=\"" + num(x1 + 20) + "\" y=\"" + num(y - 9) +
               "\" width=\"12\" height=\"12\" fill=\"" + color(models[k]) + "\"/>\n";
        svg += "<text x=\"" + num(x1 + 38) + "\" y=\"" + num(y + 1) + "\">" +
               xml_escape(models[k]) + "</text>\n";
    }
    svg += "</g>\n</svg>\n";
    return svg;
}

std::string points_csv(const RunLedger& ledger) {
    std::string csv = "model,protocol,fraction,repeat_index,resolution,i,ppi,accuracy_pct\n";
    for (const auto& r : ledger.results) {
        if (!r.ok() || !r.accuracy_pct) continue;
        csv += csv_field(r.cell.model_name) + ',' + r.cell.protocol.name() + ',' +
               format_double(r.cell.fraction) + ',' + std::to_string(r.cell.repeat_index) + ',' +
               std::to_string(r.cell.resolution) + ',' + format_double(r.i_thousands) + ',' +
               std::to_string(r.cell.resolution) + ',' + format_double(*r.accuracy_pct) + '\n';
    }
    return csv;
}

std::vector<ScenarioRow> evaluate_scenarios(std::span<const GroupFit> fits,
                                            std::span<const ScenarioSpec> scenarios) {
    std::vector<ScenarioRow> rows;
    for (const auto& f : fits) {
        for (const auto& s : scenarios) {
            rows.push_back({f.model, f.protocol.name(), s, evaluate_scenario(f.fit.params, s)});
        }
    }
    return rows;
}

std::vector<std::filesystem::path> emit_report(const RunLedger& ledger,
                                               std::span<const GroupFit> fits,
                                               std::span<const ScenarioSpec> scenarios,
                                               const std::filesystem::path& out_dir) {
    if (fits.empty()) throw DomainError("report needs at least one fit");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create report directory " + out_dir.string() + ": " + ec.message());

    std::vector<std::filesystem::path> written;
    auto emit = [&](const std::string& name, const std::string& text) {
        const auto path = out_dir / name;
        write_text_file(path, text);
        written.push_back(path);
    };
    emit("points.csv", points_csv(ledger));
    emit("fits.json", fits_to_json(fits));
    for (const auto& name : protocols_in(ledger, fits)) {
        std::string file = "accuracy_" + name + ".svg";
        std::transform(file.begin(), file.end(), file.begin(),
                       [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
        emit(file, render_protocol_svg(ledger, fits, EvalProtocol::parse(name)));
    }
    const auto rows = evaluate_scenarios(fits, scenarios);
    emit("scenarios.csv", scenario_results_to_csv(rows));
    return written;
}

}  // namespace maescale
