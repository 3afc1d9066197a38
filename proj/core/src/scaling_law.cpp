#include "maescale/scaling_law.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "maescale/error.hpp"
#include "text_format.hpp"
#include <json.hpp>

namespace maescale {

namespace {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<Vec3, 3>;

struct LogPoint {
    double li;
    double lp;
    double y;
};

std::vector<LogPoint> to_logs(std::span<const ScalingPoint> points) {
    std::vector<LogPoint> out;
    out.reserve(points.size());
    for (const auto& p : points) {
        if (!(p.i > 0.0) || !(p.ppi > 0.0) || !std::isfinite(p.i) || !std::isfinite(p.ppi)) {
            throw DomainError("scaling points need finite i > 0 and ppi > 0");
        }
        if (!std::isfinite(p.accuracy_pct)) throw DomainError("scaling point accuracy is not finite");
        out.push_back({std::log(p.i), std::log(p.ppi), p.accuracy_pct});
    }
    return out;
}

double sse(const Vec3& x, const std::vector<LogPoint>& pts) {
    double s = 0.0;
    for (const auto& p : pts) {
        const double r = x[0] * (p.li + x[1]) * (p.lp + x[2]) - p.y;
        s += r * r;
    }
    return s;
}

// Solves a 3x3 system by Gaussian elimination with partial pivoting.
bool solve3(Mat3 m, Vec3 rhs, Vec3& out) {
    for (int col = 0; col < 3; ++col) {
        int piv = col;
        for (int r = col + 1; r < 3; ++r) {
            if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
        }
        if (!(std::abs(m[piv][col]) > 0.0)) return false;
        std::swap(m[col], m[piv]);
        std::swap(rhs[col], rhs[piv]);
        for (int r = col + 1; r < 3; ++r) {
            const double f = m[r][col] / m[col][col];
            for (int k = col; k < 3; ++k) m[r][k] -= f * m[col][k];
            rhs[r] -= f * rhs[col];
        }
    }
    for (int r = 2; r >= 0; --r) {
        double s = rhs[r];
        for (int k = r + 1; k < 3; ++k) s -= m[r][k] * out[k];
        out[r] = s / m[r][r];
    }
    return std::isfinite(out[0]) && std::isfinite(out[1]) && std::isfinite(out[2]);
}

enum class RunStatus { Converged, Diverged, Exhausted };

struct Run {
    Vec3 x;
    double obj;
    RunStatus status;
};

Run levenberg_marquardt(Vec3 x, const std::vector<LogPoint>& pts, const FitOptions& opt) {
    double lambda = 1e-3;
    double obj = sse(x, pts);
    for (int it = 0; it < opt.max_iterations; ++it) {
        Mat3 jtj{};
        Vec3 jtr{};
        for (const auto& p : pts) {
            const double u = p.li + x[1];
            const double v = p.lp + x[2];
            const double r = x[0] * u * v - p.y;
            const Vec3 j{u * v, x[0] * v, x[0] * u};
            for (int a = 0; a < 3; ++a) {
                jtr[a] += j[a] * r;
                for (int b = 0; b < 3; ++b) jtj[a][b] += j[a] * j[b];
            }
        }
        double diag_max = 0.0;
        for (int a = 0; a < 3; ++a) diag_max = std::max(diag_max, jtj[a][a]);
        const double floor = 1e-12 * std::max(diag_max, 1e-300);

        Mat3 damped = jtj;
        for (int a = 0; a < 3; ++a) damped[a][a] += lambda * std::max(jtj[a][a], floor);
        Vec3 step{};
        if (!solve3(damped, {-jtr[0], -jtr[1], -jtr[2]}, step)) {
            lambda *= 10.0;
            if (lambda > 1e20) return {x, obj, RunStatus::Exhausted};
            continue;
        }
        const double step_norm = std::sqrt(step[0] * step[0] + step[1] * step[1] + step[2] * step[2]);
        const Vec3 trial{x[0] + step[0], x[1] + step[1], x[2] + step[2]};
        const double trial_obj = sse(trial, pts);
        if (std::isfinite(trial_obj) && trial_obj <= obj) {
            x = trial;
            obj = trial_obj;
            lambda = std::max(lambda / 10.0, 1e-12);
        } else {
            lambda *= 10.0;
        }
        for (double v : x) {
            if (!std::isfinite(v) || std::abs(v) > opt.divergence_bound) {
                return {x, obj, RunStatus::Diverged};
            }
        }
        if (step_norm < opt.tol) return {x, obj, RunStatus::Converged};
        if (lambda > 1e20) return {x, obj, RunStatus::Exhausted};
    }
    return {x, obj, RunStatus::Exhausted};
}

}  // namespace

double predict(const CanonicalScalingParams& p, double i, double ppi) {
    if (!(i > 0.0) || !(ppi > 0.0)) throw DomainError("predict needs i > 0 and ppi > 0");
    return p.c * (std::log(i) + p.a) * (std::log(ppi) + p.b);
}

double predict_raw(const RawScalingParams& p, double i, double ppi) {
    if (!(i > 0.0) || !(ppi > 0.0)) throw DomainError("predict needs i > 0 and ppi > 0");
    return (p.alpha_i * std::log(i) + p.beta_i) * (p.alpha_ppi * std::log(ppi) + p.beta_ppi);
}

double clamp_pct(double pct) { return std::min(std::max(pct, 0.0), 100.0); }

CanonicalScalingParams canonicalize(const RawScalingParams& raw) {
    if (raw.alpha_i == 0.0 || raw.alpha_ppi == 0.0) {
        throw DomainError("canonical form needs nonzero alpha_i and alpha_ppi");
    }
    return {raw.alpha_i * raw.alpha_ppi, raw.beta_i / raw.alpha_i, raw.beta_ppi / raw.alpha_ppi};
}

RawScalingParams raw_of(const CanonicalScalingParams& p) {
    return {p.c, p.c * p.a, 1.0, p.b};
}

std::optional<std::string> check_identifiability(std::span<const ScalingPoint> points) {
    if (points.size() < 3) return "need >= 3 points for 3 parameters";
    const auto varied = [&](auto field) {
        return std::any_of(points.begin(), points.end(),
                           [&](const ScalingPoint& p) { return field(p) != field(points[0]); });
    };
    if (!varied([](const ScalingPoint& p) { return p.i; })) return "i not varied";
    if (!varied([](const ScalingPoint& p) { return p.ppi; })) return "ppi not varied";
    return std::nullopt;
}

std::vector<double> residuals(const CanonicalScalingParams& p,
                              std::span<const ScalingPoint> points) {
    std::vector<double> r;
    r.reserve(points.size());
    for (const auto& pt : points) r.push_back(predict(p, pt.i, pt.ppi) - pt.accuracy_pct);
    return r;
}

double objective(const CanonicalScalingParams& p, std::span<const ScalingPoint> points) {
    double s = 0.0;
    for (double r : residuals(p, points)) s += r * r;
    return s;
}

std::vector<double> objective_half_gradient(const CanonicalScalingParams& p,
                                            std::span<const ScalingPoint> points) {
    std::vector<double> g(3, 0.0);
    for (const auto& pt : points) {
        const double u = std::log(pt.i) + p.a;
        const double v = std::log(pt.ppi) + p.b;
        const double r = p.c * u * v - pt.accuracy_pct;
        g[0] += u * v * r;
        g[1] += p.c * v * r;
        g[2] += p.c * u * r;
    }
    return g;
}

FitStarts FitStarts::coarse_grid() {
    return {{-10.0, -1.0, -0.1, 0.1, 1.0, 10.0},
            {-10.0, -5.0, -2.0, 0.0, 2.0, 5.0, 10.0},
            {-10.0, -5.0, -2.0, 0.0, 2.0, 5.0, 10.0}};
}

FitResult fit(std::span<const ScalingPoint> points, const FitOptions& options) {
    if (auto defect = check_identifiability(points)) throw IdentifiabilityError(*defect);
    if (!(options.tol > 0.0) || options.max_iterations < 1) {
        throw DomainError("fit needs tol > 0 and max_iterations >= 1");
    }
    if (options.starts.size() == 0) throw DomainError("fit needs at least one start");
    const auto pts = to_logs(points);

    std::optional<Run> best;
    std::size_t converged = 0, diverged = 0, exhausted = 0;
    for (double c0 : options.starts.c) {
        for (double a0 : options.starts.a) {
            for (double b0 : options.starts.b) {
                const Run run = levenberg_marquardt({c0, a0, b0}, pts, options);
                switch (run.status) {
                    case RunStatus::Diverged: ++diverged; continue;
                    case RunStatus::Exhausted: ++exhausted; continue;
                    case RunStatus::Converged: ++converged; break;
                }
                if (!best || run.obj < best->obj) best = run;
            }
        }
    }
    if (!best) {
        throw NumericError("no fit start converged (" + std::to_string(diverged) + " diverged, " +
                           std::to_string(exhausted) + " hit the iteration or damping limit, of " +
                           std::to_string(options.starts.size()) + " starts)");
    }
    FitResult result;
    result.params = {best->x[0], best->x[1], best->x[2]};
    result.objective = objective(result.params, points);
    result.n_points = points.size();
    result.rmse = std::sqrt(result.objective / static_cast<double>(result.n_points));
    result.start_count = converged;
    return result;
}

std::string fit_to_json(const FitResult& fit, int indent) {
    nlohmann::ordered_json j;
    j["c"] = fit.params.c;
    j["a"] = fit.params.a;
    j["b"] = fit.params.b;
    j["rmse"] = fit.rmse;
    j["n_points"] = fit.n_points;
    j["objective"] = fit.objective;
    return j.dump(indent);
}

FitResult fit_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::ordered_json::parse(text);
        FitResult f;
        f.params = {j.at("c").get<double>(), j.at("a").get<double>(), j.at("b").get<double>()};
        f.rmse = j.at("rmse").get<double>();
        f.n_points = j.at("n_points").get<std::size_t>();
        f.objective = j.at("objective").get<double>();
        return f;
    } catch (const nlohmann::ordered_json::exception& e) {
        throw ConfigError(std::string("malformed fit JSON: ") + e.what());
    }
}

void save_points(const std::filesystem::path& path, std::span<const ScalingPoint> points) {
    std::string csv = "i,ppi,accuracy_pct\n";
    for (const auto& p : points) {
        csv += format_double(p.i) + ',' + format_double(p.ppi) + ',' +
               format_double(p.accuracy_pct) + '\n';
    }
    write_text_file(path, csv);
}

std::vector<ScalingPoint> load_points(const std::filesystem::path& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("points CSV is empty");
    // Columns are located by name so wider exports load as well.
    const auto header = split_csv_line(line);
    std::array<std::size_t, 3> col{};
    const std::array<const char*, 3> names{"i", "ppi", "accuracy_pct"};
    for (std::size_t k = 0; k < 3; ++k) {
        const auto it = std::find(header.begin(), header.end(), names[k]);
        if (it == header.end()) {
            throw ConfigError(std::string("points CSV header lacks column '") + names[k] + "'");
        }
        col[k] = static_cast<std::size_t>(it - header.begin());
    }
    std::vector<ScalingPoint> points;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size()) throw ConfigError("points CSV row width mismatch");
        points.push_back({parse_double(fields[col[0]], "i"), parse_double(fields[col[1]], "ppi"),
                          parse_double(fields[col[2]], "accuracy_pct")});
    }
    return points;
}

}  // namespace maescale
