#pragma once

// Accuracy as a product of two terms affine in log data amount and log
// resolution:
//
//   accuracy = (alpha_i * ln i + beta_i) * (alpha_ppi * ln ppi + beta_ppi)
//            = c * (ln i + a) * (ln ppi + b)
//
// The four-parameter raw form has a one-dimensional gauge (scale one factor
// by t, the other by 1/t). Fitting works on the canonical (c, a, b) form.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace maescale {

struct RawScalingParams {
    double alpha_i = 1.0;
    double beta_i = 0.0;
    double alpha_ppi = 1.0;
    double beta_ppi = 0.0;
};

struct CanonicalScalingParams {
    double c = 1.0;
    double a = 0.0;
    double b = 0.0;

    friend bool operator==(const CanonicalScalingParams&, const CanonicalScalingParams&) = default;
};

// i in thousands of images, ppi the resolution scalar, accuracy in percent.
struct ScalingPoint {
    double i = 1.0;
    double ppi = 1.0;
    double accuracy_pct = 0.0;
};

struct FitResult {
    CanonicalScalingParams params;
    double rmse = 0.0;
    std::size_t n_points = 0;
    std::size_t start_count = 0;  // starts that converged
    double objective = 0.0;       // sum of squared residuals
};

// Unclamped. Throws DomainError unless i > 0 and ppi > 0.
double predict(const CanonicalScalingParams& p, double i, double ppi);
double predict_raw(const RawScalingParams& p, double i, double ppi);

// Display-only view in [0, 100].
double clamp_pct(double pct);

// Throws DomainError if either alpha is zero.
CanonicalScalingParams canonicalize(const RawScalingParams& raw);
// Gauge alpha_ppi = 1.
RawScalingParams raw_of(const CanonicalScalingParams& p);

// Empty when the points can determine (c, a, b); otherwise names the defect.
std::optional<std::string> check_identifiability(std::span<const ScalingPoint> points);

// predict - observed, one entry per point.
std::vector<double> residuals(const CanonicalScalingParams& p, std::span<const ScalingPoint> points);
double objective(const CanonicalScalingParams& p, std::span<const ScalingPoint> points);
// J^T r, the half-gradient of the objective.
std::vector<double> objective_half_gradient(const CanonicalScalingParams& p,
                                            std::span<const ScalingPoint> points);

struct FitStarts {
    std::vector<double> c;
    std::vector<double> a;
    std::vector<double> b;

    // c in +-{0.1, 1, 10}; a, b in {-10, -5, -2, 0, 2, 5, 10}.
    static FitStarts coarse_grid();
    std::size_t size() const noexcept { return c.size() * a.size() * b.size(); }
};

struct FitOptions {
    FitStarts starts = FitStarts::coarse_grid();
    double tol = 1e-10;           // step-norm convergence threshold
    int max_iterations = 2000;    // per start
    double divergence_bound = 1e6;
};

// Levenberg-Marquardt from every start; returns the lowest-objective converged
// run, ties to the earlier start. Throws IdentifiabilityError on degenerate
// data, DomainError on nonpositive i/ppi or non-finite values, and
// NumericError if no start converges.
FitResult fit(std::span<const ScalingPoint> points, const FitOptions& options = {});

// {c, a, b, rmse, n_points, objective}
std::string fit_to_json(const FitResult& fit, int indent = -1);
FitResult fit_from_json(const std::string& text);

// CSV with header "i,ppi,accuracy_pct".
void save_points(const std::filesystem::path& path, std::span<const ScalingPoint> points);
std::vector<ScalingPoint> load_points(const std::filesystem::path& path);

}  // namespace maescale
