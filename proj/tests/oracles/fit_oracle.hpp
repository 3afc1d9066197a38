#pragma once

// Brute-force reference for the (c, a, b) least-squares problem: a dense grid
// over a box, then compass search from the best grid nodes, clamped to the box.
// Shares no code with the library fit.

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace oracle {

struct Obs {
    double i, ppi, y;
};

struct BoxFit {
    std::array<double, 3> x{};
    double objective = 0.0;
};

inline double box_objective(const std::array<double, 3>& x, const std::vector<Obs>& obs) {
    double s = 0.0;
    for (const auto& o : obs) {
        const double r = x[0] * (std::log(o.i) + x[1]) * (std::log(o.ppi) + x[2]) - o.y;
        s += r * r;
    }
    return s;
}

inline BoxFit compass_refine(std::array<double, 3> x, const std::vector<Obs>& obs, double lo,
                             double hi, double step) {
    double f = box_objective(x, obs);
    while (step > 1e-13) {
        bool improved = false;
        for (int d = 0; d < 3; ++d) {
            for (double sign : {1.0, -1.0}) {
                auto y = x;
                y[d] = std::clamp(y[d] + sign * step, lo, hi);
                const double g = box_objective(y, obs);
                if (g < f) {
                    x = y;
                    f = g;
                    improved = true;
                }
            }
        }
        if (!improved) step *= 0.5;
    }
    return {x, f};
}

// Grid spacing `h` on every axis of [lo, hi]^3; refines the `keep` best nodes.
inline BoxFit grid_then_refine(const std::vector<Obs>& obs, double lo, double hi, double h,
                               std::size_t keep = 16) {
    std::vector<BoxFit> nodes;
    const int n = static_cast<int>(std::lround((hi - lo) / h));
    for (int ic = 0; ic <= n; ++ic) {
        for (int ia = 0; ia <= n; ++ia) {
            for (int ib = 0; ib <= n; ++ib) {
                const std::array<double, 3> x{lo + ic * h, lo + ia * h, lo + ib * h};
                const double f = box_objective(x, obs);
                if (nodes.size() < keep || f < nodes.back().objective) {
                    nodes.push_back({x, f});
                    std::sort(nodes.begin(), nodes.end(),
                              [](const BoxFit& p, const BoxFit& q) { return p.objective < q.objective; });
                    if (nodes.size() > keep) nodes.pop_back();
                }
            }
        }
    }
    BoxFit best{{}, INFINITY};
    for (const auto& node : nodes) {
        const auto r = compass_refine(node.x, obs, lo, hi, h);
        if (r.objective < best.objective) best = r;
    }
    return best;
}

}  // namespace oracle
