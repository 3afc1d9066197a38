#pragma once

// Small independent reference implementations used as test oracles.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <vector>

namespace oracle {

// Hamilton apportionment over integer weights, exact integer arithmetic.
inline std::vector<std::size_t> hamilton(std::size_t seats, const std::vector<std::size_t>& w) {
    const std::size_t sum = std::accumulate(w.begin(), w.end(), std::size_t{0});
    std::vector<std::size_t> out(w.size()), rem(w.size());
    std::size_t given = 0;
    for (std::size_t k = 0; k < w.size(); ++k) {
        out[k] = seats * w[k] / sum;
        rem[k] = seats * w[k] % sum;
        given += out[k];
    }
    std::vector<std::size_t> order(w.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t p, std::size_t q) { return rem[p] > rem[q]; });
    for (std::size_t k = 0; given < seats; ++k, ++given) ++out[order[k]];
    return out;
}

// Dense Gaussian elimination with partial pivoting; b has `cols` right-hand sides.
inline std::vector<double> gauss_solve(std::vector<double> a, std::vector<double> b, std::size_t n,
                                       std::size_t cols) {
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t p = c;
        for (std::size_t r = c + 1; r < n; ++r) {
            if (std::abs(a[r * n + c]) > std::abs(a[p * n + c])) p = r;
        }
        for (std::size_t k = 0; k < n; ++k) std::swap(a[c * n + k], a[p * n + k]);
        for (std::size_t k = 0; k < cols; ++k) std::swap(b[c * cols + k], b[p * cols + k]);
        for (std::size_t r = c + 1; r < n; ++r) {
            const double f = a[r * n + c] / a[c * n + c];
            for (std::size_t k = c; k < n; ++k) a[r * n + k] -= f * a[c * n + k];
            for (std::size_t k = 0; k < cols; ++k) b[r * cols + k] -= f * b[c * cols + k];
        }
    }
    std::vector<double> x(n * cols);
    for (std::size_t k = 0; k < cols; ++k) {
        for (std::size_t r = n; r-- > 0;) {
            double s = b[r * cols + k];
            for (std::size_t j = r + 1; j < n; ++j) s -= a[r * n + j] * x[j * cols + k];
            x[r * cols + k] = s / a[r * n + r];
        }
    }
    return x;
}

// Ridge least squares onto one-hot targets with an appended (penalised)
// intercept; returns argmax predictions for `test` rows.
inline std::vector<int> ridge_predict(const std::vector<std::vector<double>>& x,
                                      const std::vector<int>& y, const std::vector<std::size_t>& train,
                                      const std::vector<std::size_t>& test, int k, double ridge) {
    const std::size_t d = x[0].size() + 1;
    std::vector<double> a(d * d, 0.0), b(d * static_cast<std::size_t>(k), 0.0);
    auto feat = [&](std::size_t r, std::size_t j) { return j + 1 == d ? 1.0 : x[r][j]; };
    for (std::size_t r : train) {
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < d; ++j) a[i * d + j] += feat(r, i) * feat(r, j);
            b[i * static_cast<std::size_t>(k) + static_cast<std::size_t>(y[r])] += feat(r, i);
        }
    }
    for (std::size_t i = 0; i < d; ++i) a[i * d + i] += ridge;
    const auto w = gauss_solve(a, b, d, static_cast<std::size_t>(k));
    std::vector<int> pred;
    for (std::size_t r : test) {
        int best = 0;
        double best_score = -INFINITY;
        for (int c = 0; c < k; ++c) {
            double s = 0.0;
            for (std::size_t i = 0; i < d; ++i) s += feat(r, i) * w[i * static_cast<std::size_t>(k) + static_cast<std::size_t>(c)];
            if (s > best_score) {
                best_score = s;
                best = c;
            }
        }
        pred.push_back(best);
    }
    return pred;
}

// Central differences of f over every coordinate of x.
inline std::vector<double> central_differences(std::vector<double> x,
                                               const std::function<double(const std::vector<double>&)>& f,
                                               double h) {
    std::vector<double> g(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double keep = x[k];
        x[k] = keep + h;
        const double up = f(x);
        x[k] = keep - h;
        const double down = f(x);
        x[k] = keep;
        g[k] = (up - down) / (2.0 * h);
    }
    return g;
}

inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        diff += (a[k] - b[k]) * (a[k] - b[k]);
        na += a[k] * a[k];
        nb += b[k] * b[k];
    }
    return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-300});
}

}  // namespace oracle
