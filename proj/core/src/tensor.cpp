#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace maescale::kernels {

Matrix linear(const Matrix& x, std::span<const double> params, const LinearSlot& slot) {
    Matrix y(x.rows(), slot.out);
    const double* w = params.data() + slot.weight;
    const double* b = params.data() + slot.bias;
    for (std::size_t t = 0; t < x.rows(); ++t) {
        auto yr = y.row(t);
        std::copy(b, b + slot.out, yr.begin());
        const auto xr = x.row(t);
        for (std::size_t i = 0; i < slot.in; ++i) {
            const double xi = xr[i];
            const double* wr = w + i * slot.out;
            for (std::size_t o = 0; o < slot.out; ++o) yr[o] += xi * wr[o];
        }
    }
    return y;
}

void linear_backward(const Matrix& x, const Matrix& dy, std::span<const double> params,
                     const LinearSlot& slot, std::span<double> grad, Matrix* dx) {
    const double* w = params.data() + slot.weight;
    double* gw = grad.data() + slot.weight;
    double* gb = grad.data() + slot.bias;
    if (dx) *dx = Matrix(x.rows(), slot.in);
    for (std::size_t t = 0; t < x.rows(); ++t) {
        const auto xr = x.row(t);
        const auto dyr = dy.row(t);
        for (std::size_t o = 0; o < slot.out; ++o) gb[o] += dyr[o];
        for (std::size_t i = 0; i < slot.in; ++i) {
            const double xi = xr[i];
            double* gwr = gw + i * slot.out;
            const double* wr = w + i * slot.out;
            double acc = 0.0;
            for (std::size_t o = 0; o < slot.out; ++o) {
                gwr[o] += xi * dyr[o];
                acc += dyr[o] * wr[o];
            }
            if (dx) (*dx)(t, i) = acc;
        }
    }
}

Matrix layer_norm(const Matrix& x, std::span<const double> params, const NormSlot& slot,
                  NormTrace& trace) {
    const std::size_t n = slot.dim;
    const double* g = params.data() + slot.gain;
    const double* b = params.data() + slot.bias;
    trace.normalized = Matrix(x.rows(), n);
    trace.inv_std.assign(x.rows(), 0.0);
    Matrix y(x.rows(), n);
    for (std::size_t t = 0; t < x.rows(); ++t) {
        const auto xr = x.row(t);
        double mean = 0.0;
        for (double v : xr) mean += v;
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (double v : xr) var += (v - mean) * (v - mean);
        var /= static_cast<double>(n);
        const double inv_std = 1.0 / std::sqrt(var + kNormEpsilon);
        trace.inv_std[t] = inv_std;
        auto nr = trace.normalized.row(t);
        auto yr = y.row(t);
        for (std::size_t i = 0; i < n; ++i) {
            nr[i] = (xr[i] - mean) * inv_std;
            yr[i] = g[i] * nr[i] + b[i];
        }
    }
    return y;
}

Matrix layer_norm_backward(const Matrix& dy, std::span<const double> params,
                           const NormSlot& slot, const NormTrace& trace, std::span<double> grad) {
    const std::size_t n = slot.dim;
    const double* g = params.data() + slot.gain;
    double* gg = grad.data() + slot.gain;
    double* gb = grad.data() + slot.bias;
    Matrix dx(dy.rows(), n);
    std::vector<double> dnorm(n);
    for (std::size_t t = 0; t < dy.rows(); ++t) {
        const auto dyr = dy.row(t);
        const auto nr = trace.normalized.row(t);
        double mean_d = 0.0;
        double mean_dn = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            gg[i] += dyr[i] * nr[i];
            gb[i] += dyr[i];
            dnorm[i] = dyr[i] * g[i];
            mean_d += dnorm[i];
            mean_dn += dnorm[i] * nr[i];
        }
        mean_d /= static_cast<double>(n);
        mean_dn /= static_cast<double>(n);
        auto dxr = dx.row(t);
        for (std::size_t i = 0; i < n; ++i) {
            dxr[i] = trace.inv_std[t] * (dnorm[i] - mean_d - nr[i] * mean_dn);
        }
    }
    return dx;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_derivative(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
    const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
    return cdf + x * pdf;
}

Matrix attention(const Matrix& qkv, int heads, AttentionTrace& trace) {
    const std::size_t tokens = qkv.rows();
    const std::size_t dim = qkv.cols() / 3;
    const std::size_t head_dim = dim / static_cast<std::size_t>(heads);
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    trace.qkv = qkv;
    trace.probs.assign(static_cast<std::size_t>(heads), Matrix(tokens, tokens));
    Matrix out(tokens, dim);
    for (std::size_t h = 0; h < static_cast<std::size_t>(heads); ++h) {
        const std::size_t q0 = h * head_dim;
        const std::size_t k0 = dim + h * head_dim;
        const std::size_t v0 = 2 * dim + h * head_dim;
        Matrix& p = trace.probs[h];
        for (std::size_t t = 0; t < tokens; ++t) {
            double max_score = -INFINITY;
            for (std::size_t s = 0; s < tokens; ++s) {
                double score = 0.0;
                for (std::size_t d = 0; d < head_dim; ++d) {
                    score += qkv(t, q0 + d) * qkv(s, k0 + d);
                }
                p(t, s) = score * scale;
                max_score = std::max(max_score, p(t, s));
            }
            double z = 0.0;
            for (std::size_t s = 0; s < tokens; ++s) {
                p(t, s) = std::exp(p(t, s) - max_score);
                z += p(t, s);
            }
            for (std::size_t s = 0; s < tokens; ++s) p(t, s) /= z;
            for (std::size_t s = 0; s < tokens; ++s) {
                const double ps = p(t, s);
                for (std::size_t d = 0; d < head_dim; ++d) out(t, q0 + d) += ps * qkv(s, v0 + d);
            }
        }
    }
    return out;
}

Matrix attention_backward(const Matrix& d_out, int heads, const AttentionTrace& trace) {
    const Matrix& qkv = trace.qkv;
    const std::size_t tokens = qkv.rows();
    const std::size_t dim = qkv.cols() / 3;
    const std::size_t head_dim = dim / static_cast<std::size_t>(heads);
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    Matrix d_qkv(tokens, 3 * dim);
    std::vector<double> d_prob(tokens);
    for (std::size_t h = 0; h < static_cast<std::size_t>(heads); ++h) {
        const std::size_t q0 = h * head_dim;
        const std::size_t k0 = dim + h * head_dim;
        const std::size_t v0 = 2 * dim + h * head_dim;
        const Matrix& p = trace.probs[h];
        for (std::size_t t = 0; t < tokens; ++t) {
            double weighted = 0.0;
            for (std::size_t s = 0; s < tokens; ++s) {
                double acc = 0.0;
                for (std::size_t d = 0; d < head_dim; ++d) {
                    acc += d_out(t, q0 + d) * qkv(s, v0 + d);
                    d_qkv(s, v0 + d) += p(t, s) * d_out(t, q0 + d);
                }
                d_prob[s] = acc;
                weighted += p(t, s) * acc;
            }
            for (std::size_t s = 0; s < tokens; ++s) {
                const double d_score = p(t, s) * (d_prob[s] - weighted) * scale;
                if (d_score == 0.0) continue;
                for (std::size_t d = 0; d < head_dim; ++d) {
                    d_qkv(t, q0 + d) += d_score * qkv(s, k0 + d);
                    d_qkv(s, k0 + d) += d_score * qkv(t, q0 + d);
                }
            }
        }
    }
    return d_qkv;
}

void add_in_place(Matrix& acc, const Matrix& delta) {
    auto a = acc.data();
    const auto d = delta.data();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += d[i];
}

}  // namespace maescale::kernels
