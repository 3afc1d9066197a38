#pragma once

// Forward/backward kernels for the transformer. Backward functions accumulate
// parameter gradients into a flat array laid out like the parameter store and
// return (or accumulate) the input gradient.

#include <cstddef>
#include <span>
#include <vector>

#include "maescale/matrix.hpp"

namespace maescale::kernels {

struct LinearSlot {
    std::size_t weight = 0;  // in x out, row-major
    std::size_t bias = 0;    // out
    std::size_t in = 0;
    std::size_t out = 0;
};

struct NormSlot {
    std::size_t gain = 0;
    std::size_t bias = 0;
    std::size_t dim = 0;
};

inline constexpr double kNormEpsilon = 1e-5;

Matrix linear(const Matrix& x, std::span<const double> params, const LinearSlot& slot);

// dx is optional (nullptr skips it).
void linear_backward(const Matrix& x, const Matrix& dy, std::span<const double> params,
                     const LinearSlot& slot, std::span<double> grad, Matrix* dx);

struct NormTrace {
    Matrix normalized;
    std::vector<double> inv_std;
};

Matrix layer_norm(const Matrix& x, std::span<const double> params, const NormSlot& slot,
                  NormTrace& trace);
Matrix layer_norm_backward(const Matrix& dy, std::span<const double> params,
                           const NormSlot& slot, const NormTrace& trace, std::span<double> grad);

double gelu(double x);
double gelu_derivative(double x);

// Multi-head scaled dot-product self-attention over packed [Q | K | V] columns.
struct AttentionTrace {
    Matrix qkv;
    std::vector<Matrix> probs;  // one tokens x tokens matrix per head
};

Matrix attention(const Matrix& qkv, int heads, AttentionTrace& trace);
Matrix attention_backward(const Matrix& d_out, int heads, const AttentionTrace& trace);

void add_in_place(Matrix& acc, const Matrix& delta);

}  // namespace maescale::kernels
