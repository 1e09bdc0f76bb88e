// Licensed under the Apache License, Version 2.0. See LICENSE in the project root.
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace kpalign {

// Row-major dense kernels sized for tiny encoder stacks. The ikj loop order
// keeps the inner loop unit-stride so -O3 vectorizes it.

// C[m,n] (+)= A[m,k] * B[k,n]
inline void gemm_nn(const double* a, const double* b, double* c, size_t m, size_t k, size_t n,
                    bool accumulate = false) {
    if (!accumulate) {
        for (size_t i = 0; i < m * n; ++i) c[i] = 0.0;
    }
    for (size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m,n] (+)= A[m,k] * B[n,k]^T
inline void gemm_nt(const double* a, const double* b, double* c, size_t m, size_t k, size_t n,
                    bool accumulate = false) {
    for (size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] = accumulate ? crow[j] + acc : acc;
        }
    }
}

// C[k,n] (+)= A[m,k]^T * B[m,n]
inline void gemm_tn(const double* a, const double* b, double* c, size_t m, size_t k, size_t n,
                    bool accumulate = false) {
    if (!accumulate) {
        for (size_t i = 0; i < k * n; ++i) c[i] = 0.0;
    }
    for (size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * n;
        for (size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            double* crow = c + p * n;
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

inline double dot(const double* a, const double* b, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

inline void axpy(double alpha, const double* x, double* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

inline double l2_norm(const double* x, size_t n) { return std::sqrt(dot(x, x, n)); }

// In-place softmax over one row; subtracts the max for stability.
inline void softmax_row(double* x, size_t n) {
    double mx = x[0];
    for (size_t i = 1; i < n; ++i) mx = x[i] > mx ? x[i] : mx;
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
        x[i] = std::exp(x[i] - mx);
        sum += x[i];
    }
    for (size_t i = 0; i < n; ++i) x[i] /= sum;
}

inline double sigmoid(double z) { return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

// Numerically stable BCE on the logit: max(z,0) - y*z + log1p(exp(-|z|)).
inline double bce_from_logit(double z, double y) {
    return (z > 0.0 ? z : 0.0) - y * z + std::log1p(std::exp(-std::fabs(z)));
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

inline double gelu_grad(double x) {
    const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * phi;
}

}  // namespace kpalign
