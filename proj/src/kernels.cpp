// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0

#include "colld/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace colld::kernels {

namespace {
std::atomic<bool> g_parallel{true};

template <class T>
inline T a_at(std::span<const T> a, const GemmDims& d, std::size_t i, std::size_t p) {
    return d.trans_a ? a[p * d.m + i] : a[i * d.k + p];
}

template <class T>
inline T b_at(std::span<const T> b, const GemmDims& d, std::size_t p, std::size_t j) {
    return d.trans_b ? b[j * d.k + p] : b[p * d.n + j];
}
} // namespace

void set_parallel(bool enabled) { g_parallel.store(enabled); }
bool parallel_enabled() { return g_parallel.load(); }

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

namespace serial {

template <class T>
void gemm(std::span<const T> a, std::span<const T> b, std::span<T> c, const GemmDims& d) {
    for (std::size_t i = 0; i < d.m; ++i) {
        for (std::size_t j = 0; j < d.n; ++j) {
            T acc = T(0);
            for (std::size_t p = 0; p < d.k; ++p) acc += a_at(a, d, i, p) * b_at(b, d, p, j);
            T& out = c[i * d.n + j];
            out = d.accumulate ? out + acc : acc;
        }
    }
}

template <class T>
void softmax_rows(std::span<const T> x, std::span<T> y, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = x.data() + r * cols;
        T* yr = y.data() + r * cols;
        T mx = xr[0];
        for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
        T sum = T(0);
        for (std::size_t j = 0; j < cols; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            sum += yr[j];
        }
        for (std::size_t j = 0; j < cols; ++j) yr[j] /= sum;
    }
}

template <class T>
void layer_norm_rows(std::span<const T> x, std::span<const T> gamma, std::span<const T> beta,
                     std::span<T> y, std::size_t rows, std::size_t cols, T eps) {
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = x.data() + r * cols;
        T* yr = y.data() + r * cols;
        T mean = T(0);
        for (std::size_t j = 0; j < cols; ++j) mean += xr[j];
        mean /= T(cols);
        T var = T(0);
        for (std::size_t j = 0; j < cols; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= T(cols);
        const T inv = T(1) / std::sqrt(var + eps);
        for (std::size_t j = 0; j < cols; ++j) yr[j] = (xr[j] - mean) * inv * gamma[j] + beta[j];
    }
}

template <class T>
void depthwise_conv1d(std::span<const T> x, std::span<const T> w, std::span<const T> bias,
                      std::span<T> y, std::size_t frames, std::size_t channels, std::size_t kernel) {
    const auto pad = static_cast<std::ptrdiff_t>(kernel / 2);
    const auto n = static_cast<std::ptrdiff_t>(frames);
    for (std::ptrdiff_t t = 0; t < n; ++t) {
        for (std::size_t c = 0; c < channels; ++c) {
            T acc = T(0);
            for (std::size_t j = 0; j < kernel; ++j) {
                const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(j) - pad;
                if (src < 0 || src >= n) continue;
                acc += w[j * channels + c] * x[static_cast<std::size_t>(src) * channels + c];
            }
            y[static_cast<std::size_t>(t) * channels + c] = acc + bias[c];
        }
    }
}

} // namespace serial

namespace omp {

template <class T>
void gemm(std::span<const T> a, std::span<const T> b, std::span<T> c, const GemmDims& d) {
    const auto m = static_cast<std::int64_t>(d.m);
#pragma omp parallel
    {
        std::vector<T> acc(d.n);
#pragma omp for schedule(static)
        for (std::int64_t ii = 0; ii < m; ++ii) {
            const auto i = static_cast<std::size_t>(ii);
            if (d.trans_b) {
                // B stored [n,k]: each output is a contiguous dot product.
                for (std::size_t j = 0; j < d.n; ++j) {
                    const T* bj = b.data() + j * d.k;
                    T s = T(0);
                    for (std::size_t p = 0; p < d.k; ++p) s += a_at(a, d, i, p) * bj[p];
                    acc[j] = s;
                }
            } else {
                std::fill(acc.begin(), acc.end(), T(0));
                for (std::size_t p = 0; p < d.k; ++p) {
                    const T aip = a_at(a, d, i, p);
                    const T* bp = b.data() + p * d.n;
                    for (std::size_t j = 0; j < d.n; ++j) acc[j] += aip * bp[j];
                }
            }
            T* ci = c.data() + i * d.n;
            if (d.accumulate) {
                for (std::size_t j = 0; j < d.n; ++j) ci[j] = ci[j] + acc[j];
            } else {
                std::copy(acc.begin(), acc.end(), ci);
            }
        }
    }
}

template <class T>
void softmax_rows(std::span<const T> x, std::span<T> y, std::size_t rows, std::size_t cols) {
    const auto n = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static)
    for (std::int64_t rr = 0; rr < n; ++rr) {
        const auto r = static_cast<std::size_t>(rr);
        serial::softmax_rows<T>(x.subspan(r * cols, cols), y.subspan(r * cols, cols), 1, cols);
    }
}

template <class T>
void layer_norm_rows(std::span<const T> x, std::span<const T> gamma, std::span<const T> beta,
                     std::span<T> y, std::size_t rows, std::size_t cols, T eps) {
    const auto n = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static)
    for (std::int64_t rr = 0; rr < n; ++rr) {
        const auto r = static_cast<std::size_t>(rr);
        serial::layer_norm_rows<T>(x.subspan(r * cols, cols), gamma, beta, y.subspan(r * cols, cols), 1,
                                   cols, eps);
    }
}

template <class T>
void depthwise_conv1d(std::span<const T> x, std::span<const T> w, std::span<const T> bias,
                      std::span<T> y, std::size_t frames, std::size_t channels, std::size_t kernel) {
    const auto pad = static_cast<std::ptrdiff_t>(kernel / 2);
    const auto n = static_cast<std::ptrdiff_t>(frames);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t t = 0; t < n; ++t) {
        T* yt = y.data() + static_cast<std::size_t>(t) * channels;
        for (std::size_t c = 0; c < channels; ++c) {
            T acc = T(0);
            for (std::size_t j = 0; j < kernel; ++j) {
                const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(j) - pad;
                if (src < 0 || src >= n) continue;
                acc += w[j * channels + c] * x[static_cast<std::size_t>(src) * channels + c];
            }
            yt[c] = acc + bias[c];
        }
    }
}

} // namespace omp

#define COLLD_INSTANTIATE_KERNELS(NS, T)                                                              \
    template void NS::gemm<T>(std::span<const T>, std::span<const T>, std::span<T>, const GemmDims&); \
    template void NS::softmax_rows<T>(std::span<const T>, std::span<T>, std::size_t, std::size_t);    \
    template void NS::layer_norm_rows<T>(std::span<const T>, std::span<const T>, std::span<const T>,  \
                                         std::span<T>, std::size_t, std::size_t, T);                  \
    template void NS::depthwise_conv1d<T>(std::span<const T>, std::span<const T>, std::span<const T>, \
                                          std::span<T>, std::size_t, std::size_t, std::size_t);

COLLD_INSTANTIATE_KERNELS(serial, float)
COLLD_INSTANTIATE_KERNELS(serial, double)
COLLD_INSTANTIATE_KERNELS(omp, float)
COLLD_INSTANTIATE_KERNELS(omp, double)

#undef COLLD_INSTANTIATE_KERNELS

} // namespace colld::kernels
