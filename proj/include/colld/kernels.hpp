// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense compute kernels. Every kernel has a plain serial reference in
// `kernels::serial` and an OpenMP version in `kernels::omp`. The OpenMP
// versions split work by output row only and keep the per-element reduction
// order of the reference, so both produce bitwise-identical results for any
// thread count.

#pragma once

#include <cstddef>
#include <span>

namespace colld::kernels {

/// Global switch for the OpenMP kernels. Off means every dispatch goes to the
/// serial reference.
void set_parallel(bool enabled);
bool parallel_enabled();
int max_threads();

/// C[m,n] = (accumulate ? C : 0) + op(A) * op(B), with op(A) of shape [m,k]
/// and op(B) of shape [k,n]. Storage is row-major; a transposed operand is
/// stored with its dimensions swapped.
struct GemmDims {
    std::size_t m = 0;
    std::size_t n = 0;
    std::size_t k = 0;
    bool trans_a = false;
    bool trans_b = false;
    bool accumulate = false;
};

namespace serial {
template <class T>
void gemm(std::span<const T> a, std::span<const T> b, std::span<T> c, const GemmDims& d);
template <class T>
void softmax_rows(std::span<const T> x, std::span<T> y, std::size_t rows, std::size_t cols);
template <class T>
void layer_norm_rows(std::span<const T> x, std::span<const T> gamma, std::span<const T> beta,
                     std::span<T> y, std::size_t rows, std::size_t cols, T eps);
template <class T>
void depthwise_conv1d(std::span<const T> x, std::span<const T> w, std::span<const T> bias,
                      std::span<T> y, std::size_t frames, std::size_t channels, std::size_t kernel);
} // namespace serial

namespace omp {
template <class T>
void gemm(std::span<const T> a, std::span<const T> b, std::span<T> c, const GemmDims& d);
template <class T>
void softmax_rows(std::span<const T> x, std::span<T> y, std::size_t rows, std::size_t cols);
template <class T>
void layer_norm_rows(std::span<const T> x, std::span<const T> gamma, std::span<const T> beta,
                     std::span<T> y, std::size_t rows, std::size_t cols, T eps);
template <class T>
void depthwise_conv1d(std::span<const T> x, std::span<const T> w, std::span<const T> bias,
                      std::span<T> y, std::size_t frames, std::size_t channels, std::size_t kernel);
} // namespace omp

template <class T>
void gemm(std::span<const T> a, std::span<const T> b, std::span<T> c, const GemmDims& d) {
    parallel_enabled() ? omp::gemm<T>(a, b, c, d) : serial::gemm<T>(a, b, c, d);
}

template <class T>
void softmax_rows(std::span<const T> x, std::span<T> y, std::size_t rows, std::size_t cols) {
    parallel_enabled() ? omp::softmax_rows<T>(x, y, rows, cols)
                       : serial::softmax_rows<T>(x, y, rows, cols);
}

template <class T>
void layer_norm_rows(std::span<const T> x, std::span<const T> gamma, std::span<const T> beta,
                     std::span<T> y, std::size_t rows, std::size_t cols, T eps) {
    parallel_enabled() ? omp::layer_norm_rows<T>(x, gamma, beta, y, rows, cols, eps)
                       : serial::layer_norm_rows<T>(x, gamma, beta, y, rows, cols, eps);
}

template <class T>
void depthwise_conv1d(std::span<const T> x, std::span<const T> w, std::span<const T> bias,
                      std::span<T> y, std::size_t frames, std::size_t channels, std::size_t kernel) {
    parallel_enabled() ? omp::depthwise_conv1d<T>(x, w, bias, y, frames, channels, kernel)
                       : serial::depthwise_conv1d<T>(x, w, bias, y, frames, channels, kernel);
}

} // namespace colld::kernels
