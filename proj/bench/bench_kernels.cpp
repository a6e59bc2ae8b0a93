// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0
//
// Serial reference vs OpenMP kernels at encoder-like sizes.

#include <benchmark/benchmark.h>

#include <vector>

#include "colld/kernels.hpp"
#include "colld/rng.hpp"

using namespace colld;

namespace {

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
    Rng rng(seed, "bench");
    std::vector<float> v(n);
    for (auto& x : v) x = float(rng.normal());
    return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
    const std::size_t n = std::size_t(state.range(0));
    const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
    std::vector<float> c(n * n);
    const kernels::GemmDims d{n, n, n, false, false, false};
    for (auto _ : state) {
        if constexpr (Parallel) {
            kernels::omp::gemm<float>(a, b, c, d);
        } else {
            kernels::serial::gemm<float>(a, b, c, d);
        }
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(std::int64_t(state.iterations()) * std::int64_t(n * n * n));
}

template <bool Parallel>
void BM_LayerNorm(benchmark::State& state) {
    const std::size_t rows = std::size_t(state.range(0)), cols = 256;
    const auto x = random_vec(rows * cols, 3);
    const std::vector<float> gamma(cols, 1.0f), beta(cols, 0.0f);
    std::vector<float> y(rows * cols);
    for (auto _ : state) {
        if constexpr (Parallel) {
            kernels::omp::layer_norm_rows<float>(x, gamma, beta, y, rows, cols, 1e-5f);
        } else {
            kernels::serial::layer_norm_rows<float>(x, gamma, beta, y, rows, cols, 1e-5f);
        }
        benchmark::DoNotOptimize(y.data());
    }
}

template <bool Parallel>
void BM_Softmax(benchmark::State& state) {
    const std::size_t rows = std::size_t(state.range(0));
    const auto x = random_vec(rows * rows, 4);
    std::vector<float> y(rows * rows);
    for (auto _ : state) {
        if constexpr (Parallel) {
            kernels::omp::softmax_rows<float>(x, y, rows, rows);
        } else {
            kernels::serial::softmax_rows<float>(x, y, rows, rows);
        }
        benchmark::DoNotOptimize(y.data());
    }
}

template <bool Parallel>
void BM_DepthwiseConv(benchmark::State& state) {
    const std::size_t frames = std::size_t(state.range(0)), channels = 256, kernel = 31;
    const auto x = random_vec(frames * channels, 5), w = random_vec(kernel * channels, 6);
    const std::vector<float> bias(channels, 0.0f);
    std::vector<float> y(frames * channels);
    for (auto _ : state) {
        if constexpr (Parallel) {
            kernels::omp::depthwise_conv1d<float>(x, w, bias, y, frames, channels, kernel);
        } else {
            kernels::serial::depthwise_conv1d<float>(x, w, bias, y, frames, channels, kernel);
        }
        benchmark::DoNotOptimize(y.data());
    }
}

} // namespace

BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/omp")->Arg(64)->Arg(256);
BENCHMARK(BM_LayerNorm<false>)->Name("layer_norm/serial")->Arg(500);
BENCHMARK(BM_LayerNorm<true>)->Name("layer_norm/omp")->Arg(500);
BENCHMARK(BM_Softmax<false>)->Name("softmax/serial")->Arg(500);
BENCHMARK(BM_Softmax<true>)->Name("softmax/omp")->Arg(500);
BENCHMARK(BM_DepthwiseConv<false>)->Name("depthwise_conv/serial")->Arg(500);
BENCHMARK(BM_DepthwiseConv<true>)->Name("depthwise_conv/omp")->Arg(500);

BENCHMARK_MAIN();
