// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "colld/tensor.hpp"

namespace colld {

/// Linear warmup to peak_lr, then linear decay to 0 at total_steps.
struct Schedule {
    double peak_lr = 1e-4;
    std::size_t warmup_steps = 4000;
    std::size_t total_steps = 200000;
};

double lr_at(std::size_t step, const Schedule& schedule);

struct OptimizerState {
    std::uint64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-6;
    double weight_decay = 1e-2;
    NamedTensors<float> first_moment;
    NamedTensors<float> second_moment;
};

/// Adam with bias correction and decoupled weight decay:
///   p <- p - lr * wd * p;  p <- p - lr * m_hat / (sqrt(v_hat) + eps).
/// Every parameter needs a gradient of the same shape. Moments are created
/// on first use.
void adam_step(NamedTensors<float>& params, const NamedTensors<float>& grads, OptimizerState& state, double lr);

/// Scales all gradients so their joint L2 norm is at most max_norm. Returns
/// the norm before clipping. max_norm <= 0 leaves gradients untouched.
double clip_global_norm(NamedTensors<float>& grads, double max_norm);

} // namespace colld
