// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "colld/graph.hpp"
#include "colld/losses.hpp"

namespace colld {

/// A complete masked distillation loss on a miniature student (2 blocks,
/// width 4) with random targets, projection heads and perturbed norms and
/// biases. Every student parameter and head is a differentiable input.
struct LossCheckCase {
    Graph graph; // output "loss"
    NamedTensors<double> inputs;
};

LossCheckCase masked_loss_check_case(std::uint64_t seed, LossKind kind = LossKind::Contrastive);

struct GradCheckSummary {
    std::size_t seeds = 0;
    std::size_t failures = 0;
    double max_rel_error = 0.0;
    std::uint64_t worst_seed = 0;
};

/// Central differences over `seeds` consecutive cases starting at `first_seed`.
GradCheckSummary check_loss_gradients(std::uint64_t first_seed, std::size_t seeds, double epsilon, double tolerance,
                                      LossKind kind = LossKind::Contrastive);

} // namespace colld
