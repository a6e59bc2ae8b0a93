// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "colld/errors.hpp"

namespace colld {

/// Student layer l (1-based) learns to predict teacher layer `pairs[l-1].second`.
struct LayerMap {
    std::size_t student_layers = 0;
    std::size_t teacher_layers = 0;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;

    std::size_t teacher_for(std::size_t student_layer) const { return pairs.at(student_layer - 1).second; }
};

/// l -> round((l-1)(L_T-1)/(L_S-1)) + 1 with ties rounded away from zero,
/// computed in exact integer arithmetic. Requires 2 <= L_S <= L_T.
LayerMap layer_map(std::size_t student_layers, std::size_t teacher_layers);

} // namespace colld
