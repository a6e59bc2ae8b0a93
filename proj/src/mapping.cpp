// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0

#include "colld/mapping.hpp"

#include <string>

#include "colld/errors.hpp"

namespace colld {

LayerMap layer_map(std::size_t student_layers, std::size_t teacher_layers) {
    if (student_layers < 2) {
        throw UsageError("layer_map: the student needs at least 2 layers, got " + std::to_string(student_layers));
    }
    if (student_layers > teacher_layers) {
        throw UsageError("layer_map: student has " + std::to_string(student_layers) + " layers but teacher only " +
                         std::to_string(teacher_layers));
    }
    LayerMap map{student_layers, teacher_layers, {}};
    const std::size_t den = student_layers - 1;
    for (std::size_t l = 1; l <= student_layers; ++l) {
        const std::size_t num = (l - 1) * (teacher_layers - 1);
        // floor(num/den + 1/2) == round-half-away-from-zero for non-negative values
        const std::size_t rounded = (2 * num + den) / (2 * den);
        map.pairs.emplace_back(l, rounded + 1);
    }
    return map;
}

} // namespace colld
