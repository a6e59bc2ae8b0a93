// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0
//
// Frozen-feature linear probe: block outputs of one encoder layer feed a
// softmax regression trained on 80% of the utterances and scored on the rest.

#pragma once

#include <cstdint>
#include <vector>

#include "colld/config.hpp"
#include "colld/data.hpp"
#include "colld/encoder.hpp"

namespace colld {

/// Frame representations grouped by utterance, with one label per frame.
struct ProbeData {
    std::size_t layer = 0;
    std::vector<Tensor<float>> reps;
    std::vector<std::vector<int>> labels;
};

/// Block output of `layer` (1-based) for the first `limit` corpus items
/// (all when 0). Unmasked, no parameter changes.
ProbeData extract_frozen(const Encoder& encoder, const DataSource& data, std::size_t layer, std::size_t limit = 0);

struct ProbeOptions {
    double train_fraction = 0.8;
    std::size_t max_iterations = 1000;
    double learning_rate = 0.5;
    double l2 = 1e-4;
    double tolerance = 1e-6; // stop once the loss improves by less than this
};

struct ProbeResult {
    double accuracy = 0.0;
    std::vector<std::optional<double>> per_class_accuracy; // null for classes absent from the held-out split
    std::size_t layer = 0;
    std::uint64_t seed = 0;
    std::size_t train_frames = 0;
    std::size_t test_frames = 0;
    std::size_t iterations = 0;

    json to_json() const;
    friend bool operator==(const ProbeResult&, const ProbeResult&) = default;
};

/// Utterance-level split from the "probe-split" stream of `seed`; features
/// are standardized with training statistics. Throws UsageError with fewer
/// than two labelled classes or fewer than two utterances.
ProbeResult train_linear_probe(const ProbeData& data, std::uint64_t seed, const ProbeOptions& options = {});

} // namespace colld
