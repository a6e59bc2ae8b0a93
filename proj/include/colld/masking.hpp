// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "colld/errors.hpp"
#include "colld/rng.hpp"

namespace colld {

/// Masked frame set of one utterance plus the parameters that drew it.
struct MaskSpec {
    std::size_t frame_count = 0;
    std::vector<std::size_t> masked; // sorted, unique, all < frame_count
    double start_prob = 0.0;
    std::size_t span = 1;

    bool empty() const { return masked.empty(); }
    bool contains(std::size_t t) const;
    /// 1 for masked frames, 0 otherwise.
    std::vector<char> indicator() const;

    static MaskSpec none(std::size_t frame_count) { return MaskSpec{frame_count, {}, 0.0, 1}; }
    static MaskSpec all(std::size_t frame_count);
};

/// Every frame index starts a span with probability p; spans are clipped at
/// the sequence end and overlapping spans merge.
MaskSpec sample_mask(std::size_t frame_count, double p, std::size_t span, Rng& rng);

/// Stationary per-frame mask probability 1 - (1-p)^span.
double expected_coverage(double p, std::size_t span);

struct CoverageStats {
    double p = 0.0;
    std::size_t span = 0;
    std::size_t n = 0; // frames sampled
    double empirical_coverage = 0.0;
    double expected_coverage = 0.0;
};

/// Samples `sequences` independent masks of `frames` frames each and reports
/// the pooled masked fraction.
CoverageStats coverage_stats(double p, std::size_t span, std::size_t frames, std::size_t sequences,
                             std::uint64_t seed);

} // namespace colld
