// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0

#include "colld/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "colld/errors.hpp"

namespace colld {

bool MaskSpec::contains(std::size_t t) const { return std::binary_search(masked.begin(), masked.end(), t); }

std::vector<char> MaskSpec::indicator() const {
    std::vector<char> out(frame_count, 0);
    for (std::size_t t : masked) out[t] = 1;
    return out;
}

MaskSpec MaskSpec::all(std::size_t frame_count) {
    MaskSpec m{frame_count, std::vector<std::size_t>(frame_count), 1.0, 1};
    std::iota(m.masked.begin(), m.masked.end(), std::size_t{0});
    return m;
}

MaskSpec sample_mask(std::size_t frame_count, double p, std::size_t span, Rng& rng) {
    if (!(p >= 0.0 && p <= 1.0)) throw UsageError("sample_mask: p must lie in [0, 1]");
    if (span < 1) throw UsageError("sample_mask: span must be at least 1");
    MaskSpec m{frame_count, {}, p, span};
    std::size_t covered_until = 0; // first frame not yet covered by an earlier span
    for (std::size_t t = 0; t < frame_count; ++t) {
        if (rng.bernoulli(p)) covered_until = std::max(covered_until, std::min(frame_count, t + span));
        if (t < covered_until) m.masked.push_back(t);
    }
    return m;
}

double expected_coverage(double p, std::size_t span) {
    if (!(p >= 0.0 && p <= 1.0)) throw UsageError("expected_coverage: p must lie in [0, 1]");
    if (span < 1) throw UsageError("expected_coverage: span must be at least 1");
    return 1.0 - std::pow(1.0 - p, static_cast<double>(span));
}

CoverageStats coverage_stats(double p, std::size_t span, std::size_t frames, std::size_t sequences,
                             std::uint64_t seed) {
    CoverageStats s;
    s.p = p;
    s.span = span;
    s.expected_coverage = expected_coverage(p, span);
    std::size_t masked = 0;
    for (std::size_t i = 0; i < sequences; ++i) {
        Rng rng(seed, "mask-stats", i);
        masked += sample_mask(frames, p, span, rng).masked.size();
    }
    s.n = frames * sequences;
    s.empirical_coverage = s.n ? static_cast<double>(masked) / static_cast<double>(s.n) : 0.0;
    return s;
}

} // namespace colld
