// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "colld/features.hpp"

namespace colld {

/// Indexed corpus of encoder-ready (already stacked) utterances.
class DataSource {
public:
    virtual ~DataSource() = default;
    virtual std::size_t size() const = 0;
    /// Labels may be empty when the source carries none.
    virtual const LabeledSequence& get(std::size_t index) const = 0;
};

struct SyntheticCorpusConfig {
    std::size_t utterances = 64;
    std::size_t frames = 200; // at the native 100 Hz rate, before stacking
    std::size_t feature_dim = 80;
    std::size_t num_classes = 8;
    std::size_t stack_factor = 2;
    std::uint64_t seed = 0;
    SynthOptions synth;
};

class SyntheticCorpus final : public DataSource {
public:
    explicit SyntheticCorpus(const SyntheticCorpusConfig& config);

    std::size_t size() const override { return items_.size(); }
    const LabeledSequence& get(std::size_t index) const override { return items_.at(index); }
    const SyntheticCorpusConfig& config() const { return config_; }

private:
    SyntheticCorpusConfig config_;
    std::vector<LabeledSequence> items_;
};

/// Feature files listed in a manifest, stacked on load. No labels.
class ManifestCorpus final : public DataSource {
public:
    ManifestCorpus(const std::filesystem::path& manifest, std::size_t stack_factor);

    std::size_t size() const override { return items_.size(); }
    const LabeledSequence& get(std::size_t index) const override { return items_.at(index); }

private:
    std::vector<LabeledSequence> items_;
};

} // namespace colld
