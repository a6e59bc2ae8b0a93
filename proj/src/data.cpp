// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0

#include "colld/data.hpp"

#include "colld/rng.hpp"

namespace colld {

SyntheticCorpus::SyntheticCorpus(const SyntheticCorpusConfig& config) : config_(config) {
    if (config.utterances < 1) throw ConfigError("synthetic corpus needs at least one utterance");
    items_.reserve(config.utterances);
    for (std::size_t i = 0; i < config.utterances; ++i) {
        LabeledSequence raw = synth_features(derive_seed(config.seed, "utterance", i), config.frames,
                                             config.feature_dim, config.num_classes, config.synth);
        LabeledSequence item;
        item.features = stack_frames(raw.features, config.stack_factor);
        item.features.utterance_id = "synth-" + std::to_string(i);
        item.labels = stack_labels(raw.labels, config.stack_factor);
        items_.push_back(std::move(item));
    }
}

ManifestCorpus::ManifestCorpus(const std::filesystem::path& manifest, std::size_t stack_factor) {
    const Manifest m = load_manifest(manifest);
    if (m.entries.empty()) throw ConfigError("manifest " + manifest.string() + " lists no utterances");
    for (const auto& e : m.entries) {
        FeatureSequence seq = read_features(e.path);
        seq.utterance_id = e.id;
        LabeledSequence item;
        item.features = stack_frames(seq, stack_factor);
        items_.push_back(std::move(item));
    }
}

} // namespace colld
