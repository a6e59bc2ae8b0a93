// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "colld/tensor.hpp"

namespace colld {

/// frames x dim filterbank-style features at a fixed frame rate.
struct FeatureSequence {
    std::string utterance_id;
    double rate_hz = 100.0;
    Tensor<float> values; // [frames, dim]

    std::size_t frames() const { return values.rows(); }
    std::size_t dim() const { return values.cols(); }
};

/// Concatenates each run of `factor` consecutive frames into one frame;
/// trailing frames that do not fill a run are dropped.
FeatureSequence stack_frames(const FeatureSequence& seq, std::size_t factor);

/// Knobs of the synthetic corpus. Class prototypes depend only on
/// prototype_seed, so every utterance shares the same class geometry.
struct SynthOptions {
    std::uint64_t prototype_seed = 0xC011D5EEDULL;
    double prototype_scale = 1.0;
    double noise_std = 1.0;
    double noise_correlation = 0.5; // AR(1) coefficient of the frame noise
    double mean_smoothing = 0.6;    // exponential smoothing of class means across frames
    std::size_t min_segment = 20;   // frames per label segment at the native rate
    std::size_t max_segment = 60;
    double rate_hz = 100.0;
};

struct LabeledSequence {
    FeatureSequence features;
    std::vector<int> labels; // one per frame
};

/// Class-conditioned Gaussian mixture draws with segment-structured labels and
/// temporally smoothed means and noise. Deterministic in (seed, options).
LabeledSequence synth_features(std::uint64_t seed, std::size_t frames, std::size_t dim, std::size_t num_classes,
                               const SynthOptions& options = {});

/// Labels aligned with stack_frames output: the label of each run's first frame.
std::vector<int> stack_labels(const std::vector<int>& labels, std::size_t factor);

// Binary feature file: "CLLD" | u16 version | u32 dim | u32 frames | u32 rate_hz |
// frames*dim float32, all little-endian, row-major.
inline constexpr std::uint16_t kFeatureFormatVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 18;

struct FeatureHeader {
    std::uint16_t version = kFeatureFormatVersion;
    std::uint32_t dim = 0;
    std::uint32_t frames = 0;
    std::uint32_t rate_hz = 0;
};

void write_features(const FeatureSequence& seq, const std::filesystem::path& path);
FeatureSequence read_features(const std::filesystem::path& path);
FeatureHeader read_feature_header(const std::filesystem::path& path);

struct ManifestEntry {
    std::string id;
    std::filesystem::path path;
    std::size_t frames = 0;
    std::size_t dim = 0;
};

struct Manifest {
    std::vector<ManifestEntry> entries;
};

/// JSON-lines, one {"id","path","frames","dim"} object per line. Relative
/// paths resolve against the manifest's directory. Every entry is checked
/// against its file header.
Manifest load_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

} // namespace colld
