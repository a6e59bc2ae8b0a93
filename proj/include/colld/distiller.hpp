// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0
//
// Layer-to-layer distillation loop: frozen teacher, trainable student plus
// projection heads, masked student input, AdamW on the warmup/decay schedule.
//
// Randomness per step s comes from named streams of DistillConfig::seed:
// "data" (batch indices), "mask" and "distractors" (per utterance u) and
// "collapse". Nothing else is stateful, so the optimizer step fully
// determines where a resumed run continues.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "colld/config.hpp"
#include "colld/data.hpp"
#include "colld/encoder.hpp"
#include "colld/losses.hpp"
#include "colld/mapping.hpp"
#include "colld/optimizer.hpp"

namespace colld {

/// Mean pairwise cosine of frame vectors. Uses every pair when there are at
/// most 2000 of them, otherwise 2000 pairs drawn uniformly. Pairs involving an
/// all-zero frame count as 0. Throws NumericError if every frame is zero.
double collapse_metric(const Tensor<float>& reps, Rng& rng);

struct MetricRecord {
    std::uint64_t step = 0;
    double lr = 0.0;
    std::optional<double> loss; // absent when every mask in the batch was empty
    std::vector<std::optional<double>> loss_per_layer;
    std::optional<double> collapse;
    double elapsed_ms = 0.0;

    json to_json() const;
    static MetricRecord from_json(const json& j);
    friend bool operator==(const MetricRecord&, const MetricRecord&) = default;
};

struct TrainState {
    Encoder student;
    ParameterSet heads;
    OptimizerState optimizer;
    std::vector<MetricRecord> history;
};

/// Copies teacher blocks into a width-matched student: the mapped teacher
/// layer for LayerSkipping, teacher layer l for BottomLayers. The input
/// projection and mask embedding come along. None is a no-op.
void initialize_from_teacher(const Encoder& teacher, Encoder& student, TeacherInit mode, const LayerMap& map);

/// Fresh training state: heads initialized from the "heads" stream of
/// cfg.seed and the optimizer hyperparameters taken from cfg.
TrainState make_train_state(const DistillConfig& cfg, const Encoder& teacher, Encoder student);

/// kind "train_state" checkpoint: student parameters as "student.<name>",
/// heads as "head.<l>.*", Adam moments as "adam.m.<param>" / "adam.v.<param>".
void save_train_state(const std::filesystem::path& path, const TrainState& state, const DistillConfig& cfg);
/// `cfg`, when given, receives the distillation config stored alongside.
TrainState load_train_state(const std::filesystem::path& path, DistillConfig* cfg = nullptr);

struct StepOptions {
    /// Overwrite the gradient of every projected prediction at unmasked
    /// frames with zeros before it propagates.
    bool zero_unmasked_prediction_grads = false;
};

class Distiller {
public:
    /// `teacher` and `data` must outlive the distiller. The teacher is only read.
    Distiller(DistillConfig cfg, const Encoder& teacher, TrainState state, const DataSource& data);

    const DistillConfig& config() const { return cfg_; }
    const LayerMap& layer_map() const { return map_; }
    const TrainState& state() const { return state_; }
    TrainState& state() { return state_; }

    /// One optimizer update. Appends the record to the history and returns it.
    MetricRecord step(const StepOptions& options = {});

    /// Mean cosine between projected student taps and their teacher targets
    /// over masked frames, per student layer, on corpus items `indices` with
    /// masks from the "eval-mask" stream.
    std::vector<double> masked_alignment(const std::vector<std::size_t>& indices) const;

    /// Teacher taps (unmasked, at the mapped layers) for one corpus item, cached.
    const TapSet& teacher_taps(std::size_t index) const;

private:
    DistillConfig cfg_;
    const Encoder* teacher_;
    TrainState state_;
    const DataSource* data_;
    LayerMap map_;
    std::vector<std::size_t> teacher_layers_;
    mutable std::map<std::size_t, TapSet> teacher_cache_;
};

using MetricSink = std::function<void(const MetricRecord&)>;

struct DistillOptions {
    std::optional<std::filesystem::path> checkpoint_dir; // periodic checkpoints go here
    MetricSink sink;
};

/// Runs `steps` updates from a fresh state. steps = 0 returns the student
/// untouched with an empty history.
TrainState distill(const DistillConfig& cfg, const Encoder& teacher, Encoder student, const DataSource& data,
                   std::size_t steps, const DistillOptions& options = {});

/// Continues an existing state for `steps` more updates.
void continue_distill(Distiller& distiller, std::size_t steps, const DistillOptions& options = {});

} // namespace colld
