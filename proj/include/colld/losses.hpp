// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "colld/encoder.hpp"
#include "colld/graph.hpp"
#include "colld/mapping.hpp"
#include "colld/masking.hpp"
#include "colld/rng.hpp"

namespace colld {

enum class LossKind { Contrastive, L2 };
enum class ProjectionKind { LinearPerLayer, None };
enum class TeacherInit { None, LayerSkipping, BottomLayers };

std::string_view to_string(LossKind kind);
std::string_view to_string(ProjectionKind kind);
std::string_view to_string(TeacherInit kind);
LossKind loss_kind_from_string(std::string_view s);
ProjectionKind projection_kind_from_string(std::string_view s);
TeacherInit teacher_init_from_string(std::string_view s);

/// Every knob of one distillation run. Defaults are the full-scale recipe;
/// desk-scale runs override the schedule and batch fields.
struct DistillConfig {
    // objective
    LossKind loss = LossKind::Contrastive;
    double temperature = 0.1;
    std::size_t distractors = 100;
    TapKind tap_kind = TapKind::Ffn2;
    bool target_instance_norm = false;
    ProjectionKind projection = ProjectionKind::LinearPerLayer;
    bool normalized = true;

    // masking
    double mask_prob = 0.065;
    std::size_t mask_span = 10;

    // optimizer and schedule
    double peak_lr = 1e-4;
    std::size_t warmup_steps = 4000;
    std::size_t total_steps = 200000;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double adam_eps = 1e-6;
    double weight_decay = 1e-2;
    double clip_norm = 10.0; // 0 disables clipping

    // loop
    std::size_t batch_size = 4;
    std::size_t collapse_every = 10;
    std::size_t checkpoint_every = 500; // 0 disables periodic checkpoints
    TeacherInit init_from_teacher = TeacherInit::None;
    std::uint64_t seed = 0;
    bool deterministic = true;

    void validate() const;
};

/// min(K, |mask|-1) indices drawn uniformly without replacement from mask \ {t}.
std::vector<std::size_t> sample_distractors(const MaskSpec& mask, std::size_t t, std::size_t k, Rng& rng);

/// -sum over masked t of log softmax_{h in {h_t} + distractors} cos(z_t, h)/tau,
/// divided by |mask| when `normalized`. Returns nullopt for an empty mask.
/// Distractor draws consume `rng` in masked-frame order.
std::optional<NodeId> contrastive_loss_node(Graph& graph, NodeId z, NodeId h, const MaskSpec& mask, std::size_t k,
                                            double tau, Rng& rng, bool normalized);

/// sum over masked t of ||z_t - h_t||^2, divided by D * |mask| when `normalized`.
std::optional<NodeId> l2_loss_node(Graph& graph, NodeId z, NodeId h, const MaskSpec& mask, bool normalized);

/// Scalar-valued conveniences over plain matrices (empty mask gives 0).
double contrastive_layer_loss(const Tensor<double>& z, const Tensor<double>& h, const MaskSpec& mask, std::size_t k,
                              double tau, Rng& rng, bool normalized);
double l2_layer_loss(const Tensor<double>& z, const Tensor<double>& h, const MaskSpec& mask, bool normalized);

/// Per-layer affine maps student dim -> teacher dim, named "head.<l>.weight"
/// and "head.<l>.bias" for student layer l. Empty when projection is None,
/// which requires equal widths.
ParameterSet build_projection_heads(std::size_t student_layers, std::size_t student_dim, std::size_t teacher_dim,
                                    ProjectionKind kind, std::uint64_t seed);

/// Standardizes every channel over frames (per-utterance instance norm).
Tensor<float> instance_normalize(const Tensor<float>& reps, double eps = 1e-5);

/// Loss nodes for one utterance.
struct UtteranceLoss {
    std::optional<NodeId> total;                 // nullopt when the mask is empty
    std::vector<std::optional<NodeId>> per_layer; // per student layer
    std::vector<NodeId> predictions;             // projected student taps per layer
    std::vector<NodeId> targets;                 // teacher taps per layer (constants)
};

/// Projects each student tap, fetches its mapped teacher tap (instance
/// normalized if configured), sums the layer losses and divides by L_S in
/// normalized mode. `student_taps[l-1]` is the tap node of student layer l.
UtteranceLoss build_utterance_loss(Graph& graph, const std::vector<NodeId>& student_taps, const TapSet& teacher_taps,
                                   const ParamNodes& heads, const LayerMap& map, const MaskSpec& mask,
                                   const DistillConfig& cfg, Rng& rng);

/// Mean of per-utterance losses over utterances with non-empty masks; the
/// returned node is nullopt if every mask was empty.
std::optional<NodeId> batch_mean(Graph& graph, const std::vector<UtteranceLoss>& utterances);

/// Value-level batch loss over precomputed taps. Student taps must cover
/// layers 1..L_S, teacher taps every mapped layer.
double total_loss(const std::vector<TapSet>& student_taps, const std::vector<TapSet>& teacher_taps,
                  const ParameterSet& heads, const LayerMap& map, const std::vector<MaskSpec>& masks,
                  const DistillConfig& cfg, Rng& rng);

/// Declares projection head tensors as graph inputs (same names).
ParamNodes declare_heads(Graph& graph, const ParameterSet& heads, bool requires_grad);

} // namespace colld
