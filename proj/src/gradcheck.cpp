// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0

#include "colld/gradcheck.hpp"

#include "colld/encoder.hpp"
#include "colld/mapping.hpp"

namespace colld {

LossCheckCase masked_loss_check_case(std::uint64_t seed, LossKind kind) {
    EncoderConfig cfg;
    cfg.layers = 2;
    cfg.dim = 4;
    cfg.ffn = 8;
    cfg.heads = 2;
    cfg.conv_kernel = 3;
    cfg.input_dim = 4;
    const std::size_t frames = 10;
    const std::size_t teacher_dim = 5;

    DistillConfig dc;
    dc.loss = kind;
    dc.distractors = 4;
    dc.temperature = 0.1;
    dc.seed = seed;
    const LayerMap map = layer_map(cfg.layers, 3);

    Rng noise(seed, "gradcheck:noise");
    Encoder student = build_encoder(cfg, derive_seed(seed, "gradcheck:init"));
    for (auto& [name, t] : student.parameters()) {
        for (auto& v : t.data()) v += static_cast<float>(0.1 * noise.normal());
    }
    ParameterSet heads = build_projection_heads(cfg.layers, cfg.dim, teacher_dim, ProjectionKind::LinearPerLayer,
                                                derive_seed(seed, "gradcheck:heads"));
    for (auto& [name, t] : heads) {
        for (auto& v : t.data()) v += static_cast<float>(0.1 * noise.normal());
    }

    TapSet teacher;
    teacher.kind = dc.tap_kind;
    for (std::size_t lt : {std::size_t{1}, std::size_t{3}}) {
        Tensor<float> reps({frames, teacher_dim});
        for (auto& v : reps.data()) v = static_cast<float>(noise.normal());
        teacher.layers.push_back(lt);
        teacher.reps.push_back(std::move(reps));
    }

    MaskSpec mask;
    for (std::uint64_t attempt = 0; mask.empty(); ++attempt) {
        Rng mask_rng(seed, "gradcheck:mask", attempt);
        mask = sample_mask(frames, 0.2, 3, mask_rng);
    }

    LossCheckCase c;
    Graph& g = c.graph;
    Tensor<double> features({frames, cfg.input_dim});
    for (auto& v : features.data()) v = noise.normal();
    c.inputs.emplace("features", features);
    NodeId feats = g.input("features", features.shape(), false);
    ParamNodes params = declare_parameters(g, cfg, "", true);
    ParamNodes head_nodes = declare_heads(g, heads, true);
    EncoderNodes enc = build_encoder_graph(g, cfg, params, feats, &mask, cfg.layers);
    std::vector<NodeId> taps{enc.tap(1, dc.tap_kind), enc.tap(2, dc.tap_kind)};
    Rng distractor_rng(seed, "gradcheck:distractors");
    UtteranceLoss loss = build_utterance_loss(g, taps, teacher, head_nodes, map, mask, dc, distractor_rng);
    g.set_output("loss", *loss.total);

    for (auto& [name, t] : student.parameters()) c.inputs.emplace(name, t.cast<double>());
    for (auto& [name, t] : heads) c.inputs.emplace(name, t.cast<double>());
    return c;
}

GradCheckSummary check_loss_gradients(std::uint64_t first_seed, std::size_t seeds, double epsilon, double tolerance,
                                      LossKind kind) {
    GradCheckSummary s;
    s.seeds = seeds;
    for (std::size_t i = 0; i < seeds; ++i) {
        const std::uint64_t seed = first_seed + i;
        LossCheckCase c = masked_loss_check_case(seed, kind);
        const FiniteDifferenceReport rep = finite_difference_check(c.graph, "loss", c.inputs, epsilon, tolerance);
        if (!rep.ok) ++s.failures;
        if (rep.max_rel_error() >= s.max_rel_error) {
            s.max_rel_error = rep.max_rel_error();
            s.worst_seed = seed;
        }
    }
    return s;
}

} // namespace colld
