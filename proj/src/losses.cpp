// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0

#include "colld/losses.hpp"

#include <cmath>

namespace colld {

std::string_view to_string(LossKind kind) { return kind == LossKind::Contrastive ? "contrastive" : "l2"; }

std::string_view to_string(ProjectionKind kind) {
    return kind == ProjectionKind::LinearPerLayer ? "linear_per_layer" : "none";
}

std::string_view to_string(TeacherInit kind) {
    switch (kind) {
    case TeacherInit::None: return "none";
    case TeacherInit::LayerSkipping: return "layer_skipping";
    case TeacherInit::BottomLayers: return "bottom_layers";
    }
    return "none";
}

LossKind loss_kind_from_string(std::string_view s) {
    if (s == "contrastive") return LossKind::Contrastive;
    if (s == "l2") return LossKind::L2;
    throw ConfigError("unknown loss '" + std::string(s) + "'");
}

ProjectionKind projection_kind_from_string(std::string_view s) {
    if (s == "linear_per_layer") return ProjectionKind::LinearPerLayer;
    if (s == "none") return ProjectionKind::None;
    throw ConfigError("unknown projection '" + std::string(s) + "'");
}

TeacherInit teacher_init_from_string(std::string_view s) {
    if (s == "none") return TeacherInit::None;
    if (s == "layer_skipping") return TeacherInit::LayerSkipping;
    if (s == "bottom_layers") return TeacherInit::BottomLayers;
    throw ConfigError("unknown init_from_teacher '" + std::string(s) + "'");
}

void DistillConfig::validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("distill config: " + m); };
    if (!(temperature > 0.0)) fail("temperature must be positive");
    if (!(mask_prob >= 0.0 && mask_prob <= 1.0)) fail("mask_prob must lie in [0, 1]");
    if (mask_span < 1) fail("mask_span must be at least 1");
    if (!(peak_lr > 0.0)) fail("peak_lr must be positive");
    if (warmup_steps < 1 || warmup_steps > total_steps) fail("need 0 < warmup_steps <= total_steps");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("betas must lie in [0, 1)");
    if (!(adam_eps > 0.0)) fail("adam_eps must be positive");
    if (weight_decay < 0.0) fail("weight_decay must be non-negative");
    if (clip_norm < 0.0) fail("clip_norm must be non-negative");
    if (batch_size < 1) fail("batch_size must be at least 1");
    if (collapse_every < 1) fail("collapse_every must be at least 1");
}

std::vector<std::size_t> sample_distractors(const MaskSpec& mask, std::size_t t, std::size_t k, Rng& rng) {
    if (!mask.contains(t)) throw UsageError("sample_distractors: frame " + std::to_string(t) + " is not masked");
    std::vector<std::size_t> pool;
    pool.reserve(mask.masked.size());
    for (std::size_t i : mask.masked) {
        if (i != t) pool.push_back(i);
    }
    const std::size_t take = std::min(k, pool.size());
    // partial Fisher-Yates
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + rng.below(pool.size() - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(take);
    return pool;
}

std::optional<NodeId> contrastive_loss_node(Graph& graph, NodeId z, NodeId h, const MaskSpec& mask, std::size_t k,
                                            double tau, Rng& rng, bool normalized) {
    if (!(tau > 0.0)) throw UsageError("contrastive loss: temperature must be positive");
    if (mask.empty()) return std::nullopt;
    const std::size_t n = mask.masked.size();
    const std::size_t k_eff = std::min(k, n - 1);
    std::vector<std::size_t> rows, candidates;
    rows.reserve(n * (k_eff + 1));
    candidates.reserve(n * (k_eff + 1));
    for (std::size_t t : mask.masked) {
        rows.insert(rows.end(), k_eff + 1, t);
        candidates.push_back(t);
        auto d = sample_distractors(mask, t, k, rng);
        candidates.insert(candidates.end(), d.begin(), d.end());
    }
    NodeId cos = graph.cosine_rows(graph.gather_rows(z, std::move(rows)), graph.gather_rows(h, std::move(candidates)));
    NodeId logits = graph.reshape(graph.scale(cos, 1.0 / tau), n, k_eff + 1);
    NodeId positive = graph.slice_cols(graph.log_softmax(logits), 0, 1);
    const double factor = normalized ? -1.0 / static_cast<double>(n) : -1.0;
    return graph.scale(graph.sum_all(positive), factor);
}

std::optional<NodeId> l2_loss_node(Graph& graph, NodeId z, NodeId h, const MaskSpec& mask, bool normalized) {
    if (mask.empty()) return std::nullopt;
    const Node& nz = graph.node(z);
    const Node& nh = graph.node(h);
    if (nz.rows != nh.rows || nz.cols != nh.cols) throw ConfigError("l2 loss: prediction and target shapes differ");
    NodeId diff = graph.add(graph.gather_rows(z, mask.masked), graph.scale(graph.gather_rows(h, mask.masked), -1.0));
    NodeId sq = graph.sum_all(graph.mul(diff, diff));
    if (!normalized) return sq;
    return graph.scale(sq, 1.0 / static_cast<double>(nz.cols * mask.masked.size()));
}

double contrastive_layer_loss(const Tensor<double>& z, const Tensor<double>& h, const MaskSpec& mask, std::size_t k,
                              double tau, Rng& rng, bool normalized) {
    Graph g;
    NodeId zn = g.input("z", z.shape(), false);
    NodeId hn = g.input("h", h.shape(), false);
    if (g.node(zn).rows != g.node(hn).rows || g.node(zn).cols != g.node(hn).cols) {
        throw ConfigError("contrastive loss: prediction and target shapes differ");
    }
    auto loss = contrastive_loss_node(g, zn, hn, mask, k, tau, rng, normalized);
    if (!loss) return 0.0;
    g.set_output("loss", *loss);
    return evaluate(g, NamedTensors<double>{{"z", z}, {"h", h}}).at("loss").item();
}

double l2_layer_loss(const Tensor<double>& z, const Tensor<double>& h, const MaskSpec& mask, bool normalized) {
    Graph g;
    NodeId zn = g.input("z", z.shape(), false);
    NodeId hn = g.input("h", h.shape(), false);
    auto loss = l2_loss_node(g, zn, hn, mask, normalized);
    if (!loss) return 0.0;
    g.set_output("loss", *loss);
    return evaluate(g, NamedTensors<double>{{"z", z}, {"h", h}}).at("loss").item();
}

ParameterSet build_projection_heads(std::size_t student_layers, std::size_t student_dim, std::size_t teacher_dim,
                                    ProjectionKind kind, std::uint64_t seed) {
    ParameterSet heads;
    if (kind == ProjectionKind::None) {
        if (student_dim != teacher_dim) {
            throw ConfigError("projection 'none' needs equal widths, student " + std::to_string(student_dim) +
                              " vs teacher " + std::to_string(teacher_dim));
        }
        return heads;
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(student_dim));
    for (std::size_t l = 1; l <= student_layers; ++l) {
        const std::string p = "head." + std::to_string(l);
        Tensor<float> w({student_dim, teacher_dim});
        Rng rng(seed, "init:" + p);
        for (auto& v : w.data()) v = static_cast<float>(rng.uniform(-bound, bound));
        heads.emplace(p + ".weight", std::move(w));
        heads.emplace(p + ".bias", Tensor<float>({1, teacher_dim}));
    }
    return heads;
}

ParamNodes declare_heads(Graph& graph, const ParameterSet& heads, bool requires_grad) {
    ParamNodes nodes;
    for (const auto& [name, t] : heads) nodes.emplace(name, graph.input(name, t.shape(), requires_grad));
    return nodes;
}

Tensor<float> instance_normalize(const Tensor<float>& reps, double eps) {
    const std::size_t frames = reps.rows(), dim = reps.cols();
    Tensor<float> out(reps.shape());
    for (std::size_t c = 0; c < dim; ++c) {
        double mean = 0.0;
        for (std::size_t t = 0; t < frames; ++t) mean += reps(t, c);
        mean /= static_cast<double>(frames);
        double var = 0.0;
        for (std::size_t t = 0; t < frames; ++t) var += (reps(t, c) - mean) * (reps(t, c) - mean);
        var /= static_cast<double>(frames);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t t = 0; t < frames; ++t) out(t, c) = static_cast<float>((reps(t, c) - mean) * inv);
    }
    return out;
}

UtteranceLoss build_utterance_loss(Graph& graph, const std::vector<NodeId>& student_taps, const TapSet& teacher_taps,
                                   const ParamNodes& heads, const LayerMap& map, const MaskSpec& mask,
                                   const DistillConfig& cfg, Rng& rng) {
    if (student_taps.size() != map.pairs.size()) {
        throw UsageError("layer map has " + std::to_string(map.pairs.size()) + " pairs but " +
                         std::to_string(student_taps.size()) + " student taps were given");
    }
    UtteranceLoss out;
    std::optional<NodeId> sum;
    for (const auto& [l, lt] : map.pairs) {
        NodeId z = student_taps[l - 1];
        if (!heads.empty()) {
            const std::string p = "head." + std::to_string(l);
            auto w = heads.find(p + ".weight");
            auto b = heads.find(p + ".bias");
            if (w == heads.end() || b == heads.end()) throw UsageError("missing projection head for layer " + std::to_string(l));
            z = graph.add(graph.matmul(z, w->second), b->second);
        }
        const Tensor<float>& target_raw = teacher_taps.at_layer(lt);
        Tensor<float> target = cfg.target_instance_norm ? instance_normalize(target_raw) : target_raw;
        NodeId h = graph.constant(target.cast<double>(), "teacher.layer" + std::to_string(lt));
        if (graph.node(z).rows != graph.node(h).rows || graph.node(z).cols != graph.node(h).cols) {
            throw ConfigError("student layer " + std::to_string(l) + " prediction does not match teacher layer " +
                              std::to_string(lt) + " shape");
        }
        std::optional<NodeId> layer_loss =
            cfg.loss == LossKind::Contrastive
                ? contrastive_loss_node(graph, z, h, mask, cfg.distractors, cfg.temperature, rng, cfg.normalized)
                : l2_loss_node(graph, z, h, mask, cfg.normalized);
        out.per_layer.push_back(layer_loss);
        out.predictions.push_back(z);
        out.targets.push_back(h);
        if (layer_loss) sum = sum ? graph.add(*sum, *layer_loss) : *layer_loss;
    }
    if (sum) out.total = cfg.normalized ? graph.scale(*sum, 1.0 / static_cast<double>(map.pairs.size())) : *sum;
    return out;
}

std::optional<NodeId> batch_mean(Graph& graph, const std::vector<UtteranceLoss>& utterances) {
    std::optional<NodeId> sum;
    std::size_t count = 0;
    for (const auto& u : utterances) {
        if (!u.total) continue;
        sum = sum ? graph.add(*sum, *u.total) : *u.total;
        ++count;
    }
    if (!sum) return std::nullopt;
    return count == 1 ? *sum : graph.scale(*sum, 1.0 / static_cast<double>(count));
}

double total_loss(const std::vector<TapSet>& student_taps, const std::vector<TapSet>& teacher_taps,
                  const ParameterSet& heads, const LayerMap& map, const std::vector<MaskSpec>& masks,
                  const DistillConfig& cfg, Rng& rng) {
    if (student_taps.size() != teacher_taps.size() || student_taps.size() != masks.size()) {
        throw UsageError("total_loss: student taps, teacher taps and masks must cover the same utterances");
    }
    Graph g;
    ParamNodes head_nodes = declare_heads(g, heads, false);
    NamedTensors<double> inputs = cast_all<double>(heads);
    std::vector<UtteranceLoss> losses;
    for (std::size_t u = 0; u < student_taps.size(); ++u) {
        std::vector<NodeId> taps;
        for (std::size_t l = 1; l <= map.student_layers; ++l) {
            const std::string name = "student." + std::to_string(u) + ".layer" + std::to_string(l);
            const Tensor<float>& z = student_taps[u].at_layer(l);
            taps.push_back(g.input(name, z.shape(), false));
            inputs.emplace(name, z.cast<double>());
        }
        losses.push_back(build_utterance_loss(g, taps, teacher_taps[u], head_nodes, map, masks[u], cfg, rng));
    }
    auto mean = batch_mean(g, losses);
    if (!mean) return 0.0;
    g.set_output("loss", *mean);
    return evaluate(g, inputs).at("loss").item();
}

} // namespace colld
