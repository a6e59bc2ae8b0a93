// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0

#include "colld/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "colld/rng.hpp"

namespace colld {

void EncoderConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("encoder config: " + msg); };
    if (layers < 1) fail("layers must be at least 1");
    if (dim < 1) fail("dim must be positive");
    if (ffn < 1) fail("ffn must be positive");
    if (heads < 1) fail("heads must be positive");
    if (dim % heads != 0) fail("dim " + std::to_string(dim) + " is not divisible by heads " + std::to_string(heads));
    if (conv_kernel % 2 == 0) fail("conv_kernel " + std::to_string(conv_kernel) + " must be odd");
    if (input_dim < 1) fail("input_dim must be positive");
}

EncoderConfig encoder_preset(std::string_view name) {
    auto make = [&](std::size_t layers, std::size_t dim, std::size_t ffn, std::size_t heads, std::size_t kernel) {
        return EncoderConfig{layers, dim, ffn, heads, kernel, 160, std::string(name)};
    };
    if (name == "xx-large") return make(40, 1024, 4096, 16, 31);
    if (name == "x-large") return make(24, 1024, 4096, 16, 31);
    if (name == "large12") return make(12, 1024, 4096, 16, 31);
    if (name == "large40") return make(40, 768, 1024, 8, 31);
    if (name == "tiny") return make(4, 32, 64, 2, 15);
    if (name == "tiny-student") return make(2, 32, 64, 2, 15);
    throw ConfigError("unknown encoder preset '" + std::string(name) + "'");
}

std::vector<std::string> encoder_preset_names() {
    return {"xx-large", "x-large", "large12", "large40", "tiny", "tiny-student"};
}

std::string_view to_string(TapKind kind) { return kind == TapKind::Ffn2 ? "ffn2" : "block_output"; }

TapKind tap_kind_from_string(std::string_view name) {
    if (name == "ffn2") return TapKind::Ffn2;
    if (name == "block_output") return TapKind::BlockOutput;
    throw ConfigError("unknown tap kind '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

void add_norm(std::vector<std::pair<std::string, Shape>>& out, const std::string& p, std::size_t d) {
    out.emplace_back(p + ".gamma", Shape{1, d});
    out.emplace_back(p + ".beta", Shape{1, d});
}

void add_linear(std::vector<std::pair<std::string, Shape>>& out, const std::string& p, std::size_t in,
                std::size_t outw) {
    out.emplace_back(p + ".weight", Shape{in, outw});
    out.emplace_back(p + ".bias", Shape{1, outw});
}

bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

} // namespace

std::vector<std::pair<std::string, Shape>> parameter_shapes(const EncoderConfig& c) {
    c.validate();
    std::vector<std::pair<std::string, Shape>> out;
    add_linear(out, "input_proj", c.input_dim, c.dim);
    out.emplace_back("mask_embedding", Shape{1, c.dim});
    for (std::size_t b = 0; b < c.layers; ++b) {
        const std::string p = "blocks." + std::to_string(b) + ".";
        for (const char* ffn : {"ffn1", "ffn2"}) {
            add_norm(out, p + ffn + ".norm", c.dim);
            add_linear(out, p + ffn + ".w1", c.dim, c.ffn);
            add_linear(out, p + ffn + ".w2", c.ffn, c.dim);
            if (std::string_view(ffn) == "ffn1") {
                add_norm(out, p + "attn.norm", c.dim);
                for (const char* proj : {"q", "k", "v", "out"}) add_linear(out, p + "attn." + proj, c.dim, c.dim);
                add_norm(out, p + "conv.norm", c.dim);
                add_linear(out, p + "conv.pw1", c.dim, 2 * c.dim);
                out.emplace_back(p + "conv.dw.weight", Shape{c.conv_kernel, c.dim});
                out.emplace_back(p + "conv.dw.bias", Shape{1, c.dim});
                add_norm(out, p + "conv.dw_norm", c.dim);
                add_linear(out, p + "conv.pw2", c.dim, c.dim);
            }
        }
        add_norm(out, p + "final_norm", c.dim);
    }
    return out;
}

std::uint64_t block_param_count(const EncoderConfig& c) {
    const std::uint64_t d = c.dim, f = c.ffn, k = c.conv_kernel;
    const std::uint64_t ffn = 2 * d + (d * f + f) + (f * d + d);
    const std::uint64_t attn = 2 * d + 4 * (d * d + d);
    const std::uint64_t conv = 2 * d + (d * 2 * d + 2 * d) + (k * d + d) + 2 * d + (d * d + d);
    return 2 * ffn + attn + conv + 2 * d;
}

std::uint64_t param_count(const EncoderConfig& c) {
    c.validate();
    const std::uint64_t input = std::uint64_t(c.input_dim) * c.dim + c.dim;
    return input + c.dim + c.layers * block_param_count(c);
}

double estimate_macs(const EncoderConfig& c, double seconds) {
    c.validate();
    if (!(seconds > 0.0)) throw UsageError("estimate_macs: seconds must be positive");
    const double t = std::round(seconds * 50.0);
    const double d = static_cast<double>(c.dim), f = static_cast<double>(c.ffn);
    const double k = static_cast<double>(c.conv_kernel);
    const double ffn = 2.0 * (2.0 * t * d * f);
    const double attn = 4.0 * t * d * d + 2.0 * t * t * d; // projections + scores + context
    const double conv = 2.0 * t * d * d + t * k * d + t * d * d;
    const double input = t * static_cast<double>(c.input_dim) * d;
    return input + static_cast<double>(c.layers) * (ffn + attn + conv);
}

Encoder::Encoder(EncoderConfig config, ParameterSet params) : config_(std::move(config)), params_(std::move(params)) {
    const auto shapes = parameter_shapes(config_);
    if (shapes.size() != params_.size()) {
        throw ConfigError("encoder expects " + std::to_string(shapes.size()) + " parameter tensors, got " +
                          std::to_string(params_.size()));
    }
    for (const auto& [name, shape] : shapes) {
        auto it = params_.find(name);
        if (it == params_.end()) throw ConfigError("encoder parameter '" + name + "' is missing");
        if (it->second.shape() != shape) {
            throw ConfigError("encoder parameter '" + name + "' has shape " + shape_str(it->second.shape()) +
                              ", expected " + shape_str(shape));
        }
        if (!it->second.all_finite()) throw NumericError("encoder parameter '" + name + "' is not finite");
    }
}

std::size_t Encoder::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.size();
    return n;
}

Encoder build_encoder(const EncoderConfig& config, std::uint64_t seed) {
    ParameterSet params;
    for (const auto& [name, shape] : parameter_shapes(config)) {
        Tensor<float> t(shape);
        if (ends_with(name, ".gamma")) {
            std::fill(t.data().begin(), t.data().end(), 1.0f);
        } else if (ends_with(name, ".weight") || name == "mask_embedding") {
            const std::size_t fan_in = name == "mask_embedding" ? config.dim : shape[0];
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            Rng rng(seed, "init:" + name);
            for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-bound, bound));
        }
        params.emplace(name, std::move(t));
    }
    return Encoder(config, std::move(params));
}

const Tensor<float>& TapSet::at_layer(std::size_t layer) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i] == layer) return reps[i];
    }
    throw UsageError("tap set has no layer " + std::to_string(layer));
}

// ---------------------------------------------------------------------------
// Graph

ParamNodes declare_parameters(Graph& graph, const EncoderConfig& config, const std::string& prefix,
                              bool requires_grad) {
    ParamNodes nodes;
    for (const auto& [name, shape] : parameter_shapes(config)) {
        nodes.emplace(name, graph.input(prefix + name, shape, requires_grad));
    }
    return nodes;
}

Tensor<double> sinusoidal_positions(std::size_t frames, std::size_t dim) {
    Tensor<double> pe({frames, dim});
    for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t i = 0; i < dim; ++i) {
            const double rate = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(dim));
            const double angle = static_cast<double>(t) * rate;
            pe(t, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return pe;
}

namespace {

struct BlockBuilder {
    Graph& g;
    const ParamNodes& p;
    std::string prefix;

    NodeId param(const std::string& name) const {
        auto it = p.find(prefix + name);
        if (it == p.end()) throw ConfigError("missing parameter node '" + prefix + name + "'");
        return it->second;
    }
    NodeId norm(NodeId x, const std::string& name) const {
        return g.layer_norm(x, param(name + ".gamma"), param(name + ".beta"));
    }
    NodeId linear(NodeId x, const std::string& name) const {
        return g.add(g.matmul(x, param(name + ".weight")), param(name + ".bias"));
    }
    NodeId ffn(NodeId x, const std::string& name) const {
        NodeId h = g.swish(linear(norm(x, name + ".norm"), name + ".w1"));
        return g.scale(linear(h, name + ".w2"), 0.5);
    }
    NodeId attention(NodeId x, std::size_t heads, std::size_t dim) const {
        NodeId h = norm(x, "attn.norm");
        NodeId q = linear(h, "attn.q");
        NodeId k = linear(h, "attn.k");
        NodeId v = linear(h, "attn.v");
        const std::size_t dh = dim / heads;
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
        std::vector<NodeId> ctx;
        for (std::size_t i = 0; i < heads; ++i) {
            NodeId qi = g.slice_cols(q, i * dh, dh);
            NodeId ki = g.slice_cols(k, i * dh, dh);
            NodeId vi = g.slice_cols(v, i * dh, dh);
            NodeId scores = g.scale(g.matmul(qi, ki, true), inv_sqrt);
            ctx.push_back(g.matmul(g.softmax(scores), vi));
        }
        NodeId joined = heads == 1 ? ctx[0] : g.concat_cols(ctx);
        return linear(joined, "attn.out");
    }
    NodeId conv(NodeId x) const {
        NodeId h = linear(norm(x, "conv.norm"), "conv.pw1");
        h = g.glu(h);
        h = g.depthwise_conv1d(h, param("conv.dw.weight"), param("conv.dw.bias"));
        h = g.swish(norm(h, "conv.dw_norm"));
        return linear(h, "conv.pw2");
    }
};

} // namespace

NodeId build_attention_sublayer(Graph& graph, const EncoderConfig& config, const ParamNodes& params,
                                std::size_t block, NodeId x) {
    BlockBuilder blk{graph, params, "blocks." + std::to_string(block) + "."};
    return blk.attention(x, config.heads, config.dim);
}

EncoderNodes build_encoder_graph(Graph& graph, const EncoderConfig& config, const ParamNodes& params,
                                 NodeId features, const MaskSpec* mask, std::size_t depth) {
    config.validate();
    if (depth > config.layers) {
        throw UsageError("encoder depth " + std::to_string(depth) + " exceeds " + std::to_string(config.layers) +
                         " layers");
    }
    const Node& fin = graph.node(features);
    if (fin.cols != config.input_dim) {
        throw ConfigError("encoder input has width " + std::to_string(fin.cols) + ", config expects " +
                          std::to_string(config.input_dim));
    }
    const std::size_t frames = fin.rows;
    BlockBuilder top{graph, params, ""};
    NodeId x = top.linear(features, "input_proj");

    if (mask != nullptr && !mask->empty()) {
        if (mask->frame_count != frames) {
            throw UsageError("mask covers " + std::to_string(mask->frame_count) + " frames, input has " +
                             std::to_string(frames));
        }
        Tensor<double> keep({frames, config.dim}, 1.0);
        Tensor<double> picked({frames, 1}, 0.0);
        for (std::size_t t : mask->masked) {
            std::fill(keep.row(t).begin(), keep.row(t).end(), 0.0);
            picked[t] = 1.0;
        }
        NodeId kept = graph.mul(x, graph.constant(std::move(keep), "mask.keep"));
        NodeId filled = graph.matmul(graph.constant(std::move(picked), "mask.rows"), top.param("mask_embedding"));
        x = graph.add(kept, filled);
    }
    x = graph.add(x, graph.constant(sinusoidal_positions(frames, config.dim), "positions"));

    EncoderNodes out;
    for (std::size_t b = 0; b < depth; ++b) {
        BlockBuilder blk{graph, params, "blocks." + std::to_string(b) + "."};
        x = graph.add(x, blk.ffn(x, "ffn1"));
        x = graph.add(x, blk.attention(x, config.heads, config.dim));
        x = graph.add(x, blk.conv(x));
        NodeId f = blk.ffn(x, "ffn2");
        x = blk.norm(graph.add(x, f), "final_norm");
        out.ffn2.push_back(f);
        out.block_output.push_back(x);
    }
    return out;
}

TapSet forward_with_taps(const Encoder& encoder, const FeatureSequence& input, const MaskSpec* mask,
                         const std::vector<std::size_t>& tap_layers, TapKind kind) {
    const EncoderConfig& cfg = encoder.config();
    if (input.dim() != cfg.input_dim) {
        throw ConfigError("input has " + std::to_string(input.dim()) + " dims, encoder expects " +
                          std::to_string(cfg.input_dim));
    }
    std::size_t depth = 0;
    for (std::size_t l : tap_layers) {
        if (l < 1 || l > cfg.layers) {
            throw UsageError("tap layer " + std::to_string(l) + " outside [1, " + std::to_string(cfg.layers) + "]");
        }
        depth = std::max(depth, l);
    }
    Graph graph;
    ParamNodes params = declare_parameters(graph, cfg, "", false);
    NodeId features = graph.constant(input.values.cast<double>(), "features");
    EncoderNodes nodes = build_encoder_graph(graph, cfg, params, features, mask, depth);
    for (std::size_t l : tap_layers) graph.set_output("tap." + std::to_string(l), nodes.tap(l, kind));

    Execution<float> exec(graph, encoder.parameters());
    TapSet taps;
    taps.kind = kind;
    taps.layers = tap_layers;
    for (std::size_t l : tap_layers) taps.reps.push_back(exec.value(nodes.tap(l, kind)));
    return taps;
}

} // namespace colld
