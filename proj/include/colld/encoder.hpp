// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0
//
// Conformer encoder with per-block tap points.
//
// Block layout (pre-norm, residual around every sublayer):
//   x += 0.5 * FFN1(LN(x))
//   x += MHSA(LN(x))
//   x += Conv(LN(x))      pointwise(2D) -> GLU -> depthwise(k) -> LN -> swish -> pointwise(D)
//   f  = 0.5 * FFN2(LN(x))          <- ffn2 tap
//   x  = LN(x + f)                  <- block_output tap
// FFN is Linear(D,F) -> swish -> Linear(F,D). The input projection is one
// affine map from stacked features, followed by mask substitution and
// sinusoidal positions.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "colld/features.hpp"
#include "colld/graph.hpp"
#include "colld/masking.hpp"

namespace colld {

struct EncoderConfig {
    std::size_t layers = 4;
    std::size_t dim = 32;
    std::size_t ffn = 64;
    std::size_t heads = 2;
    std::size_t conv_kernel = 15;
    std::size_t input_dim = 160;
    std::string preset_name;

    /// Throws ConfigError describing the first violated constraint.
    void validate() const;

    friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// Named architectures: "xx-large", "x-large", "large12", "large40" (kernel 31,
/// 160-wide stacked input) and the desk-scale "tiny" / "tiny-student".
EncoderConfig encoder_preset(std::string_view name);
std::vector<std::string> encoder_preset_names();

enum class TapKind { Ffn2, BlockOutput };

std::string_view to_string(TapKind kind);
TapKind tap_kind_from_string(std::string_view name);

using ParameterSet = NamedTensors<float>;

/// Ordered (name, shape) list of every encoder parameter.
std::vector<std::pair<std::string, Shape>> parameter_shapes(const EncoderConfig& config);

class Encoder {
public:
    Encoder() = default;
    /// Validates that `params` holds exactly the tensors parameter_shapes() lists.
    Encoder(EncoderConfig config, ParameterSet params);

    const EncoderConfig& config() const { return config_; }
    const ParameterSet& parameters() const { return params_; }
    ParameterSet& parameters() { return params_; }

    std::size_t parameter_count() const;

private:
    EncoderConfig config_;
    ParameterSet params_;
};

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases 0, norm gains 1.
Encoder build_encoder(const EncoderConfig& config, std::uint64_t seed);

/// Closed-form parameter count; equals build_encoder(config).parameter_count().
std::uint64_t param_count(const EncoderConfig& config);

/// Closed-form per-block parameter count.
std::uint64_t block_param_count(const EncoderConfig& config);

/// Forward multiply-accumulates for `seconds` of audio at the 50 Hz post-stacking
/// rate. Counts affine maps, attention score/context products and convolutions.
double estimate_macs(const EncoderConfig& config, double seconds);

struct TapSet {
    TapKind kind = TapKind::Ffn2;
    std::vector<std::size_t> layers; // 1-based
    std::vector<Tensor<float>> reps; // one [frames, dim] per layer

    const Tensor<float>& at_layer(std::size_t layer) const;
};

// ---------------------------------------------------------------------------
// Graph construction

using ParamNodes = std::map<std::string, NodeId, std::less<>>;

/// Declares every encoder parameter as a graph input named prefix + name.
ParamNodes declare_parameters(Graph& graph, const EncoderConfig& config, const std::string& prefix,
                              bool requires_grad);

struct EncoderNodes {
    std::vector<NodeId> ffn2;         // per built block
    std::vector<NodeId> block_output; // per built block

    NodeId tap(std::size_t layer, TapKind kind) const {
        return kind == TapKind::Ffn2 ? ffn2.at(layer - 1) : block_output.at(layer - 1);
    }
};

/// Builds blocks 1..depth on top of `features` ([frames, input_dim]). When
/// `mask` is non-empty its frames are replaced by the mask embedding after the
/// input projection.
EncoderNodes build_encoder_graph(Graph& graph, const EncoderConfig& config, const ParamNodes& params,
                                 NodeId features, const MaskSpec* mask, std::size_t depth);

/// Self-attention sublayer of block `block` (0-based) applied to x, without
/// its residual: out(LN(x) attended over all frames).
NodeId build_attention_sublayer(Graph& graph, const EncoderConfig& config, const ParamNodes& params,
                                std::size_t block, NodeId x);

/// Sinusoidal positions [frames, dim].
Tensor<double> sinusoidal_positions(std::size_t frames, std::size_t dim);

/// Runs the encoder and returns the requested taps. Pass mask = nullptr for an
/// unmasked (teacher) pass.
TapSet forward_with_taps(const Encoder& encoder, const FeatureSequence& input, const MaskSpec* mask,
                         const std::vector<std::size_t>& tap_layers, TapKind kind);

} // namespace colld
