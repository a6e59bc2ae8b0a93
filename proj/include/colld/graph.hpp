// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0
//
// Static computation graph over matrices with reverse-mode differentiation.
//
// A Graph records primitive nodes in construction order, which is also a
// valid topological order. It is precision-agnostic: the same graph can be
// evaluated in float (training) or double (gradient checks). Shapes are
// inferred and checked while the graph is built.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "colld/tensor.hpp"

namespace colld {

using NodeId = std::size_t;

enum class OpKind {
    Input,
    Constant,
    Add,
    Mul,
    Scale,
    MatMul,
    Softmax,
    LogSoftmax,
    LayerNorm,
    DepthwiseConv1d,
    Glu,
    Swish,
    CosineRows,
    GatherRows,
    SliceCols,
    ConcatCols,
    Reshape,
    SumAll,
};

std::string_view op_name(OpKind kind);

struct Node {
    OpKind kind = OpKind::Input;
    std::vector<NodeId> inputs;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::string label;

    double scalar = 0.0;              // Scale factor, LayerNorm/cosine epsilon
    bool flag = false;                // MatMul: transpose B. Input: requires grad.
    std::size_t start = 0;            // SliceCols
    std::vector<std::size_t> indices; // GatherRows
    Shape declared_shape;             // Input
    std::shared_ptr<const Tensor<double>> constant;
};

class Graph {
public:
    NodeId input(std::string name, Shape shape, bool requires_grad = true);
    NodeId constant(Tensor<double> value, std::string label = {});

    /// Elementwise sum. `b` may also be a single row broadcast over the rows of `a`.
    NodeId add(NodeId a, NodeId b);
    /// Elementwise product of equal shapes, or `b` a single row broadcast over rows.
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double factor);
    /// a[m,k] * b[k,n], or a[m,k] * b[n,k]^T when `transpose_b`.
    NodeId matmul(NodeId a, NodeId b, bool transpose_b = false);
    NodeId softmax(NodeId a);
    NodeId log_softmax(NodeId a);
    /// Row-wise normalization with affine gamma/beta rows of width cols(x).
    NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps = 1e-5);
    /// Same-padded depthwise convolution along rows (time). w is [kernel, channels].
    NodeId depthwise_conv1d(NodeId x, NodeId w, NodeId bias);
    /// First half of the columns gated by the sigmoid of the second half.
    NodeId glu(NodeId x);
    NodeId swish(NodeId x);
    /// Per-row cosine similarity, result [rows, 1]. Norms get `eps` added.
    NodeId cosine_rows(NodeId a, NodeId b, double eps = 1e-8);
    /// Embedding lookup: out[i] = x[indices[i]].
    NodeId gather_rows(NodeId x, std::vector<std::size_t> indices);
    NodeId slice_cols(NodeId x, std::size_t start, std::size_t count);
    NodeId concat_cols(const std::vector<NodeId>& parts);
    NodeId reshape(NodeId x, std::size_t rows, std::size_t cols);
    NodeId sum_all(NodeId x);

    void set_output(std::string name, NodeId id);
    NodeId output(std::string_view name) const;
    bool has_output(std::string_view name) const;
    const std::vector<std::pair<std::string, NodeId>>& outputs() const { return outputs_; }

    NodeId input_id(std::string_view name) const;
    const std::vector<NodeId>& input_ids() const { return inputs_; }

    const Node& node(NodeId id) const { return nodes_.at(id); }
    std::size_t size() const { return nodes_.size(); }

    /// Human-readable node description used in error messages.
    std::string describe(NodeId id) const;

private:
    NodeId push(Node node);
    const Node& checked(NodeId id) const;

    std::vector<Node> nodes_;
    std::vector<NodeId> inputs_;
    std::unordered_map<std::string, NodeId> input_index_;
    std::vector<std::pair<std::string, NodeId>> outputs_;
};

/// Forward values for every node of a graph. Binding validates input names
/// and shapes; evaluation checks each node for non-finite values.
template <class T>
class Execution {
public:
    Execution(const Graph& graph, const NamedTensors<T>& inputs);

    const Graph& graph() const { return *graph_; }
    const Tensor<T>& value(NodeId id) const { return values_.at(id); }
    const Tensor<T>& value(std::string_view output_name) const {
        return values_.at(graph_->output(output_name));
    }

    /// Called once per node, after its gradient is fully accumulated and
    /// before it is propagated to the node's inputs.
    using GradientHook = std::function<void(NodeId, Tensor<T>&)>;

    /// Reverse pass from a scalar node. Returns gradients for every input
    /// declared with requires_grad, keyed by input name, shaped like the input.
    NamedTensors<T> backward(NodeId output, const GradientHook& hook = {}) const;

private:
    const Graph* graph_;
    std::vector<Tensor<T>> values_;
};

/// Forward values of the requested named outputs (all named outputs if empty).
template <class T>
NamedTensors<T> evaluate(const Graph& graph, const NamedTensors<T>& inputs,
                         const std::vector<std::string>& outputs = {});

/// Reverse-mode gradient of the scalar named output w.r.t. every requires_grad input.
template <class T>
NamedTensors<T> gradient(const Graph& graph, std::string_view output, const NamedTensors<T>& inputs);

struct FiniteDifferenceEntry {
    std::string input;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    bool ok = true;
};

struct FiniteDifferenceReport {
    std::vector<FiniteDifferenceEntry> entries;
    bool ok = true;

    double max_rel_error() const;
};

/// Compares gradient() against fourth-order central differences
/// (f(x-2e) - 8f(x-e) + 8f(x+e) - f(x+2e)) / 12e in double precision.
/// Relative error per element is |g - fd| / max(|g|, |fd|, floor); an input
/// passes when its largest relative error is below `tolerance`.
FiniteDifferenceReport finite_difference_check(const Graph& graph, std::string_view output,
                                               const NamedTensors<double>& inputs, double epsilon,
                                               double tolerance, double floor = 1e-6);

} // namespace colld
