// Copyright (c) 2026 The CoLLD Authors
// SPDX-License-Identifier: Apache-2.0

#include "colld/graph.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "colld/kernels.hpp"

namespace colld {

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

std::string_view op_name(OpKind kind) {
    switch (kind) {
    case OpKind::Input: return "input";
    case OpKind::Constant: return "constant";
    case OpKind::Add: return "add";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::MatMul: return "matmul";
    case OpKind::Softmax: return "softmax";
    case OpKind::LogSoftmax: return "log_softmax";
    case OpKind::LayerNorm: return "layer_norm";
    case OpKind::DepthwiseConv1d: return "depthwise_conv1d";
    case OpKind::Glu: return "glu";
    case OpKind::Swish: return "swish";
    case OpKind::CosineRows: return "cosine_rows";
    case OpKind::GatherRows: return "gather_rows";
    case OpKind::SliceCols: return "slice_cols";
    case OpKind::ConcatCols: return "concat_cols";
    case OpKind::Reshape: return "reshape";
    case OpKind::SumAll: return "sum_all";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------
// Construction

namespace {

std::pair<std::size_t, std::size_t> matrix_dims(const Shape& shape) {
    if (shape.size() == 1) return {1, shape[0]};
    std::size_t rows = 1;
    for (std::size_t i = 0; i + 1 < shape.size(); ++i) rows *= shape[i];
    return {rows, shape.back()};
}

std::string dims_str(const Node& n) {
    return "[" + std::to_string(n.rows) + "," + std::to_string(n.cols) + "]";
}

} // namespace

const Node& Graph::checked(NodeId id) const {
    if (id >= nodes_.size()) throw UsageError("node id " + std::to_string(id) + " is not in the graph");
    return nodes_[id];
}

NodeId Graph::push(Node node) {
    for (NodeId in : node.inputs) checked(in);
    nodes_.push_back(std::move(node));
    return nodes_.size() - 1;
}

std::string Graph::describe(NodeId id) const {
    const Node& n = checked(id);
    std::string s = "#" + std::to_string(id) + " " + std::string(op_name(n.kind));
    if (!n.label.empty()) s += " '" + n.label + "'";
    return s;
}

NodeId Graph::input(std::string name, Shape shape, bool requires_grad) {
    if (name.empty()) throw UsageError("graph input needs a name");
    if (input_index_.count(name)) throw ConfigError("duplicate graph input '" + name + "'");
    if (shape.empty() || shape_size(shape) == 0) throw ConfigError("graph input '" + name + "' has empty shape");
    Node n;
    n.kind = OpKind::Input;
    std::tie(n.rows, n.cols) = matrix_dims(shape);
    n.declared_shape = std::move(shape);
    n.flag = requires_grad;
    n.label = name;
    const NodeId id = push(std::move(n));
    inputs_.push_back(id);
    input_index_.emplace(std::move(name), id);
    return id;
}

NodeId Graph::constant(Tensor<double> value, std::string label) {
    Node n;
    n.kind = OpKind::Constant;
    n.rows = value.rows();
    n.cols = value.cols();
    n.label = std::move(label);
    n.constant = std::make_shared<const Tensor<double>>(std::move(value));
    return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
    const Node& na = checked(a);
    const Node& nb = checked(b);
    const bool same = na.rows == nb.rows && na.cols == nb.cols;
    const bool bcast = nb.rows == 1 && nb.cols == na.cols;
    if (!same && !bcast) {
        throw ConfigError("add: shapes " + dims_str(na) + " and " + dims_str(nb) + " do not align");
    }
    Node n;
    n.kind = OpKind::Add;
    n.inputs = {a, b};
    n.rows = na.rows;
    n.cols = na.cols;
    return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
    const Node& na = checked(a);
    const Node& nb = checked(b);
    const bool same = na.rows == nb.rows && na.cols == nb.cols;
    const bool bcast = nb.rows == 1 && nb.cols == na.cols;
    if (!same && !bcast) {
        throw ConfigError("mul: shapes " + dims_str(na) + " and " + dims_str(nb) + " do not align");
    }
    Node n;
    n.kind = OpKind::Mul;
    n.inputs = {a, b};
    n.rows = na.rows;
    n.cols = na.cols;
    return push(std::move(n));
}

NodeId Graph::scale(NodeId a, double factor) {
    const Node& na = checked(a);
    Node n;
    n.kind = OpKind::Scale;
    n.inputs = {a};
    n.rows = na.rows;
    n.cols = na.cols;
    n.scalar = factor;
    return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b, bool transpose_b) {
    const Node& na = checked(a);
    const Node& nb = checked(b);
    const std::size_t inner = transpose_b ? nb.cols : nb.rows;
    if (na.cols != inner) {
        throw ConfigError("matmul: " + dims_str(na) + " x " + dims_str(nb) + (transpose_b ? "^T" : "") +
                          " inner dimensions differ");
    }
    Node n;
    n.kind = OpKind::MatMul;
    n.inputs = {a, b};
    n.rows = na.rows;
    n.cols = transpose_b ? nb.rows : nb.cols;
    n.flag = transpose_b;
    return push(std::move(n));
}

NodeId Graph::softmax(NodeId a) {
    const Node& na = checked(a);
    Node n;
    n.kind = OpKind::Softmax;
    n.inputs = {a};
    n.rows = na.rows;
    n.cols = na.cols;
    return push(std::move(n));
}

NodeId Graph::log_softmax(NodeId a) {
    const Node& na = checked(a);
    Node n;
    n.kind = OpKind::LogSoftmax;
    n.inputs = {a};
    n.rows = na.rows;
    n.cols = na.cols;
    return push(std::move(n));
}

NodeId Graph::layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps) {
    const Node& nx = checked(x);
    const Node& ng = checked(gamma);
    const Node& nb = checked(beta);
    if (ng.rows != 1 || ng.cols != nx.cols || nb.rows != 1 || nb.cols != nx.cols) {
        throw ConfigError("layer_norm: gamma/beta must be [1," + std::to_string(nx.cols) + "]");
    }
    Node n;
    n.kind = OpKind::LayerNorm;
    n.inputs = {x, gamma, beta};
    n.rows = nx.rows;
    n.cols = nx.cols;
    n.scalar = eps;
    return push(std::move(n));
}

NodeId Graph::depthwise_conv1d(NodeId x, NodeId w, NodeId bias) {
    const Node& nx = checked(x);
    const Node& nw = checked(w);
    const Node& nb = checked(bias);
    if (nw.cols != nx.cols || nw.rows % 2 == 0) {
        throw ConfigError("depthwise_conv1d: weight " + dims_str(nw) + " must be [odd kernel," +
                          std::to_string(nx.cols) + "]");
    }
    if (nb.rows != 1 || nb.cols != nx.cols) throw ConfigError("depthwise_conv1d: bias shape " + dims_str(nb));
    Node n;
    n.kind = OpKind::DepthwiseConv1d;
    n.inputs = {x, w, bias};
    n.rows = nx.rows;
    n.cols = nx.cols;
    return push(std::move(n));
}

NodeId Graph::glu(NodeId x) {
    const Node& nx = checked(x);
    if (nx.cols % 2 != 0) throw ConfigError("glu: column count " + std::to_string(nx.cols) + " is odd");
    Node n;
    n.kind = OpKind::Glu;
    n.inputs = {x};
    n.rows = nx.rows;
    n.cols = nx.cols / 2;
    return push(std::move(n));
}

NodeId Graph::swish(NodeId x) {
    const Node& nx = checked(x);
    Node n;
    n.kind = OpKind::Swish;
    n.inputs = {x};
    n.rows = nx.rows;
    n.cols = nx.cols;
    return push(std::move(n));
}

NodeId Graph::cosine_rows(NodeId a, NodeId b, double eps) {
    const Node& na = checked(a);
    const Node& nb = checked(b);
    if (na.rows != nb.rows || na.cols != nb.cols) {
        throw ConfigError("cosine_rows: shapes " + dims_str(na) + " and " + dims_str(nb) + " differ");
    }
    Node n;
    n.kind = OpKind::CosineRows;
    n.inputs = {a, b};
    n.rows = na.rows;
    n.cols = 1;
    n.scalar = eps;
    return push(std::move(n));
}

NodeId Graph::gather_rows(NodeId x, std::vector<std::size_t> indices) {
    const Node& nx = checked(x);
    if (indices.empty()) throw ConfigError("gather_rows: empty index list");
    for (std::size_t i : indices) {
        if (i >= nx.rows) {
            throw ConfigError("gather_rows: index " + std::to_string(i) + " out of range for " + dims_str(nx));
        }
    }
    Node n;
    n.kind = OpKind::GatherRows;
    n.inputs = {x};
    n.rows = indices.size();
    n.cols = nx.cols;
    n.indices = std::move(indices);
    return push(std::move(n));
}

NodeId Graph::slice_cols(NodeId x, std::size_t start, std::size_t count) {
    const Node& nx = checked(x);
    if (count == 0 || start + count > nx.cols) {
        throw ConfigError("slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + count) +
                          ") outside " + dims_str(nx));
    }
    Node n;
    n.kind = OpKind::SliceCols;
    n.inputs = {x};
    n.rows = nx.rows;
    n.cols = count;
    n.start = start;
    return push(std::move(n));
}

NodeId Graph::concat_cols(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw ConfigError("concat_cols: no inputs");
    Node n;
    n.kind = OpKind::ConcatCols;
    n.inputs = parts;
    n.rows = checked(parts[0]).rows;
    for (NodeId p : parts) {
        const Node& np = checked(p);
        if (np.rows != n.rows) throw ConfigError("concat_cols: row counts differ");
        n.cols += np.cols;
    }
    return push(std::move(n));
}

NodeId Graph::reshape(NodeId x, std::size_t rows, std::size_t cols) {
    const Node& nx = checked(x);
    if (rows * cols != nx.rows * nx.cols || rows == 0) {
        throw ConfigError("reshape: " + dims_str(nx) + " cannot become [" + std::to_string(rows) + "," +
                          std::to_string(cols) + "]");
    }
    Node n;
    n.kind = OpKind::Reshape;
    n.inputs = {x};
    n.rows = rows;
    n.cols = cols;
    return push(std::move(n));
}

NodeId Graph::sum_all(NodeId x) {
    checked(x);
    Node n;
    n.kind = OpKind::SumAll;
    n.inputs = {x};
    n.rows = 1;
    n.cols = 1;
    return push(std::move(n));
}

void Graph::set_output(std::string name, NodeId id) {
    checked(id);
    for (auto& [n, existing] : outputs_) {
        if (n == name) {
            existing = id;
            return;
        }
    }
    outputs_.emplace_back(std::move(name), id);
}

NodeId Graph::output(std::string_view name) const {
    for (const auto& [n, id] : outputs_) {
        if (n == name) return id;
    }
    throw UsageError("graph has no output named '" + std::string(name) + "'");
}

bool Graph::has_output(std::string_view name) const {
    return std::any_of(outputs_.begin(), outputs_.end(), [&](const auto& o) { return o.first == name; });
}

NodeId Graph::input_id(std::string_view name) const {
    auto it = input_index_.find(std::string(name));
    if (it == input_index_.end()) throw UsageError("graph has no input named '" + std::string(name) + "'");
    return it->second;
}

// ---------------------------------------------------------------------------
// Forward

namespace {

template <class T>
T sigmoid(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

template <class T>
Tensor<T> forward_node(const Graph& g, const Node& n, const std::vector<Tensor<T>>& v) {
    Tensor<T> out({n.rows, n.cols});
    auto o = out.data();
    switch (n.kind) {
    case OpKind::Input:
    case OpKind::Constant:
        break; // handled by the caller
    case OpKind::Add:
    case OpKind::Mul: {
        const auto& a = v[n.inputs[0]];
        const auto& b = v[n.inputs[1]];
        const bool bcast = b.size() != a.size();
        const bool is_add = n.kind == OpKind::Add;
        for (std::size_t r = 0; r < n.rows; ++r) {
            for (std::size_t c = 0; c < n.cols; ++c) {
                const std::size_t i = r * n.cols + c;
                const T bv = bcast ? b[c] : b[i];
                o[i] = is_add ? a[i] + bv : a[i] * bv;
            }
        }
        break;
    }
    case OpKind::Scale: {
        const auto& a = v[n.inputs[0]];
        const T f = static_cast<T>(n.scalar);
        for (std::size_t i = 0; i < a.size(); ++i) o[i] = a[i] * f;
        break;
    }
    case OpKind::MatMul: {
        const auto& a = v[n.inputs[0]];
        const auto& b = v[n.inputs[1]];
        kernels::GemmDims d{n.rows, n.cols, a.cols(), false, n.flag, false};
        kernels::gemm<T>(a.data(), b.data(), o, d);
        break;
    }
    case OpKind::Softmax:
        kernels::softmax_rows<T>(v[n.inputs[0]].data(), o, n.rows, n.cols);
        break;
    case OpKind::LogSoftmax: {
        const auto& a = v[n.inputs[0]];
        for (std::size_t r = 0; r < n.rows; ++r) {
            auto x = a.row(r);
            T mx = x[0];
            for (T e : x) mx = std::max(mx, e);
            T sum = T(0);
            for (T e : x) sum += std::exp(e - mx);
            const T lse = mx + std::log(sum);
            for (std::size_t c = 0; c < n.cols; ++c) o[r * n.cols + c] = x[c] - lse;
        }
        break;
    }
    case OpKind::LayerNorm:
        kernels::layer_norm_rows<T>(v[n.inputs[0]].data(), v[n.inputs[1]].data(), v[n.inputs[2]].data(), o,
                                    n.rows, n.cols, static_cast<T>(n.scalar));
        break;
    case OpKind::DepthwiseConv1d:
        kernels::depthwise_conv1d<T>(v[n.inputs[0]].data(), v[n.inputs[1]].data(), v[n.inputs[2]].data(), o,
                                     n.rows, n.cols, g.node(n.inputs[1]).rows);
        break;
    case OpKind::Glu: {
        const auto& x = v[n.inputs[0]];
        const std::size_t w = n.cols;
        for (std::size_t r = 0; r < n.rows; ++r) {
            auto xr = x.row(r);
            for (std::size_t c = 0; c < w; ++c) o[r * w + c] = xr[c] * sigmoid(xr[w + c]);
        }
        break;
    }
    case OpKind::Swish: {
        const auto& x = v[n.inputs[0]];
        for (std::size_t i = 0; i < x.size(); ++i) o[i] = x[i] * sigmoid(x[i]);
        break;
    }
    case OpKind::CosineRows: {
        const auto& a = v[n.inputs[0]];
        const auto& b = v[n.inputs[1]];
        const T eps = static_cast<T>(n.scalar);
        for (std::size_t r = 0; r < n.rows; ++r) {
            auto ar = a.row(r);
            auto br = b.row(r);
            T dot = T(0), aa = T(0), bb = T(0);
            for (std::size_t c = 0; c < ar.size(); ++c) {
                dot += ar[c] * br[c];
                aa += ar[c] * ar[c];
                bb += br[c] * br[c];
            }
            o[r] = dot / ((std::sqrt(aa) + eps) * (std::sqrt(bb) + eps));
        }
        break;
    }
    case OpKind::GatherRows: {
        const auto& x = v[n.inputs[0]];
        for (std::size_t r = 0; r < n.rows; ++r) {
            auto src = x.row(n.indices[r]);
            std::copy(src.begin(), src.end(), o.begin() + static_cast<std::ptrdiff_t>(r * n.cols));
        }
        break;
    }
    case OpKind::SliceCols: {
        const auto& x = v[n.inputs[0]];
        for (std::size_t r = 0; r < n.rows; ++r) {
            auto src = x.row(r).subspan(n.start, n.cols);
            std::copy(src.begin(), src.end(), o.begin() + static_cast<std::ptrdiff_t>(r * n.cols));
        }
        break;
    }
    case OpKind::ConcatCols: {
        std::size_t offset = 0;
        for (NodeId p : n.inputs) {
            const auto& x = v[p];
            for (std::size_t r = 0; r < n.rows; ++r) {
                auto src = x.row(r);
                std::copy(src.begin(), src.end(), o.begin() + static_cast<std::ptrdiff_t>(r * n.cols + offset));
            }
            offset += x.cols();
        }
        break;
    }
    case OpKind::Reshape: {
        const auto& x = v[n.inputs[0]];
        std::copy(x.data().begin(), x.data().end(), o.begin());
        break;
    }
    case OpKind::SumAll: {
        T s = T(0);
        for (T e : v[n.inputs[0]].data()) s += e;
        o[0] = s;
        break;
    }
    }
    return out;
}

} // namespace

template <class T>
Execution<T>::Execution(const Graph& graph, const NamedTensors<T>& inputs) : graph_(&graph) {
    values_.resize(graph.size());
    for (NodeId id = 0; id < graph.size(); ++id) {
        const Node& n = graph.node(id);
        if (n.kind == OpKind::Input) {
            auto it = inputs.find(n.label);
            if (it == inputs.end()) throw ConfigError("graph input '" + n.label + "' is not bound");
            if (it->second.shape() != n.declared_shape) {
                throw ConfigError("graph input '" + n.label + "' expects shape " + shape_str(n.declared_shape) +
                                  ", got " + shape_str(it->second.shape()));
            }
            values_[id] = it->second;
        } else if (n.kind == OpKind::Constant) {
            values_[id] = n.constant->template cast<T>();
        } else {
            values_[id] = forward_node<T>(graph, n, values_);
        }
        if (!values_[id].all_finite()) {
            throw NumericError("non-finite value at node " + graph.describe(id));
        }
    }
}

// ---------------------------------------------------------------------------
// Backward

template <class T>
NamedTensors<T> Execution<T>::backward(NodeId output, const GradientHook& hook) const {
    const Graph& g = *graph_;
    const Node& out_node = g.node(output);
    if (out_node.rows * out_node.cols != 1) {
        throw UsageError("gradient requires a scalar output, node " + g.describe(output) + " is [" +
                         std::to_string(out_node.rows) + "," + std::to_string(out_node.cols) + "]");
    }

    std::vector<char> needs(g.size(), 0);
    for (NodeId id = 0; id <= output; ++id) {
        const Node& n = g.node(id);
        if (n.kind == OpKind::Input) {
            needs[id] = n.flag;
        } else {
            for (NodeId in : n.inputs) needs[id] = needs[id] || needs[in];
        }
    }

    std::vector<Tensor<T>> grads(g.size());
    auto grad_of = [&](NodeId id) -> Tensor<T>& {
        if (grads[id].empty()) grads[id] = Tensor<T>({g.node(id).rows, g.node(id).cols});
        return grads[id];
    };
    grad_of(output)[0] = T(1);

    for (NodeId id = output + 1; id-- > 0;) {
        if (!needs[id] || grads[id].empty()) continue;
        const Node& n = g.node(id);
        Tensor<T>& gout = grads[id];
        if (hook) hook(id, gout);
        const auto gv = gout.data();
        auto want = [&](std::size_t k) { return needs[n.inputs[k]] != 0; };

        switch (n.kind) {
        case OpKind::Input:
        case OpKind::Constant:
            break;
        case OpKind::Add:
        case OpKind::Mul: {
            const auto& a = values_[n.inputs[0]];
            const auto& b = values_[n.inputs[1]];
            const bool bcast = b.size() != a.size();
            const bool is_add = n.kind == OpKind::Add;
            if (want(0)) {
                auto ga = grad_of(n.inputs[0]).data();
                for (std::size_t r = 0; r < n.rows; ++r) {
                    for (std::size_t c = 0; c < n.cols; ++c) {
                        const std::size_t i = r * n.cols + c;
                        ga[i] += is_add ? gv[i] : gv[i] * (bcast ? b[c] : b[i]);
                    }
                }
            }
            if (want(1)) {
                auto gb = grad_of(n.inputs[1]).data();
                for (std::size_t r = 0; r < n.rows; ++r) {
                    for (std::size_t c = 0; c < n.cols; ++c) {
                        const std::size_t i = r * n.cols + c;
                        gb[bcast ? c : i] += is_add ? gv[i] : gv[i] * a[i];
                    }
                }
            }
            break;
        }
        case OpKind::Scale: {
            auto ga = grad_of(n.inputs[0]).data();
            const T f = static_cast<T>(n.scalar);
            for (std::size_t i = 0; i < gv.size(); ++i) ga[i] += gv[i] * f;
            break;
        }
        case OpKind::MatMul: {
            const auto& a = values_[n.inputs[0]];
            const auto& b = values_[n.inputs[1]];
            const std::size_t m = n.rows, nc = n.cols, k = a.cols();
            if (want(0)) {
                // dA = G * B^T (or G * B when B was transposed)
                kernels::GemmDims d{m, k, nc, false, !n.flag, true};
                kernels::gemm<T>(gout.data(), b.data(), grad_of(n.inputs[0]).data(), d);
            }
            if (want(1)) {
                if (n.flag) {
                    // B stored [nc,k]: dB = G^T * A
                    kernels::GemmDims d{nc, k, m, true, false, true};
                    kernels::gemm<T>(gout.data(), a.data(), grad_of(n.inputs[1]).data(), d);
                } else {
                    // dB = A^T * G
                    kernels::GemmDims d{k, nc, m, true, false, true};
                    kernels::gemm<T>(a.data(), gout.data(), grad_of(n.inputs[1]).data(), d);
                }
            }
            break;
        }
        case OpKind::Softmax: {
            const auto& y = values_[id];
            auto gx = grad_of(n.inputs[0]).data();
            for (std::size_t r = 0; r < n.rows; ++r) {
                T dot = T(0);
                for (std::size_t c = 0; c < n.cols; ++c) dot += gv[r * n.cols + c] * y(r, c);
                for (std::size_t c = 0; c < n.cols; ++c) gx[r * n.cols + c] += y(r, c) * (gv[r * n.cols + c] - dot);
            }
            break;
        }
        case OpKind::LogSoftmax: {
            const auto& y = values_[id];
            auto gx = grad_of(n.inputs[0]).data();
            for (std::size_t r = 0; r < n.rows; ++r) {
                T sum = T(0);
                for (std::size_t c = 0; c < n.cols; ++c) sum += gv[r * n.cols + c];
                for (std::size_t c = 0; c < n.cols; ++c) {
                    gx[r * n.cols + c] += gv[r * n.cols + c] - std::exp(y(r, c)) * sum;
                }
            }
            break;
        }
        case OpKind::LayerNorm: {
            const auto& x = values_[n.inputs[0]];
            const auto& gamma = values_[n.inputs[1]];
            const T eps = static_cast<T>(n.scalar);
            const std::size_t w = n.cols;
            std::vector<T> xhat(w), gxh(w);
            for (std::size_t r = 0; r < n.rows; ++r) {
                auto xr = x.row(r);
                T mean = T(0);
                for (T e : xr) mean += e;
                mean /= T(w);
                T var = T(0);
                for (T e : xr) var += (e - mean) * (e - mean);
                var /= T(w);
                const T inv = T(1) / std::sqrt(var + eps);
                T mean_g = T(0), mean_gx = T(0);
                for (std::size_t c = 0; c < w; ++c) {
                    xhat[c] = (xr[c] - mean) * inv;
                    gxh[c] = gv[r * w + c] * gamma[c];
                    mean_g += gxh[c];
                    mean_gx += gxh[c] * xhat[c];
                }
                mean_g /= T(w);
                mean_gx /= T(w);
                if (want(0)) {
                    auto gx = grad_of(n.inputs[0]).row(r);
                    for (std::size_t c = 0; c < w; ++c) gx[c] += inv * (gxh[c] - mean_g - xhat[c] * mean_gx);
                }
                if (want(1)) {
                    auto gg = grad_of(n.inputs[1]).data();
                    for (std::size_t c = 0; c < w; ++c) gg[c] += gv[r * w + c] * xhat[c];
                }
                if (want(2)) {
                    auto gb = grad_of(n.inputs[2]).data();
                    for (std::size_t c = 0; c < w; ++c) gb[c] += gv[r * w + c];
                }
            }
            break;
        }
        case OpKind::DepthwiseConv1d: {
            const auto& x = values_[n.inputs[0]];
            const auto& w = values_[n.inputs[1]];
            const std::size_t kernel = w.rows(), ch = n.cols;
            const auto pad = static_cast<std::ptrdiff_t>(kernel / 2);
            const auto frames = static_cast<std::ptrdiff_t>(n.rows);
            const bool gx_on = want(0), gw_on = want(1);
            std::span<T> gx = gx_on ? grad_of(n.inputs[0]).data() : std::span<T>();
            std::span<T> gw = gw_on ? grad_of(n.inputs[1]).data() : std::span<T>();
            for (std::ptrdiff_t t = 0; t < frames; ++t) {
                for (std::size_t j = 0; j < kernel; ++j) {
                    const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(j) - pad;
                    if (src < 0 || src >= frames) continue;
                    for (std::size_t c = 0; c < ch; ++c) {
                        const T go = gv[static_cast<std::size_t>(t) * ch + c];
                        if (gx_on) gx[static_cast<std::size_t>(src) * ch + c] += w(j, c) * go;
                        if (gw_on) gw[j * ch + c] += x(static_cast<std::size_t>(src), c) * go;
                    }
                }
            }
            if (want(2)) {
                auto gb = grad_of(n.inputs[2]).data();
                for (std::size_t r = 0; r < n.rows; ++r)
                    for (std::size_t c = 0; c < ch; ++c) gb[c] += gv[r * ch + c];
            }
            break;
        }
        case OpKind::Glu: {
            const auto& x = values_[n.inputs[0]];
            auto gx = grad_of(n.inputs[0]).data();
            const std::size_t w = n.cols;
            for (std::size_t r = 0; r < n.rows; ++r) {
                for (std::size_t c = 0; c < w; ++c) {
                    const T a = x(r, c);
                    const T s = sigmoid(x(r, w + c));
                    const T go = gv[r * w + c];
                    gx[r * 2 * w + c] += go * s;
                    gx[r * 2 * w + w + c] += go * a * s * (T(1) - s);
                }
            }
            break;
        }
        case OpKind::Swish: {
            const auto& x = values_[n.inputs[0]];
            auto gx = grad_of(n.inputs[0]).data();
            for (std::size_t i = 0; i < gv.size(); ++i) {
                const T s = sigmoid(x[i]);
                gx[i] += gv[i] * (s + x[i] * s * (T(1) - s));
            }
            break;
        }
        case OpKind::CosineRows: {
            const auto& a = values_[n.inputs[0]];
            const auto& b = values_[n.inputs[1]];
            const auto& y = values_[id];
            const T eps = static_cast<T>(n.scalar);
            const std::size_t w = a.cols();
            for (std::size_t r = 0; r < n.rows; ++r) {
                auto ar = a.row(r);
                auto br = b.row(r);
                T aa = T(0), bb = T(0);
                for (std::size_t c = 0; c < w; ++c) {
                    aa += ar[c] * ar[c];
                    bb += br[c] * br[c];
                }
                const T na = std::sqrt(aa), nb = std::sqrt(bb);
                const T denom = (na + eps) * (nb + eps);
                const T cos = y[r];
                const T go = gv[r];
                // d cos / da = b / denom - cos * a / (|a| (|a| + eps)); the second term vanishes at a = 0.
                if (want(0)) {
                    auto ga = grad_of(n.inputs[0]).row(r);
                    const T ka = na > T(0) ? cos / (na * (na + eps)) : T(0);
                    for (std::size_t c = 0; c < w; ++c) ga[c] += go * (br[c] / denom - ka * ar[c]);
                }
                if (want(1)) {
                    auto gb = grad_of(n.inputs[1]).row(r);
                    const T kb = nb > T(0) ? cos / (nb * (nb + eps)) : T(0);
                    for (std::size_t c = 0; c < w; ++c) gb[c] += go * (ar[c] / denom - kb * br[c]);
                }
            }
            break;
        }
        case OpKind::GatherRows: {
            auto& gx = grad_of(n.inputs[0]);
            for (std::size_t r = 0; r < n.rows; ++r) {
                auto dst = gx.row(n.indices[r]);
                for (std::size_t c = 0; c < n.cols; ++c) dst[c] += gv[r * n.cols + c];
            }
            break;
        }
        case OpKind::SliceCols: {
            auto& gx = grad_of(n.inputs[0]);
            for (std::size_t r = 0; r < n.rows; ++r) {
                auto dst = gx.row(r);
                for (std::size_t c = 0; c < n.cols; ++c) dst[n.start + c] += gv[r * n.cols + c];
            }
            break;
        }
        case OpKind::ConcatCols: {
            std::size_t offset = 0;
            for (std::size_t k = 0; k < n.inputs.size(); ++k) {
                const std::size_t w = g.node(n.inputs[k]).cols;
                if (want(k)) {
                    auto& gx = grad_of(n.inputs[k]);
                    for (std::size_t r = 0; r < n.rows; ++r) {
                        auto dst = gx.row(r);
                        for (std::size_t c = 0; c < w; ++c) dst[c] += gv[r * n.cols + offset + c];
                    }
                }
                offset += w;
            }
            break;
        }
        case OpKind::Reshape: {
            auto gx = grad_of(n.inputs[0]).data();
            for (std::size_t i = 0; i < gv.size(); ++i) gx[i] += gv[i];
            break;
        }
        case OpKind::SumAll: {
            auto gx = grad_of(n.inputs[0]).data();
            for (auto& e : gx) e += gv[0];
            break;
        }
        }
    }

    NamedTensors<T> result;
    for (NodeId id : g.input_ids()) {
        const Node& n = g.node(id);
        if (!n.flag) continue;
        Tensor<T> gr = grads[id].empty() ? Tensor<T>(n.declared_shape) : grads[id].reshaped(n.declared_shape);
        result.emplace(n.label, std::move(gr));
    }
    return result;
}

template <class T>
NamedTensors<T> evaluate(const Graph& graph, const NamedTensors<T>& inputs, const std::vector<std::string>& outputs) {
    Execution<T> exec(graph, inputs);
    NamedTensors<T> result;
    if (outputs.empty()) {
        for (const auto& [name, id] : graph.outputs()) result.emplace(name, exec.value(id));
    } else {
        for (const auto& name : outputs) result.emplace(name, exec.value(graph.output(name)));
    }
    return result;
}

template <class T>
NamedTensors<T> gradient(const Graph& graph, std::string_view output, const NamedTensors<T>& inputs) {
    const NodeId out = graph.output(output);
    const Node& n = graph.node(out);
    if (n.rows * n.cols != 1) {
        throw UsageError("gradient requires a scalar output, '" + std::string(output) + "' is [" +
                         std::to_string(n.rows) + "," + std::to_string(n.cols) + "]");
    }
    Execution<T> exec(graph, inputs);
    return exec.backward(out);
}

template class Execution<float>;
template class Execution<double>;
template NamedTensors<float> evaluate(const Graph&, const NamedTensors<float>&, const std::vector<std::string>&);
template NamedTensors<double> evaluate(const Graph&, const NamedTensors<double>&, const std::vector<std::string>&);
template NamedTensors<float> gradient(const Graph&, std::string_view, const NamedTensors<float>&);
template NamedTensors<double> gradient(const Graph&, std::string_view, const NamedTensors<double>&);

// ---------------------------------------------------------------------------
// Finite differences

double FiniteDifferenceReport::max_rel_error() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_error);
    return m;
}

FiniteDifferenceReport finite_difference_check(const Graph& graph, std::string_view output,
                                               const NamedTensors<double>& inputs, double epsilon,
                                               double tolerance, double floor) {
    if (!(epsilon > 0.0)) throw UsageError("finite_difference_check: epsilon must be positive");
    const NodeId out = graph.output(output);
    const NamedTensors<double> analytic = gradient<double>(graph, output, inputs);

    FiniteDifferenceReport report;
    NamedTensors<double> probe = inputs;
    for (const auto& [name, grad] : analytic) {
        FiniteDifferenceEntry entry;
        entry.input = name;
        Tensor<double>& x = probe.find(name)->second;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double orig = x[i];
            auto at = [&](double offset) {
                x[i] = orig + offset;
                return Execution<double>(graph, probe).value(out)[0];
            };
            const double p1 = at(epsilon), m1 = at(-epsilon), p2 = at(2.0 * epsilon), m2 = at(-2.0 * epsilon);
            x[i] = orig;
            const double fd = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * epsilon);
            const double err = std::abs(fd - grad[i]);
            const double denom = std::max({std::abs(fd), std::abs(grad[i]), floor});
            entry.max_abs_error = std::max(entry.max_abs_error, err);
            entry.max_rel_error = std::max(entry.max_rel_error, err / denom);
        }
        entry.ok = entry.max_rel_error < tolerance;
        report.ok = report.ok && entry.ok;
        report.entries.push_back(std::move(entry));
    }
    return report;
}

} // namespace colld
