#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "fast/tensor.hpp"

namespace fast {

using NodeId = std::size_t;

enum class Op {
    Leaf,
    Add,
    Sub,
    Scale,
    Matmul,    // a (m x k) * b (k x n)
    MatmulNT,  // a (m x k) * b(n x k)^T
    Relu,
    Gelu,
    Abs,
    SoftmaxRows,
    LogSoftmaxRows,
    LayerNorm,
    GatherRows,
    SliceCols,
    ConcatCols,
    Pick,
    Sum,
    NllRows,
    KlDivergence,
};

// Gradients keyed by node id, populated by Tape::backward. Nodes that do not
// require gradients (frozen leaves and anything downstream-only of them) have
// no entry.
class GradMap {
public:
    explicit GradMap(std::size_t n) : grads_(n) {}

    const Tensor* find(NodeId id) const {
        if (id >= grads_.size() || !grads_[id].has_value()) return nullptr;
        return &*grads_[id];
    }

    const Tensor& at(NodeId id) const {
        const Tensor* g = find(id);
        if (!g) throw UsageError("no gradient recorded for node " + std::to_string(id));
        return *g;
    }

    Tensor& slot(NodeId id, const std::vector<std::size_t>& shape) {
        if (!grads_[id].has_value()) grads_[id].emplace(Tensor(shape));
        return *grads_[id];
    }

private:
    std::vector<std::optional<Tensor>> grads_;
};

// Reverse-mode autodiff tape. Nodes are appended during the forward pass
// (define-by-run), so ids are already a topological order. backward() is
// const: gradients live in the returned GradMap and the tape stays reusable
// read-only.
class Tape {
public:
    struct Node {
        Op op = Op::Leaf;
        std::vector<NodeId> inputs;
        Tensor value;
        std::vector<Tensor> saved;       // extra activations needed by backward
        std::vector<std::size_t> idx;    // row/col indices for gather/slice/pick
        double c = 0.0;                  // constant payload for Scale
        bool needs_grad = false;
    };

    NodeId leaf(Tensor value, bool trainable = false);
    NodeId constant(Tensor value) { return leaf(std::move(value), false); }

    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId scale(NodeId a, double c);
    NodeId matmul(NodeId a, NodeId b);
    NodeId matmul_nt(NodeId a, NodeId b);
    NodeId relu(NodeId a);
    NodeId gelu(NodeId a);
    NodeId abs(NodeId a);
    NodeId softmax_rows(NodeId a);
    NodeId log_softmax_rows(NodeId a);
    NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps = 1e-5);
    NodeId gather_rows(NodeId table, std::vector<std::size_t> rows);
    NodeId slice_cols(NodeId a, std::size_t start, std::size_t count);
    NodeId concat_cols(const std::vector<NodeId>& parts);
    NodeId pick(NodeId a, std::size_t flat_index);
    NodeId sum(NodeId a);
    // Mean over rows i of -log_probs[i, targets[i]]; input is log-softmax output.
    NodeId nll_rows(NodeId log_probs, std::vector<std::size_t> targets);
    // KL(p || q) = sum_i p_i ln(p_i / q_i) with the 0 ln 0 = 0 convention and a
    // 1e-12 floor on q (documented part of the loss contract). Both inputs must
    // be probability vectors (nonnegative, sum within 1e-9 of 1).
    NodeId kl_divergence(NodeId p, NodeId q);

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    const Node& node(NodeId id) const { return nodes_[id]; }
    std::size_t size() const { return nodes_.size(); }
    bool needs_grad(NodeId id) const { return nodes_[id].needs_grad; }

    GradMap backward(NodeId root) const;

    static constexpr double kKlFloor = 1e-12;

private:
    NodeId push(Node n);
    const Tensor& val(NodeId id) const { return nodes_[id].value; }

    std::vector<Node> nodes_;
};

} // namespace fast
