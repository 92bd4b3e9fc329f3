// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>
#include <vector>

#include "fedmm/ops.hpp"
#include "fedmm/tensor.hpp"

namespace fedmm {

/// Reverse-mode autodiff over an append-only record of primitive operations.
///
/// Nodes are recorded in execution order, so walking the record backwards is
/// a reverse topological order and visits each node exactly once. A node may
/// feed several later operations; gradients accumulate. Leaves that no
/// recorded operation reads from the loss keep an exactly-zero gradient.
///
/// A tape is single-use: backward() consumes it.
class Tape {
public:
    using NodeId = std::size_t;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = default;
    Tape& operator=(Tape&&) = default;

    /// Registers an input or parameter tensor.
    NodeId leaf(Tensor value);

    const Tensor& value(NodeId id) const { return nodes_[id].value; }

    /// Gradient of the loss w.r.t. this node. Valid only after backward().
    const Tensor& grad(NodeId id) const;

    std::size_t size() const { return nodes_.size(); }

    NodeId conv2d(NodeId input, NodeId weight, NodeId bias, std::size_t stride,
                  std::size_t padding);
    NodeId relu(NodeId input);
    NodeId maxpool2d(NodeId input, std::size_t kernel, std::size_t stride);
    NodeId linear(NodeId input, NodeId weight, NodeId bias);
    NodeId flatten_concat(std::span<const NodeId> parts);

    /// Scalar mean cross-entropy over the batch. `correct` (argmax == label
    /// count) is exposed via last_xent_correct() for cheap accuracy tracking.
    NodeId softmax_cross_entropy(NodeId logits, std::span<const int> labels);

    std::size_t last_xent_correct() const { return last_xent_correct_; }

    /// Propagates gradients from the scalar loss node back to every leaf.
    /// Throws UsageError if the tape was already consumed or the node is not
    /// a scalar.
    void backward(NodeId loss);

    bool consumed() const { return consumed_; }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(Tape&)> back;  // empty for leaves
    };

    NodeId push(Tensor value, std::function<void(Tape&)> back);
    Tensor& grad_mut(NodeId id) { return nodes_[id].grad; }

    std::vector<Node> nodes_;
    bool consumed_ = false;
    std::size_t last_xent_correct_ = 0;
};

}  // namespace fedmm
