// SPDX-License-Identifier: Apache-2.0
#include "fedmm/tape.hpp"

#include <utility>

namespace fedmm {

Tape::NodeId Tape::push(Tensor value, std::function<void(Tape&)> back) {
    nodes_.push_back(Node{std::move(value), Tensor{}, std::move(back)});
    return nodes_.size() - 1;
}

Tape::NodeId Tape::leaf(Tensor value) { return push(std::move(value), {}); }

const Tensor& Tape::grad(NodeId id) const {
    if (!consumed_) throw UsageError("tape gradient read before backward()");
    return nodes_[id].grad;
}

Tape::NodeId Tape::conv2d(NodeId input, NodeId weight, NodeId bias, std::size_t stride,
                          std::size_t padding) {
    const ops::Conv2dDims dims =
        ops::conv2d_dims(value(input), value(weight), value(bias), stride, padding);
    Tensor out = ops::conv2d_forward(value(input), value(weight), value(bias), dims);
    const NodeId self = nodes_.size();
    return push(std::move(out), [input, weight, bias, dims, self](Tape& t) {
        ops::conv2d_backward(t.value(input), t.value(weight), dims, t.grad_mut(self),
                             t.grad_mut(input), t.grad_mut(weight), t.grad_mut(bias));
    });
}

Tape::NodeId Tape::relu(NodeId input) {
    Tensor out = ops::relu_forward(value(input));
    const NodeId self = nodes_.size();
    return push(std::move(out), [input, self](Tape& t) {
        ops::relu_backward(t.value(input), t.grad_mut(self), t.grad_mut(input));
    });
}

Tape::NodeId Tape::maxpool2d(NodeId input, std::size_t kernel, std::size_t stride) {
    const ops::Pool2dDims dims = ops::maxpool2d_dims(value(input), kernel, stride);
    std::vector<std::size_t> argmax;
    Tensor out = ops::maxpool2d_forward(value(input), dims, argmax);
    const NodeId self = nodes_.size();
    return push(std::move(out), [input, dims, argmax = std::move(argmax), self](Tape& t) {
        ops::maxpool2d_backward(dims, argmax, t.grad_mut(self), t.grad_mut(input));
    });
}

Tape::NodeId Tape::linear(NodeId input, NodeId weight, NodeId bias) {
    Tensor out = ops::linear_forward(value(input), value(weight), value(bias));
    const NodeId self = nodes_.size();
    return push(std::move(out), [input, weight, bias, self](Tape& t) {
        ops::linear_backward(t.value(input), t.value(weight), t.grad_mut(self), t.grad_mut(input),
                             t.grad_mut(weight), t.grad_mut(bias));
    });
}

Tape::NodeId Tape::flatten_concat(std::span<const NodeId> parts) {
    std::vector<NodeId> ids(parts.begin(), parts.end());
    std::vector<const Tensor*> views;
    views.reserve(ids.size());
    for (NodeId id : ids) views.push_back(&value(id));
    Tensor out = ops::flatten_concat_forward(views);
    const NodeId self = nodes_.size();
    return push(std::move(out), [ids = std::move(ids), self](Tape& t) {
        std::vector<const Tensor*> vals;
        std::vector<Tensor*> grads;
        vals.reserve(ids.size());
        grads.reserve(ids.size());
        for (NodeId id : ids) {
            vals.push_back(&t.value(id));
            grads.push_back(&t.grad_mut(id));
        }
        ops::flatten_concat_backward(vals, t.grad_mut(self), grads);
    });
}

Tape::NodeId Tape::softmax_cross_entropy(NodeId logits, std::span<const int> labels) {
    ops::SoftmaxXentResult res = ops::softmax_xent_forward(value(logits), labels);
    last_xent_correct_ = res.correct;
    const NodeId self = nodes_.size();
    return push(Tensor::scalar(res.loss),
                [logits, softmax = std::move(res.softmax),
                 labels = std::vector<int>(labels.begin(), labels.end()), self](Tape& t) {
                    ops::softmax_xent_backward(softmax, labels, t.grad_mut(self)[0],
                                               t.grad_mut(logits));
                });
}

void Tape::backward(NodeId loss) {
    if (consumed_) throw UsageError("backward() called twice on a consumed tape");
    if (loss >= nodes_.size()) throw UsageError("backward() on unknown node");
    if (nodes_[loss].value.numel() != 1) {
        throw UsageError("backward() requires a scalar loss, got shape " +
                         nodes_[loss].value.shape_str());
    }
    for (Node& n : nodes_) n.grad = Tensor::zeros(n.value.shape());
    nodes_[loss].grad[0] = 1.0;
    consumed_ = true;
    for (std::size_t i = loss + 1; i-- > 0;) {
        if (nodes_[i].back) nodes_[i].back(*this);
    }
}

}  // namespace fedmm
