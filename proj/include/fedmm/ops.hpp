// SPDX-License-Identifier: Apache-2.0
//
// Raw forward/backward kernels for the layer primitives. The autodiff tape
// and the inference path both call these, so the two paths are arithmetically
// identical. All kernels are sequential with a fixed accumulation order;
// results are bit-reproducible.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fedmm/tensor.hpp"

namespace fedmm::ops {

struct Conv2dDims {
    std::size_t batch, in_channels, in_h, in_w;
    std::size_t out_channels, kernel_h, kernel_w;
    std::size_t stride, padding;
    std::size_t out_h, out_w;
};

/// Validates shapes and computes output dims. input [N,C,H,W], weight
/// [F,C,kH,kW], bias [F]. Throws ShapeError / ConfigError.
Conv2dDims conv2d_dims(const Tensor& input, const Tensor& weight, const Tensor& bias,
                       std::size_t stride, std::size_t padding);

Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor& bias,
                      const Conv2dDims& d);

void conv2d_backward(const Tensor& input, const Tensor& weight, const Conv2dDims& d,
                     const Tensor& grad_out, Tensor& grad_input, Tensor& grad_weight,
                     Tensor& grad_bias);

Tensor relu_forward(const Tensor& input);

/// grad_in += grad_out where input > 0 (subgradient 0 at exactly 0).
void relu_backward(const Tensor& input, const Tensor& grad_out, Tensor& grad_input);

struct Pool2dDims {
    std::size_t batch, channels, in_h, in_w;
    std::size_t kernel, stride;
    std::size_t out_h, out_w;
};

Pool2dDims maxpool2d_dims(const Tensor& input, std::size_t kernel, std::size_t stride);

/// argmax holds, per output cell, the flat index into the input plane of the
/// selected element. Ties resolve to the lowest flat index.
Tensor maxpool2d_forward(const Tensor& input, const Pool2dDims& d, std::vector<std::size_t>& argmax);

void maxpool2d_backward(const Pool2dDims& d, const std::vector<std::size_t>& argmax,
                        const Tensor& grad_out, Tensor& grad_input);

/// input [N,D] * weight [D,K] + bias [K] -> [N,K].
Tensor linear_forward(const Tensor& input, const Tensor& weight, const Tensor& bias);

void linear_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out,
                     Tensor& grad_input, Tensor& grad_weight, Tensor& grad_bias);

/// Flattens each part row-major to [N, d_i] and concatenates along dim 1.
/// All parts must share the leading batch dimension.
Tensor flatten_concat_forward(std::span<const Tensor* const> parts);

/// Splits grad_out back into per-part gradients by the same offsets.
void flatten_concat_backward(std::span<const Tensor* const> parts, const Tensor& grad_out,
                             std::span<Tensor* const> grad_parts);

struct SoftmaxXentResult {
    double loss = 0.0;          // mean over the batch
    Tensor softmax;             // [N,K], kept for the backward pass
    std::size_t correct = 0;    // argmax(logits) == label count (ties -> lowest class)
};

/// Mean softmax cross-entropy with max-subtraction. Labels must lie in
/// [0, K); violations raise DataError identifying the row.
SoftmaxXentResult softmax_xent_forward(const Tensor& logits, std::span<const int> labels);

/// grad_logits += upstream * (softmax - onehot) / N.
void softmax_xent_backward(const Tensor& softmax, std::span<const int> labels, double upstream,
                           Tensor& grad_logits);

/// Row-wise argmax with ties broken by lowest class index.
std::vector<int> argmax_rows(const Tensor& logits);

}  // namespace fedmm::ops
