// SPDX-License-Identifier: Apache-2.0
#include "fedmm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fedmm::ops {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw ShapeError(msg);
}

// Valid output-column range [j_lo, j_hi) for a kernel offset b, so that
// j*stride - padding + b stays inside [0, in_w).
void col_range(std::size_t out_w, std::size_t in_w, std::size_t stride, std::size_t padding,
               std::size_t b, std::size_t& j_lo, std::size_t& j_hi) {
    // smallest j with j*stride + b >= padding
    const std::size_t need = padding > b ? padding - b : 0;
    j_lo = (need + stride - 1) / stride;
    // largest j with j*stride - padding + b <= in_w - 1
    const std::size_t limit = in_w - 1 + padding;
    if (limit < b) {
        j_hi = j_lo;  // empty
        return;
    }
    j_hi = std::min(out_w, (limit - b) / stride + 1);
    j_lo = std::min(j_lo, j_hi);
}

}  // namespace

Conv2dDims conv2d_dims(const Tensor& input, const Tensor& weight, const Tensor& bias,
                       std::size_t stride, std::size_t padding) {
    if (stride == 0) throw ConfigError("conv2d stride must be positive");
    require(input.ndim() == 4, "conv2d input must be [N,C,H,W], got " + input.shape_str());
    require(weight.ndim() == 4, "conv2d weight must be [F,C,kH,kW], got " + weight.shape_str());
    require(bias.ndim() == 1, "conv2d bias must be [F], got " + bias.shape_str());

    Conv2dDims d{};
    d.batch = input.dim(0);
    d.in_channels = input.dim(1);
    d.in_h = input.dim(2);
    d.in_w = input.dim(3);
    d.out_channels = weight.dim(0);
    d.kernel_h = weight.dim(2);
    d.kernel_w = weight.dim(3);
    d.stride = stride;
    d.padding = padding;

    if (weight.dim(1) != d.in_channels) {
        throw ShapeError("conv2d channel mismatch: input " + input.shape_str() + " vs weight " +
                         weight.shape_str());
    }
    if (bias.dim(0) != d.out_channels) {
        throw ShapeError("conv2d bias shape " + bias.shape_str() + " does not match weight " +
                         weight.shape_str());
    }
    if (d.in_h + 2 * padding < d.kernel_h || d.in_w + 2 * padding < d.kernel_w) {
        throw ShapeError("conv2d kernel " + weight.shape_str() + " exceeds padded input " +
                         input.shape_str());
    }
    d.out_h = (d.in_h + 2 * padding - d.kernel_h) / stride + 1;
    d.out_w = (d.in_w + 2 * padding - d.kernel_w) / stride + 1;
    return d;
}

Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor& bias,
                      const Conv2dDims& d) {
    Tensor out({d.batch, d.out_channels, d.out_h, d.out_w});
    const double* in = input.data();
    const double* w = weight.data();
    const double* b = bias.data();
    double* o = out.data();

    const std::size_t in_plane = d.in_h * d.in_w;
    const std::size_t out_plane = d.out_h * d.out_w;

    for (std::size_t n = 0; n < d.batch; ++n) {
        for (std::size_t f = 0; f < d.out_channels; ++f) {
            double* out_base = o + (n * d.out_channels + f) * out_plane;
            const double bf = b[f];
            for (std::size_t idx = 0; idx < out_plane; ++idx) out_base[idx] = bf;

            for (std::size_t c = 0; c < d.in_channels; ++c) {
                const double* in_base = in + (n * d.in_channels + c) * in_plane;
                const double* w_base =
                    w + ((f * d.in_channels + c) * d.kernel_h) * d.kernel_w;
                for (std::size_t a = 0; a < d.kernel_h; ++a) {
                    for (std::size_t bk = 0; bk < d.kernel_w; ++bk) {
                        const double wv = w_base[a * d.kernel_w + bk];
                        std::size_t j_lo, j_hi;
                        col_range(d.out_w, d.in_w, d.stride, d.padding, bk, j_lo, j_hi);
                        if (j_lo >= j_hi) continue;
                        for (std::size_t i = 0; i < d.out_h; ++i) {
                            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(i * d.stride) -
                                                      static_cast<std::ptrdiff_t>(d.padding) +
                                                      static_cast<std::ptrdiff_t>(a);
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.in_h)) continue;
                            const double* in_row = in_base + static_cast<std::size_t>(iy) * d.in_w;
                            double* out_row = out_base + i * d.out_w;
                            if (d.stride == 1) {
                                const double* src = in_row + j_lo + bk - d.padding;
                                for (std::size_t j = j_lo; j < j_hi; ++j) {
                                    out_row[j] += wv * src[j - j_lo];
                                }
                            } else {
                                for (std::size_t j = j_lo; j < j_hi; ++j) {
                                    out_row[j] += wv * in_row[j * d.stride - d.padding + bk];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

void conv2d_backward(const Tensor& input, const Tensor& weight, const Conv2dDims& d,
                     const Tensor& grad_out, Tensor& grad_input, Tensor& grad_weight,
                     Tensor& grad_bias) {
    const double* in = input.data();
    const double* w = weight.data();
    const double* go = grad_out.data();
    double* gin = grad_input.data();
    double* gw = grad_weight.data();
    double* gb = grad_bias.data();

    const std::size_t in_plane = d.in_h * d.in_w;
    const std::size_t out_plane = d.out_h * d.out_w;

    for (std::size_t n = 0; n < d.batch; ++n) {
        for (std::size_t f = 0; f < d.out_channels; ++f) {
            const double* go_base = go + (n * d.out_channels + f) * out_plane;

            double gbf = 0.0;
            for (std::size_t idx = 0; idx < out_plane; ++idx) gbf += go_base[idx];
            gb[f] += gbf;

            for (std::size_t c = 0; c < d.in_channels; ++c) {
                const double* in_base = in + (n * d.in_channels + c) * in_plane;
                double* gin_base = gin + (n * d.in_channels + c) * in_plane;
                const std::size_t w_off = ((f * d.in_channels + c) * d.kernel_h) * d.kernel_w;
                for (std::size_t a = 0; a < d.kernel_h; ++a) {
                    for (std::size_t bk = 0; bk < d.kernel_w; ++bk) {
                        const double wv = w[w_off + a * d.kernel_w + bk];
                        double gwv = 0.0;
                        std::size_t j_lo, j_hi;
                        col_range(d.out_w, d.in_w, d.stride, d.padding, bk, j_lo, j_hi);
                        if (j_lo >= j_hi) continue;
                        for (std::size_t i = 0; i < d.out_h; ++i) {
                            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(i * d.stride) -
                                                      static_cast<std::ptrdiff_t>(d.padding) +
                                                      static_cast<std::ptrdiff_t>(a);
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.in_h)) continue;
                            const double* in_row = in_base + static_cast<std::size_t>(iy) * d.in_w;
                            double* gin_row = gin_base + static_cast<std::size_t>(iy) * d.in_w;
                            const double* go_row = go_base + i * d.out_w;
                            if (d.stride == 1) {
                                const std::size_t shift = j_lo + bk - d.padding;
                                const double* in_src = in_row + shift;
                                double* gin_dst = gin_row + shift;
                                for (std::size_t j = j_lo; j < j_hi; ++j) {
                                    const double g = go_row[j];
                                    gwv += g * in_src[j - j_lo];
                                    gin_dst[j - j_lo] += wv * g;
                                }
                            } else {
                                for (std::size_t j = j_lo; j < j_hi; ++j) {
                                    const std::size_t ix = j * d.stride - d.padding + bk;
                                    const double g = go_row[j];
                                    gwv += g * in_row[ix];
                                    gin_row[ix] += wv * g;
                                }
                            }
                        }
                        gw[w_off + a * d.kernel_w + bk] += gwv;
                    }
                }
            }
        }
    }
}

Tensor relu_forward(const Tensor& input) {
    Tensor out(input.shape());
    const double* in = input.data();
    double* o = out.data();
    const std::size_t n = input.numel();
    for (std::size_t i = 0; i < n; ++i) o[i] = in[i] > 0.0 ? in[i] : 0.0;
    return out;
}

void relu_backward(const Tensor& input, const Tensor& grad_out, Tensor& grad_input) {
    const double* in = input.data();
    const double* go = grad_out.data();
    double* gi = grad_input.data();
    const std::size_t n = input.numel();
    for (std::size_t i = 0; i < n; ++i) {
        if (in[i] > 0.0) gi[i] += go[i];
    }
}

Pool2dDims maxpool2d_dims(const Tensor& input, std::size_t kernel, std::size_t stride) {
    if (kernel == 0 || stride == 0) throw ConfigError("maxpool2d kernel and stride must be positive");
    require(input.ndim() == 4, "maxpool2d input must be [N,C,H,W], got " + input.shape_str());
    Pool2dDims d{};
    d.batch = input.dim(0);
    d.channels = input.dim(1);
    d.in_h = input.dim(2);
    d.in_w = input.dim(3);
    d.kernel = kernel;
    d.stride = stride;
    if (d.in_h < kernel || d.in_w < kernel) {
        throw ShapeError("maxpool2d window " + std::to_string(kernel) + "x" + std::to_string(kernel) +
                         " exceeds input " + input.shape_str());
    }
    d.out_h = (d.in_h - kernel) / stride + 1;
    d.out_w = (d.in_w - kernel) / stride + 1;
    return d;
}

Tensor maxpool2d_forward(const Tensor& input, const Pool2dDims& d,
                         std::vector<std::size_t>& argmax) {
    Tensor out({d.batch, d.channels, d.out_h, d.out_w});
    argmax.assign(out.numel(), 0);
    const double* in = input.data();
    double* o = out.data();

    const std::size_t in_plane = d.in_h * d.in_w;
    std::size_t out_idx = 0;
    for (std::size_t nc = 0; nc < d.batch * d.channels; ++nc) {
        const double* plane = in + nc * in_plane;
        for (std::size_t i = 0; i < d.out_h; ++i) {
            for (std::size_t j = 0; j < d.out_w; ++j) {
                const std::size_t y0 = i * d.stride;
                const std::size_t x0 = j * d.stride;
                // strict > keeps the lowest flat index on ties
                std::size_t best = y0 * d.in_w + x0;
                double best_v = plane[best];
                for (std::size_t a = 0; a < d.kernel; ++a) {
                    const std::size_t row = (y0 + a) * d.in_w + x0;
                    for (std::size_t b = 0; b < d.kernel; ++b) {
                        if (plane[row + b] > best_v) {
                            best_v = plane[row + b];
                            best = row + b;
                        }
                    }
                }
                o[out_idx] = best_v;
                argmax[out_idx] = best;
                ++out_idx;
            }
        }
    }
    return out;
}

void maxpool2d_backward(const Pool2dDims& d, const std::vector<std::size_t>& argmax,
                        const Tensor& grad_out, Tensor& grad_input) {
    const double* go = grad_out.data();
    double* gi = grad_input.data();
    const std::size_t in_plane = d.in_h * d.in_w;
    const std::size_t out_plane = d.out_h * d.out_w;
    for (std::size_t nc = 0; nc < d.batch * d.channels; ++nc) {
        double* gplane = gi + nc * in_plane;
        const double* go_base = go + nc * out_plane;
        const std::size_t* am = argmax.data() + nc * out_plane;
        for (std::size_t idx = 0; idx < out_plane; ++idx) {
            gplane[am[idx]] += go_base[idx];
        }
    }
}

Tensor linear_forward(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    require(input.ndim() == 2, "linear input must be [N,D], got " + input.shape_str());
    require(weight.ndim() == 2, "linear weight must be [D,K], got " + weight.shape_str());
    require(bias.ndim() == 1, "linear bias must be [K], got " + bias.shape_str());
    if (input.dim(1) != weight.dim(0)) {
        throw ShapeError("linear inner dimension mismatch: input " + input.shape_str() +
                         " vs weight " + weight.shape_str());
    }
    if (bias.dim(0) != weight.dim(1)) {
        throw ShapeError("linear bias shape " + bias.shape_str() + " does not match weight " +
                         weight.shape_str());
    }
    const std::size_t n_rows = input.dim(0);
    const std::size_t dim_in = input.dim(1);
    const std::size_t dim_out = weight.dim(1);

    Tensor out({n_rows, dim_out});
    const double* in = input.data();
    const double* w = weight.data();
    const double* b = bias.data();
    double* o = out.data();

    for (std::size_t n = 0; n < n_rows; ++n) {
        double* out_row = o + n * dim_out;
        for (std::size_t k = 0; k < dim_out; ++k) out_row[k] = b[k];
        const double* in_row = in + n * dim_in;
        for (std::size_t d = 0; d < dim_in; ++d) {
            const double x = in_row[d];
            const double* w_row = w + d * dim_out;
            for (std::size_t k = 0; k < dim_out; ++k) out_row[k] += x * w_row[k];
        }
    }
    return out;
}

void linear_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out,
                     Tensor& grad_input, Tensor& grad_weight, Tensor& grad_bias) {
    const std::size_t n_rows = input.dim(0);
    const std::size_t dim_in = input.dim(1);
    const std::size_t dim_out = weight.dim(1);

    const double* in = input.data();
    const double* w = weight.data();
    const double* go = grad_out.data();
    double* gi = grad_input.data();
    double* gw = grad_weight.data();
    double* gb = grad_bias.data();

    for (std::size_t n = 0; n < n_rows; ++n) {
        const double* go_row = go + n * dim_out;
        for (std::size_t k = 0; k < dim_out; ++k) gb[k] += go_row[k];

        const double* in_row = in + n * dim_in;
        double* gi_row = gi + n * dim_in;
        for (std::size_t d = 0; d < dim_in; ++d) {
            const double* w_row = w + d * dim_out;
            double* gw_row = gw + d * dim_out;
            const double x = in_row[d];
            double acc = 0.0;
            for (std::size_t k = 0; k < dim_out; ++k) {
                const double g = go_row[k];
                acc += g * w_row[k];
                gw_row[k] += x * g;
            }
            gi_row[d] += acc;
        }
    }
}

Tensor flatten_concat_forward(std::span<const Tensor* const> parts) {
    if (parts.empty()) throw ShapeError("flatten_concat needs at least one part");
    const std::size_t batch = parts[0]->dim(0);
    std::size_t total = 0;
    for (const Tensor* p : parts) {
        if (p->ndim() < 1 || p->dim(0) != batch) {
            throw ShapeError("flatten_concat batch mismatch: expected leading dim " +
                             std::to_string(batch) + ", got " + p->shape_str());
        }
        total += p->numel() / batch;
    }
    Tensor out({batch, total});
    double* o = out.data();
    for (std::size_t n = 0; n < batch; ++n) {
        std::size_t offset = 0;
        for (const Tensor* p : parts) {
            const std::size_t width = p->numel() / batch;
            const double* src = p->data() + n * width;
            double* dst = o + n * total + offset;
            std::copy(src, src + width, dst);
            offset += width;
        }
    }
    return out;
}

void flatten_concat_backward(std::span<const Tensor* const> parts, const Tensor& grad_out,
                             std::span<Tensor* const> grad_parts) {
    const std::size_t batch = parts[0]->dim(0);
    const std::size_t total = grad_out.dim(1);
    const double* go = grad_out.data();
    for (std::size_t n = 0; n < batch; ++n) {
        std::size_t offset = 0;
        for (std::size_t pi = 0; pi < parts.size(); ++pi) {
            const std::size_t width = parts[pi]->numel() / batch;
            const double* src = go + n * total + offset;
            double* dst = grad_parts[pi]->data() + n * width;
            for (std::size_t k = 0; k < width; ++k) dst[k] += src[k];
            offset += width;
        }
    }
}

SoftmaxXentResult softmax_xent_forward(const Tensor& logits, std::span<const int> labels) {
    require(logits.ndim() == 2, "softmax_cross_entropy logits must be [N,K], got " + logits.shape_str());
    const std::size_t n_rows = logits.dim(0);
    const std::size_t classes = logits.dim(1);
    if (labels.size() != n_rows) {
        throw ShapeError("softmax_cross_entropy got " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(n_rows) + " rows");
    }

    SoftmaxXentResult res;
    res.softmax = Tensor({n_rows, classes});
    const double* x = logits.data();
    double* p = res.softmax.data();

    double loss_sum = 0.0;
    for (std::size_t n = 0; n < n_rows; ++n) {
        const int label = labels[n];
        if (label < 0 || static_cast<std::size_t>(label) >= classes) {
            std::ostringstream os;
            os << "label " << label << " out of range [0, " << classes << ") at row " << n;
            throw DataError(os.str());
        }
        const double* row = x + n * classes;
        double* prow = p + n * classes;

        double max_v = row[0];
        std::size_t arg = 0;
        for (std::size_t k = 1; k < classes; ++k) {
            if (row[k] > max_v) {
                max_v = row[k];
                arg = k;
            }
        }
        if (arg == static_cast<std::size_t>(label)) ++res.correct;

        double denom = 0.0;
        for (std::size_t k = 0; k < classes; ++k) {
            prow[k] = std::exp(row[k] - max_v);
            denom += prow[k];
        }
        const double inv = 1.0 / denom;
        for (std::size_t k = 0; k < classes; ++k) prow[k] *= inv;
        loss_sum += -(row[label] - max_v - std::log(denom));
    }
    res.loss = loss_sum / static_cast<double>(n_rows);
    return res;
}

void softmax_xent_backward(const Tensor& softmax, std::span<const int> labels, double upstream,
                           Tensor& grad_logits) {
    const std::size_t n_rows = softmax.dim(0);
    const std::size_t classes = softmax.dim(1);
    const double* p = softmax.data();
    double* g = grad_logits.data();
    const double scale = upstream / static_cast<double>(n_rows);
    for (std::size_t n = 0; n < n_rows; ++n) {
        const double* prow = p + n * classes;
        double* grow = g + n * classes;
        for (std::size_t k = 0; k < classes; ++k) grow[k] += scale * prow[k];
        grow[labels[n]] -= scale;
    }
}

std::vector<int> argmax_rows(const Tensor& logits) {
    const std::size_t n_rows = logits.dim(0);
    const std::size_t classes = logits.dim(1);
    std::vector<int> out(n_rows);
    const double* x = logits.data();
    for (std::size_t n = 0; n < n_rows; ++n) {
        const double* row = x + n * classes;
        std::size_t best = 0;
        for (std::size_t k = 1; k < classes; ++k) {
            if (row[k] > row[best]) best = k;
        }
        out[n] = static_cast<int>(best);
    }
    return out;
}

}  // namespace fedmm::ops
