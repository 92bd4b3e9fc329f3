// SPDX-License-Identifier: Apache-2.0
#include "fedmm/model.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "fedmm/ops.hpp"

namespace fedmm {

namespace {

const char* kBranchNames[3] = {"image", "spectrogram", "sign"};

struct SpatialDims {
    std::size_t channels, h, w;
};

// Walks one conv (+ optional pool) stage; throws ConfigError naming the
// branch and layer if the shapes stop being feasible.
SpatialDims advance_layer(SpatialDims in, const ConvLayerSpec& layer, const char* branch,
                          std::size_t layer_idx) {
    auto fail = [&](const std::string& why) {
        std::ostringstream os;
        os << branch << " branch conv" << (layer_idx + 1) << ": " << why;
        throw ConfigError(os.str());
    };
    if (layer.out_channels == 0) fail("out_channels must be positive");
    if (layer.kernel == 0) fail("kernel must be positive");
    if (layer.stride == 0) fail("stride must be positive");
    if (in.h + 2 * layer.padding < layer.kernel || in.w + 2 * layer.padding < layer.kernel) {
        fail("kernel " + std::to_string(layer.kernel) + " exceeds padded input " +
             std::to_string(in.h) + "x" + std::to_string(in.w));
    }
    SpatialDims out;
    out.channels = layer.out_channels;
    out.h = (in.h + 2 * layer.padding - layer.kernel) / layer.stride + 1;
    out.w = (in.w + 2 * layer.padding - layer.kernel) / layer.stride + 1;
    if (layer.pool_after) {
        if (out.h < kPoolKernel || out.w < kPoolKernel) {
            fail("pooling window exceeds conv output " + std::to_string(out.h) + "x" +
                 std::to_string(out.w));
        }
        out.h = (out.h - kPoolKernel) / kPoolStride + 1;
        out.w = (out.w - kPoolKernel) / kPoolStride + 1;
    }
    return out;
}

SpatialDims branch_output_dims(const BranchSpec& b, const char* branch) {
    SpatialDims d{b.in_channels, b.in_h, b.in_w};
    for (std::size_t i = 0; i < b.layers.size(); ++i) {
        d = advance_layer(d, b.layers[i], branch, i);
    }
    return d;
}

BranchSpec make_branch(std::size_t in_channels, std::size_t h, std::size_t w,
                       std::vector<ConvLayerSpec> layers) {
    BranchSpec b;
    b.in_channels = in_channels;
    b.in_h = h;
    b.in_w = w;
    b.layers = std::move(layers);
    return b;
}

}  // namespace

std::size_t BranchSpec::flat_width() const {
    const SpatialDims d = branch_output_dims(*this, "?");
    return d.channels * d.h * d.w;
}

ArchSpec ArchSpec::defaults() {
    ArchSpec s;
    s.image = make_branch(1, 28, 28,
                          {{8, 3, 1, 1, true}, {16, 3, 1, 1, true}});
    s.spectrogram = make_branch(1, 64, 64,
                                {{8, 3, 1, 1, false},
                                 {8, 3, 1, 1, false},
                                 {16, 3, 1, 1, true},
                                 {16, 3, 1, 1, true}});
    s.sign = make_branch(1, 64, 64,
                         {{8, 3, 1, 1, true}, {16, 3, 1, 1, true}});
    s.hidden_width = 128;
    s.classes = 10;
    return s;
}

ArchSpec ArchSpec::compact() {
    ArchSpec s;
    s.image = make_branch(1, 28, 28,
                          {{8, 3, 1, 1, true}, {16, 3, 1, 1, true}});
    s.spectrogram = make_branch(1, 64, 64,
                                {{2, 3, 1, 1, false},
                                 {2, 3, 1, 1, false},
                                 {4, 3, 1, 1, true},
                                 {4, 3, 1, 1, true}});
    s.sign = make_branch(1, 64, 64,
                         {{2, 3, 1, 1, true}, {4, 3, 1, 1, true}});
    s.hidden_width = 32;
    s.classes = 10;
    return s;
}

void ArchSpec::validate() const {
    if (classes != 10) {
        throw ConfigError("class count must be 10, got " + std::to_string(classes));
    }
    if (hidden_width == 0) throw ConfigError("fused hidden width must be positive");

    if (image.layers.size() != 2) {
        throw ConfigError("image branch must have exactly 2 conv layers, got " +
                          std::to_string(image.layers.size()));
    }
    if (sign.layers.size() != 2) {
        throw ConfigError("sign branch must have exactly 2 conv layers, got " +
                          std::to_string(sign.layers.size()));
    }
    if (spectrogram.layers.size() != 4) {
        throw ConfigError("spectrogram branch must have exactly 4 conv layers, got " +
                          std::to_string(spectrogram.layers.size()));
    }
    for (std::size_t i = 0; i < 2; ++i) {
        if (!image.layers[i].pool_after) {
            throw ConfigError("image branch conv" + std::to_string(i + 1) +
                              " must be followed by max-pooling");
        }
        if (!sign.layers[i].pool_after) {
            throw ConfigError("sign branch conv" + std::to_string(i + 1) +
                              " must be followed by max-pooling");
        }
    }
    for (std::size_t i = 0; i < 4; ++i) {
        const bool want_pool = i >= 2;
        if (spectrogram.layers[i].pool_after != want_pool) {
            throw ConfigError("spectrogram branch conv" + std::to_string(i + 1) +
                              (want_pool ? " must be followed by max-pooling"
                                         : " must not be followed by max-pooling"));
        }
    }

    // Shape feasibility walk; throws on degenerate configurations.
    branch_output_dims(image, "image");
    branch_output_dims(spectrogram, "spectrogram");
    branch_output_dims(sign, "sign");
}

MultiModalNet::MultiModalNet(ArchSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

namespace {

struct ParamShape {
    std::string name;
    std::vector<std::size_t> shape;
    int branch;  // 0 image, 1 spectrogram, 2 sign, 3 head
    std::size_t fan_in, fan_out;
};

std::vector<ParamShape> layout_of(const ArchSpec& spec) {
    std::vector<ParamShape> out;
    const BranchSpec* branches[3] = {&spec.image, &spec.spectrogram, &spec.sign};
    for (int b = 0; b < 3; ++b) {
        std::size_t in_ch = branches[b]->in_channels;
        for (std::size_t i = 0; i < branches[b]->layers.size(); ++i) {
            const ConvLayerSpec& l = branches[b]->layers[i];
            const std::string base =
                std::string(kBranchNames[b]) + ".conv" + std::to_string(i + 1);
            const std::size_t k2 = l.kernel * l.kernel;
            out.push_back({base + ".weight",
                           {l.out_channels, in_ch, l.kernel, l.kernel},
                           b,
                           in_ch * k2,
                           l.out_channels * k2});
            out.push_back({base + ".bias", {l.out_channels}, b, 0, 0});
            in_ch = l.out_channels;
        }
    }
    const std::size_t fused = spec.fused_width();
    out.push_back({"head.fc1.weight", {fused, spec.hidden_width}, 3, fused, spec.hidden_width});
    out.push_back({"head.fc1.bias", {spec.hidden_width}, 3, 0, 0});
    out.push_back(
        {"head.fc2.weight", {spec.hidden_width, spec.classes}, 3, spec.hidden_width, spec.classes});
    out.push_back({"head.fc2.bias", {spec.classes}, 3, 0, 0});
    return out;
}

}  // namespace

ParamSet MultiModalNet::init_params(std::uint64_t seed) const {
    Rng rng(mix_seed(seed, 40));
    ParamSet params;
    for (const ParamShape& p : layout_of(spec_)) {
        Tensor t(p.shape);
        if (p.fan_in > 0) {
            const double s = std::sqrt(6.0 / static_cast<double>(p.fan_in + p.fan_out));
            double* d = t.data();
            for (std::size_t i = 0; i < t.numel(); ++i) {
                d[i] = (2.0 * rng.next_double() - 1.0) * s;
            }
        }
        params.add(p.name, std::move(t));
    }
    return params;
}

std::size_t MultiModalNet::param_count() const {
    std::size_t n = 0;
    for (const ParamShape& p : layout_of(spec_)) n += Tensor::shape_numel(p.shape);
    return n;
}

bool MultiModalNet::param_in_masked_branch(std::size_t index, const ModalityMask& mask) const {
    const std::vector<ParamShape> layout = layout_of(spec_);
    const int b = layout[index].branch;
    if (b == 0) return !mask.image;
    if (b == 1) return !mask.spectrogram;
    if (b == 2) return !mask.sign;
    return false;
}

Tensor MultiModalNet::pack_modality(std::span<const AlignedSample* const> batch,
                                    int modality) const {
    const BranchSpec& b =
        modality == 0 ? spec_.image : (modality == 1 ? spec_.spectrogram : spec_.sign);
    const std::vector<std::size_t> want = {b.in_channels, b.in_h, b.in_w};
    Tensor out({batch.size(), b.in_channels, b.in_h, b.in_w});
    const std::size_t stride = b.in_channels * b.in_h * b.in_w;
    for (std::size_t n = 0; n < batch.size(); ++n) {
        const Tensor& src = modality == 0   ? batch[n]->image
                            : modality == 1 ? batch[n]->spectrogram
                                            : batch[n]->sign;
        if (src.shape() != want) {
            std::ostringstream os;
            os << kBranchNames[modality] << " modality: sample " << n << " has shape "
               << src.shape_str() << ", expected [" << want[0] << ", " << want[1] << ", "
               << want[2] << "]";
            throw ShapeError(os.str());
        }
        std::copy(src.data(), src.data() + stride, out.data() + n * stride);
    }
    return out;
}

std::vector<int> MultiModalNet::labels_of(std::span<const AlignedSample* const> batch) const {
    std::vector<int> labels(batch.size());
    for (std::size_t n = 0; n < batch.size(); ++n) labels[n] = batch[n]->label;
    return labels;
}

Tensor MultiModalNet::forward(const ParamSet& params, std::span<const AlignedSample* const> batch,
                              const ModalityMask& mask) const {
    if (batch.empty()) throw DataError("forward on an empty batch");
    const std::size_t n = batch.size();

    const bool enabled[3] = {mask.image, mask.spectrogram, mask.sign};
    const BranchSpec* branches[3] = {&spec_.image, &spec_.spectrogram, &spec_.sign};

    std::vector<Tensor> parts;
    parts.reserve(3);
    std::size_t param_idx = 0;
    for (int b = 0; b < 3; ++b) {
        const std::size_t n_layers = branches[b]->layers.size();
        if (!enabled[b]) {
            parts.push_back(Tensor({n, branches[b]->flat_width()}));
            param_idx += 2 * n_layers;
            continue;
        }
        Tensor x = pack_modality(batch, b);
        for (std::size_t i = 0; i < n_layers; ++i) {
            const ConvLayerSpec& l = branches[b]->layers[i];
            const Tensor& w = params.tensor(param_idx++);
            const Tensor& bias = params.tensor(param_idx++);
            const ops::Conv2dDims dims = ops::conv2d_dims(x, w, bias, l.stride, l.padding);
            x = ops::conv2d_forward(x, w, bias, dims);
            x = ops::relu_forward(x);
            if (l.pool_after) {
                std::vector<std::size_t> argmax;
                const ops::Pool2dDims pd = ops::maxpool2d_dims(x, kPoolKernel, kPoolStride);
                x = ops::maxpool2d_forward(x, pd, argmax);
            }
        }
        parts.push_back(std::move(x));
    }

    const Tensor* part_ptrs[3] = {&parts[0], &parts[1], &parts[2]};
    Tensor fused = ops::flatten_concat_forward(std::span<const Tensor* const>(part_ptrs, 3));
    Tensor hidden = ops::linear_forward(fused, params.tensor(param_idx), params.tensor(param_idx + 1));
    hidden = ops::relu_forward(hidden);
    return ops::linear_forward(hidden, params.tensor(param_idx + 2), params.tensor(param_idx + 3));
}

Tensor MultiModalNet::forward(const ParamSet& params, std::span<const AlignedSample> batch,
                              const ModalityMask& mask) const {
    std::vector<const AlignedSample*> ptrs;
    ptrs.reserve(batch.size());
    for (const AlignedSample& s : batch) ptrs.push_back(&s);
    return forward(params, ptrs, mask);
}

double MultiModalNet::loss(const ParamSet& params, std::span<const AlignedSample* const> batch,
                           const ModalityMask& mask) const {
    const Tensor logits = forward(params, batch, mask);
    const std::vector<int> labels = labels_of(batch);
    return ops::softmax_xent_forward(logits, labels).loss;
}

LossGrad MultiModalNet::loss_and_grad(const ParamSet& params,
                                      std::span<const AlignedSample* const> batch,
                                      const ModalityMask& mask) const {
    if (batch.empty()) throw DataError("loss_and_grad on an empty batch");
    const std::size_t n = batch.size();

    Tape tape;
    // Every parameter becomes a leaf so the gradient set always matches the
    // parameter set; leaves of masked branches are simply never used and keep
    // exactly-zero gradients.
    std::vector<Tape::NodeId> param_nodes;
    param_nodes.reserve(params.size());
    for (const ParamSet::Entry& e : params) param_nodes.push_back(tape.leaf(e.tensor));

    const bool enabled[3] = {mask.image, mask.spectrogram, mask.sign};
    const BranchSpec* branches[3] = {&spec_.image, &spec_.spectrogram, &spec_.sign};

    std::vector<Tape::NodeId> parts;
    parts.reserve(3);
    std::size_t param_idx = 0;
    for (int b = 0; b < 3; ++b) {
        const std::size_t n_layers = branches[b]->layers.size();
        if (!enabled[b]) {
            parts.push_back(tape.leaf(Tensor({n, branches[b]->flat_width()})));
            param_idx += 2 * n_layers;
            continue;
        }
        Tape::NodeId x = tape.leaf(pack_modality(batch, b));
        for (std::size_t i = 0; i < n_layers; ++i) {
            const ConvLayerSpec& l = branches[b]->layers[i];
            const Tape::NodeId w = param_nodes[param_idx++];
            const Tape::NodeId bias = param_nodes[param_idx++];
            x = tape.conv2d(x, w, bias, l.stride, l.padding);
            x = tape.relu(x);
            if (l.pool_after) x = tape.maxpool2d(x, kPoolKernel, kPoolStride);
        }
        parts.push_back(x);
    }

    Tape::NodeId fused = tape.flatten_concat(parts);
    Tape::NodeId hidden = tape.linear(fused, param_nodes[param_idx], param_nodes[param_idx + 1]);
    hidden = tape.relu(hidden);
    Tape::NodeId logits =
        tape.linear(hidden, param_nodes[param_idx + 2], param_nodes[param_idx + 3]);

    const std::vector<int> labels = labels_of(batch);
    Tape::NodeId loss_node = tape.softmax_cross_entropy(logits, labels);

    LossGrad out;
    out.loss = tape.value(loss_node)[0];
    out.accuracy = static_cast<double>(tape.last_xent_correct()) / static_cast<double>(n);
    tape.backward(loss_node);
    for (std::size_t i = 0; i < params.size(); ++i) {
        out.grad.add(params.name(i), tape.grad(param_nodes[i]));
    }
    return out;
}

LossGrad MultiModalNet::loss_and_grad(const ParamSet& params, std::span<const AlignedSample> batch,
                                      const ModalityMask& mask) const {
    std::vector<const AlignedSample*> ptrs;
    ptrs.reserve(batch.size());
    for (const AlignedSample& s : batch) ptrs.push_back(&s);
    return loss_and_grad(params, ptrs, mask);
}

}  // namespace fedmm
