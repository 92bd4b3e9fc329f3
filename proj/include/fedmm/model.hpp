// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedmm/data.hpp"
#include "fedmm/modality.hpp"
#include "fedmm/param_set.hpp"
#include "fedmm/tape.hpp"
#include "fedmm/tensor.hpp"

namespace fedmm {

struct ConvLayerSpec {
    std::size_t out_channels = 8;
    std::size_t kernel = 3;
    std::size_t stride = 1;
    std::size_t padding = 1;
    bool pool_after = false;  // 2x2 stride-2 max pool
};

struct BranchSpec {
    std::size_t in_channels = 1;
    std::size_t in_h = 0;
    std::size_t in_w = 0;
    std::vector<ConvLayerSpec> layers;

    /// Flattened feature width after all conv/pool stages.
    std::size_t flat_width() const;
};

/// Architecture of the three-branch classifier. The branch structure is
/// fixed: the image branch has exactly two conv layers, each ReLU'd and
/// max-pooled; the spectrogram branch has exactly four conv layers, each
/// ReLU'd, with max-pooling after the last two only; the sign branch mirrors
/// the image branch. The fused head is exactly two fully connected layers
/// ending in 10 classes. validate() rejects anything else.
struct ArchSpec {
    BranchSpec image;
    BranchSpec spectrogram;
    BranchSpec sign;
    std::size_t hidden_width = 128;
    std::size_t classes = 10;

    /// Full-size configuration: image 1x28x28 (1->8->16), spectrogram and
    /// sign 1x64x64 (1->8->8->16->16 and 1->8->16), hidden width 128.
    static ArchSpec defaults();

    /// Reduced-width variant with the same structure, for quick desk runs
    /// and tests (1->2->4 style channels, hidden width 32).
    static ArchSpec compact();

    void validate() const;

    std::size_t fused_width() const {
        return image.flat_width() + spectrogram.flat_width() + sign.flat_width();
    }
};

struct LossGrad {
    double loss = 0.0;
    double accuracy = 0.0;  // argmax == label fraction over the batch
    ParamSet grad;
};

inline constexpr std::size_t kPoolKernel = 2;
inline constexpr std::size_t kPoolStride = 2;

/// Three-branch multimodal classifier over AlignedSample batches. Branches
/// disabled by the mask are not evaluated at all: their flattened output is
/// replaced by a zero vector of the same width, so the logits are invariant
/// to the masked inputs and the masked branches' parameters get exactly-zero
/// gradients. Concatenation order is fixed: image, spectrogram, sign.
class MultiModalNet {
public:
    explicit MultiModalNet(ArchSpec spec);

    const ArchSpec& spec() const { return spec_; }

    /// Xavier-uniform weights (s = sqrt(6 / (fan_in + fan_out))), zero
    /// biases; fully determined by the seed.
    ParamSet init_params(std::uint64_t seed) const;

    /// Total scalar parameter count, a pure function of the architecture.
    std::size_t param_count() const;

    /// Inference-path logits [N, classes]; no gradient bookkeeping.
    Tensor forward(const ParamSet& params, std::span<const AlignedSample* const> batch,
                   const ModalityMask& mask) const;
    Tensor forward(const ParamSet& params, std::span<const AlignedSample> batch,
                   const ModalityMask& mask) const;

    /// Mean cross-entropy over the batch (inference path).
    double loss(const ParamSet& params, std::span<const AlignedSample* const> batch,
                const ModalityMask& mask) const;

    /// Mean cross-entropy plus gradients for every parameter entry.
    LossGrad loss_and_grad(const ParamSet& params, std::span<const AlignedSample* const> batch,
                           const ModalityMask& mask) const;
    LossGrad loss_and_grad(const ParamSet& params, std::span<const AlignedSample> batch,
                           const ModalityMask& mask) const;

    /// True if the parameter entry at `index` belongs to a branch the mask
    /// disables.
    bool param_in_masked_branch(std::size_t index, const ModalityMask& mask) const;

private:
    struct ParamLayout;  // names + shapes derived from the architecture

    Tensor pack_modality(std::span<const AlignedSample* const> batch, int modality) const;
    std::vector<int> labels_of(std::span<const AlignedSample* const> batch) const;

    ArchSpec spec_;
};

}  // namespace fedmm
