// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fedmm/tensor.hpp"

namespace fedmm {

/// Named, ordered collection of tensors. Names are unique and the entry
/// order is fixed at construction; all arithmetic preserves it. Two sets are
/// compatible iff names, order and per-entry shapes match exactly.
class ParamSet {
public:
    struct Entry {
        std::string name;
        Tensor tensor;
    };

    ParamSet() = default;

    void add(std::string name, Tensor tensor);

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    const Entry& entry(std::size_t i) const { return entries_[i]; }
    const std::string& name(std::size_t i) const { return entries_[i].name; }
    const Tensor& tensor(std::size_t i) const { return entries_[i].tensor; }
    Tensor& tensor(std::size_t i) { return entries_[i].tensor; }

    const Tensor* find(std::string_view name) const;

    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    /// Total number of scalar parameters across all entries.
    std::size_t scalar_count() const;

    /// Same names/order/shapes, zero-filled tensors.
    ParamSet zeros_like() const;

    bool compatible_with(const ParamSet& other) const;

    /// Throws ShapeError naming the first mismatch.
    static void check_compatible(const ParamSet& a, const ParamSet& b);

    /// this += scale * other. Compatibility checked.
    void add_scaled(const ParamSet& other, double scale);

    /// this *= scale.
    void scale(double scale);

    /// Exact equality of names, order, shapes and values.
    friend bool operator==(const ParamSet& a, const ParamSet& b);

private:
    std::vector<Entry> entries_;
};

/// Returns params - lr * grads without modifying either input.
ParamSet sgd_step(const ParamSet& params, const ParamSet& grads, double lr);

}  // namespace fedmm
