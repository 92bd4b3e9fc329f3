// SPDX-License-Identifier: Apache-2.0
#include "fedmm/param_set.hpp"

#include <sstream>

namespace fedmm {

void ParamSet::add(std::string name, Tensor tensor) {
    if (find(name) != nullptr) {
        throw UsageError("duplicate parameter name '" + name + "'");
    }
    entries_.push_back(Entry{std::move(name), std::move(tensor)});
}

const Tensor* ParamSet::find(std::string_view name) const {
    for (const Entry& e : entries_) {
        if (e.name == name) return &e.tensor;
    }
    return nullptr;
}

std::size_t ParamSet::scalar_count() const {
    std::size_t n = 0;
    for (const Entry& e : entries_) n += e.tensor.numel();
    return n;
}

ParamSet ParamSet::zeros_like() const {
    ParamSet out;
    for (const Entry& e : entries_) {
        out.add(e.name, Tensor::zeros(e.tensor.shape()));
    }
    return out;
}

bool ParamSet::compatible_with(const ParamSet& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].name != other.entries_[i].name) return false;
        if (!entries_[i].tensor.same_shape(other.entries_[i].tensor)) return false;
    }
    return true;
}

void ParamSet::check_compatible(const ParamSet& a, const ParamSet& b) {
    if (a.size() != b.size()) {
        std::ostringstream os;
        os << "parameter sets have different entry counts: " << a.size() << " vs " << b.size();
        throw ShapeError(os.str());
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a.name(i) != b.name(i)) {
            throw ShapeError("parameter entry " + std::to_string(i) + " name mismatch: '" +
                             a.name(i) + "' vs '" + b.name(i) + "'");
        }
        if (!a.tensor(i).same_shape(b.tensor(i))) {
            throw ShapeError("parameter '" + a.name(i) + "' shape mismatch: " +
                             a.tensor(i).shape_str() + " vs " + b.tensor(i).shape_str());
        }
    }
}

void ParamSet::add_scaled(const ParamSet& other, double scale) {
    check_compatible(*this, other);
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        double* dst = entries_[i].tensor.data();
        const double* src = other.tensor(i).data();
        const std::size_t n = entries_[i].tensor.numel();
        for (std::size_t k = 0; k < n; ++k) dst[k] += scale * src[k];
    }
}

void ParamSet::scale(double scale) {
    for (Entry& e : entries_) {
        double* dst = e.tensor.data();
        const std::size_t n = e.tensor.numel();
        for (std::size_t k = 0; k < n; ++k) dst[k] *= scale;
    }
}

bool operator==(const ParamSet& a, const ParamSet& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a.name(i) != b.name(i) || !(a.tensor(i) == b.tensor(i))) return false;
    }
    return true;
}

ParamSet sgd_step(const ParamSet& params, const ParamSet& grads, double lr) {
    ParamSet::check_compatible(params, grads);
    ParamSet out = params;
    if (lr == 0.0) return out;
    out.add_scaled(grads, -lr);
    return out;
}

}  // namespace fedmm
