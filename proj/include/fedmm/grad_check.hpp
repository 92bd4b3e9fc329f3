// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fedmm/param_set.hpp"

namespace fedmm {

/// A scalar function of a ParamSet together with its analytic gradient.
struct DifferentiableFn {
    std::function<double(const ParamSet&)> value;
    std::function<ParamSet(const ParamSet&)> gradient;
};

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    std::size_t worst_index = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_err = 0.0;
    double tol = 0.0;
    bool pass = false;

    std::string summary() const;
};

/// Compares the analytic gradient against central differences
/// (f(x + h e_i) - f(x - h e_i)) / 2h for every scalar parameter.
///
/// Relative error uses an absolute floor: |a - n| / max(|a|, |n|, floor),
/// so near-zero components are judged on absolute error. The function must
/// be smooth at `at`; callers keep inputs away from ReLU/maxpool kinks.
GradCheckReport grad_check(const DifferentiableFn& f, const ParamSet& at, double h, double tol,
                           double floor = 1e-4);

}  // namespace fedmm
