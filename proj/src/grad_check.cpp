// SPDX-License-Identifier: Apache-2.0
#include "fedmm/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fedmm {

GradCheckReport grad_check(const DifferentiableFn& f, const ParamSet& at, double h, double tol,
                           double floor) {
    GradCheckReport report;
    report.tol = tol;

    const ParamSet analytic = f.gradient(at);
    ParamSet::check_compatible(at, analytic);

    ParamSet probe = at;
    for (std::size_t e = 0; e < probe.size(); ++e) {
        GradCheckEntry entry;
        entry.name = probe.name(e);
        Tensor& t = probe.tensor(e);
        for (std::size_t i = 0; i < t.numel(); ++i) {
            const double saved = t[i];
            t[i] = saved + h;
            const double up = f.value(probe);
            t[i] = saved - h;
            const double down = f.value(probe);
            t[i] = saved;

            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic.tensor(e)[i];
            const double denom = std::max({std::abs(a), std::abs(numeric), floor});
            const double rel = std::abs(a - numeric) / denom;
            if (rel >= entry.max_rel_err) {
                entry.max_rel_err = rel;
                entry.worst_index = i;
                entry.analytic_at_worst = a;
                entry.numeric_at_worst = numeric;
            }
        }
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.entries.push_back(std::move(entry));
    }
    report.pass = report.max_rel_err <= tol;
    return report;
}

std::string GradCheckReport::summary() const {
    std::ostringstream os;
    os << (pass ? "pass" : "FAIL") << " (max rel err " << max_rel_err << ", tol " << tol << ")";
    if (!pass) {
        for (const GradCheckEntry& e : entries) {
            if (e.max_rel_err > tol) {
                os << "\n  " << e.name << "[" << e.worst_index << "]: analytic "
                   << e.analytic_at_worst << " vs numeric " << e.numeric_at_worst << " (rel "
                   << e.max_rel_err << ")";
            }
        }
    }
    return os.str();
}

}  // namespace fedmm
