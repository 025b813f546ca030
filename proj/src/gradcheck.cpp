#include "dmflow/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "dmflow/error.hpp"

namespace dmflow {

double check_gradients(const LossFn& loss_fn, std::span<Parameter* const> params, double step,
                       int64_t max_entries_per_param) {
    require(step > 0.0, "invalid_arg", "check_gradients: step must be positive");

    for (Parameter* p : params) {
        p->grad.fill(0.0);
    }
    const double f_ref = loss_fn(true);
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (Parameter* p : params) {
        analytic.push_back(p->grad);
    }
    const double f_repeat = loss_fn(false);
    require(f_ref == f_repeat, "nondeterministic_loss",
            "check_gradients: loss function is not deterministic");

    double max_rel = 0.0;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        const int64_t n = p.value.size();
        int64_t checks = (max_entries_per_param < 0) ? n : std::min<int64_t>(n, max_entries_per_param);
        for (int64_t c = 0; c < checks; ++c) {
            // deterministic strided sample when not checking everything
            const int64_t i = (checks == n) ? c : (c * n) / checks;
            const double saved = p.value[i];
            p.value[i] = saved + step;
            const double fp = loss_fn(false);
            p.value[i] = saved - step;
            const double fm = loss_fn(false);
            p.value[i] = saved;
            const double fd = (fp - fm) / (2.0 * step);
            const double rel = std::abs(analytic[pi][i] - fd) / std::max(std::abs(fd), 1e-8);
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

} // namespace dmflow
