#pragma once

#include <functional>
#include <vector>

#include "felab/tensor.hpp"

namespace felab::test {

// Central-difference gradient oracle, independent of the tape's backward
// pass. `loss_and_grad` must zero grads, rebuild the graph, run backward and
// return the loss; `loss_only` must rebuild the graph identically (same rng
// draws) and return the loss.
inline double max_grad_rel_err(const std::vector<Tensor*>& params,
                               const std::function<double()>& loss_and_grad,
                               const std::function<double()>& loss_only, double h = 1e-5) {
    loss_and_grad();
    double worst = 0.0;
    for (Tensor* p : params) {
        for (std::size_t i = 0; i < p->numel(); ++i) {
            const double saved = p->values[i];
            const double step = h * std::max(1.0, std::fabs(saved));
            p->values[i] = saved + step;
            const double lp = loss_only();
            p->values[i] = saved - step;
            const double lm = loss_only();
            p->values[i] = saved;
            const double numeric = (lp - lm) / (2.0 * step);
            const double analytic = p->grad.empty() ? 0.0 : p->grad[i];
            const double denom = std::max({std::fabs(numeric), std::fabs(analytic), 1e-3});
            worst = std::max(worst, std::fabs(numeric - analytic) / denom);
        }
    }
    return worst;
}

}  // namespace felab::test
