#pragma once

#include <cmath>
#include <vector>

#include "felab/tensor.hpp"

namespace felab {

// Per-tensor Adam state with bias correction.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long t = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState for_tensor(const Tensor& p, double lr_) {
        AdamState s;
        s.m.assign(p.numel(), 0.0);
        s.v.assign(p.numel(), 0.0);
        s.lr = lr_;
        return s;
    }
};

inline void adam_step(Tensor& param, AdamState& state) {
    if (state.m.size() != param.numel() || state.v.size() != param.numel())
        throw ShapeError("adam_step: state does not match parameter shape");
    param.ensure_grad();
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < param.numel(); ++i) {
        const double g = param.grad[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        param.values[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
}

}  // namespace felab
