#pragma once

#include <cmath>
#include <cstdint>

#include "icfsr/model.hpp"

namespace icfsr {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    bool operator==(const AdamConfig&) const = default;
};

/// First/second moment estimates, shape-congruent with the parameters.
template <class T>
struct OptimizerState {
    ParameterSet<T> m;
    ParameterSet<T> v;
    std::int64_t step = 0;

    bool operator==(const OptimizerState&) const = default;
};

template <class T>
OptimizerState<T> make_optimizer_state(const ParameterSet<T>& params) {
    return {ParameterSet<T>(params.config()), ParameterSet<T>(params.config()), 0};
}

/// One bias-corrected Adam update (Kingma & Ba, Algorithm 1).
template <class T>
void adam_update(ParameterSet<T>& params, const Gradients<T>& grads, OptimizerState<T>& state,
                 double lr, const AdamConfig& cfg) {
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
    const T step_size = static_cast<T>(lr / bc1);
    const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
    const T eps = static_cast<T>(cfg.epsilon);
    auto& pt = params.tensors();
    for (std::size_t i = 0; i < pt.size(); ++i) {
        auto& w = pt[i].values;
        const auto& g = grads.tensors()[i].values;
        auto& m = state.m.tensors()[i].values;
        auto& v = state.v.tensors()[i].values;
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = b1 * m[j] + (T(1) - b1) * g[j];
            v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
            w[j] -= step_size * m[j] / (std::sqrt(v[j]) * inv_sqrt_bc2 + eps);
        }
    }
}

}  // namespace icfsr
