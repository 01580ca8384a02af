#pragma once

#include <cmath>
#include <vector>

#include "icfsr/error.hpp"
#include "icfsr/resample.hpp"
#include "icfsr/tensor.hpp"

namespace icfsr {

/// Per-scale contribution to a multi-scale loss.
struct ScaleLoss {
    int scale = 0;
    double l_cons = 0.0;
    double l_color = 0.0;
};

struct LossReport {
    double l_cons = 0.0;
    double l_color = 0.0;
    double l_total = 0.0;
    double lambda_color = 0.0;
    std::vector<ScaleLoss> per_scale;
};

inline double total_loss(double l_cons, double l_color, double lambda_color) {
    return l_cons + lambda_color * l_color;
}

namespace detail {

template <class T>
T sign_or_zero(T v) {
    return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));
}

/// mean |a - b|; if grad is non-null, adds weight * d/da into it.
template <class T>
double mean_l1(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>* grad = nullptr,
               double weight = 1.0) {
    detail::require(a.same_shape(b), "L1 operands differ in shape: " + shape_string(a) + " vs " +
                                 shape_string(b));
    if (a.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        sum += std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]));
    if (grad) {
        if (grad->empty()) *grad = Tensor<T>(a.channels, a.height, a.width);
        const T g = static_cast<T>(weight / static_cast<double>(a.size()));
        for (std::size_t i = 0; i < a.size(); ++i)
            grad->data[i] += g * sign_or_zero(a.data[i] - b.data[i]);
    }
    return sum / static_cast<double>(a.size());
}

/// Adjoint of avg_pool(x, s, s): spreads g / s^2 back over each block.
template <class T>
void avg_pool_adjoint_add(const Tensor<T>& g, int s, Tensor<T>& out) {
    const T inv = static_cast<T>(1.0 / (static_cast<double>(s) * s));
    for (int c = 0; c < g.channels; ++c)
        for (int y = 0; y < g.height; ++y)
            for (int x = 0; x < g.width; ++x) {
                const T v = g(c, y, x) * inv;
                for (int dy = 0; dy < s; ++dy) {
                    T* row = &out(c, y * s + dy, x * s);
                    for (int dx = 0; dx < s; ++dx) row[dx] += v;
                }
            }
}

}  // namespace detail

/// Up-down/down-up reconstruction error: mean|x_hat - x| + mean|x_check - x|.
/// Gradients (scaled by `weight`) are added into the optional outputs; the
/// L1 kink contributes subgradient 0.
template <class T>
double consistency_loss(const Tensor<T>& x_hat, const Tensor<T>& x_check, const Tensor<T>& x,
                        Tensor<T>* grad_hat = nullptr, Tensor<T>* grad_check = nullptr,
                        double weight = 1.0) {
    detail::require(x_hat.same_shape(x) && x_check.same_shape(x),
            "consistency_loss operands must share dims");
    return detail::mean_l1(x_hat, x, grad_hat, weight) +
           detail::mean_l1(x_check, x, grad_check, weight);
}

/// Low-frequency color term between the intermediate outputs and the input:
///   mean|P(x_s, 4s) - P(x, 4)| + mean|P(x_inv, 4) - P(x, 4s)|
/// with P the non-overlapping (floor mode) average pool of the given window.
template <class T>
double color_loss(const Tensor<T>& x_s, const Tensor<T>& x_inv, const Tensor<T>& x, int s,
                  Tensor<T>* grad_s = nullptr, Tensor<T>* grad_inv = nullptr,
                  double weight = 1.0) {
    detail::require(s >= 2, "color_loss needs an integer scale >= 2");
    detail::require(x.height % s == 0 && x.width % s == 0 && x.height >= 4 * s && x.width >= 4 * s,
            "color_loss: input dims " + dims_string(x.height, x.width) +
                " must be divisible by " + std::to_string(s) + " and at least " +
                std::to_string(4 * s));
    detail::require(x_s.height == s * x.height && x_s.width == s * x.width && x_s.channels == x.channels,
            "color_loss: upscaled image has wrong dims");
    detail::require(x_inv.height * s == x.height && x_inv.width * s == x.width &&
                x_inv.channels == x.channels,
            "color_loss: downscaled image has wrong dims");

    const Tensor<T> p_up = avg_pool(x_s, 4 * s, 4 * s);
    const Tensor<T> p_x4 = avg_pool(x, 4, 4);
    const Tensor<T> p_down = avg_pool(x_inv, 4, 4);
    const Tensor<T> p_x4s = avg_pool(x, 4 * s, 4 * s);

    Tensor<T> g_up, g_down;
    const bool want = grad_s != nullptr || grad_inv != nullptr;
    const double l1 = detail::mean_l1(p_up, p_x4, want ? &g_up : nullptr, weight);
    const double l2 = detail::mean_l1(p_down, p_x4s, want ? &g_down : nullptr, weight);
    if (grad_s) {
        if (grad_s->empty()) *grad_s = Tensor<T>(x_s.channels, x_s.height, x_s.width);
        detail::avg_pool_adjoint_add(g_up, 4 * s, *grad_s);
    }
    if (grad_inv) {
        if (grad_inv->empty()) *grad_inv = Tensor<T>(x_inv.channels, x_inv.height, x_inv.width);
        detail::avg_pool_adjoint_add(g_down, 4, *grad_inv);
    }
    return l1 + l2;
}

}  // namespace icfsr
