#pragma once

#include <Eigen/Core>

#include <span>
#include <vector>

#include "icfsr/error.hpp"
#include "icfsr/tensor.hpp"

namespace icfsr::layers {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

/// Unfolds k x k zero-padded neighbourhoods: row (c*k + ky)*k + kx holds
/// input channel c shifted by (ky - k/2, kx - k/2) for every pixel.
template <class T>
void im2col(const Tensor<T>& x, int k, RowMatrix<T>& col) {
    const int pad = k / 2;
    const int h = x.height, w = x.width;
    col.resize(static_cast<Eigen::Index>(x.channels) * k * k, static_cast<Eigen::Index>(h) * w);
    for (int c = 0; c < x.channels; ++c)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                T* dst = col.row((static_cast<Eigen::Index>(c) * k + ky) * k + kx).data();
                const int dy = ky - pad, dx = kx - pad;
                const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                for (int y = 0; y < h; ++y) {
                    T* drow = dst + static_cast<std::size_t>(y) * w;
                    const int sy = y + dy;
                    if (sy < 0 || sy >= h || x0 >= x1) {
                        std::fill(drow, drow + w, T(0));
                        continue;
                    }
                    std::fill(drow, drow + x0, T(0));
                    const T* srow = &x(c, sy, 0);
                    std::copy(srow + x0 + dx, srow + x1 + dx, drow + x0);
                    std::fill(drow + x1, drow + w, T(0));
                }
            }
}

/// Adds the folded columns back into a C x H x W gradient.
template <class T>
void col2im_add(const RowMatrix<T>& col, int k, Tensor<T>& dx) {
    const int pad = k / 2;
    const int h = dx.height, w = dx.width;
    for (int c = 0; c < dx.channels; ++c)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const T* src = col.row((static_cast<Eigen::Index>(c) * k + ky) * k + kx).data();
                const int dy = ky - pad, ddx = kx - pad;
                const int x0 = std::max(0, -ddx), x1 = std::min(w, w - ddx);
                for (int y = 0; y < h; ++y) {
                    const int sy = y + dy;
                    if (sy < 0 || sy >= h) continue;
                    const T* srow = src + static_cast<std::size_t>(y) * w;
                    T* drow = &dx(c, sy, 0);
                    for (int xx = x0; xx < x1; ++xx) drow[xx + ddx] += srow[xx];
                }
            }
}

/// Weight and bias views of one convolution; weight is cout x (cin*k*k).
template <class T>
struct ConvView {
    std::span<const T> weight;
    std::span<const T> bias;
    int cin = 0;
    int cout = 0;
    int k = 3;
};

template <class T>
struct ConvGrad {
    std::span<T> weight;
    std::span<T> bias;
};

/// Same-size convolution (stride 1, zero padding k/2).
template <class T>
Tensor<T> conv_forward(const ConvView<T>& conv, const Tensor<T>& x, RowMatrix<T>& scratch) {
    detail::require(x.channels == conv.cin, "conv input has " + std::to_string(x.channels) +
                                                " channels, expected " + std::to_string(conv.cin));
    im2col(x, conv.k, scratch);
    Tensor<T> y(conv.cout, x.height, x.width);
    const Eigen::Index kk = static_cast<Eigen::Index>(conv.cin) * conv.k * conv.k;
    ConstMatrixMap<T> w(conv.weight.data(), conv.cout, kk);
    MatrixMap<T> out(y.data.data(), conv.cout, static_cast<Eigen::Index>(x.plane_size()));
    out.noalias() = w * scratch;
    for (int o = 0; o < conv.cout; ++o) out.row(o).array() += conv.bias[o];
    return y;
}

/// Accumulates parameter gradients; returns the input gradient when
/// `want_input_grad`, otherwise an empty tensor.
template <class T>
Tensor<T> conv_backward(const ConvView<T>& conv, const Tensor<T>& x, const Tensor<T>& grad_y,
                        ConvGrad<T> grad, bool want_input_grad, RowMatrix<T>& scratch) {
    const Eigen::Index kk = static_cast<Eigen::Index>(conv.cin) * conv.k * conv.k;
    const Eigen::Index hw = static_cast<Eigen::Index>(x.plane_size());
    im2col(x, conv.k, scratch);
    ConstMatrixMap<T> gy(grad_y.data.data(), conv.cout, hw);
    MatrixMap<T> gw(grad.weight.data(), conv.cout, kk);
    gw.noalias() += gy * scratch.transpose();
    // plain sequential sums: a vectorized reduction's order would depend on
    // the buffer's alignment
    for (int o = 0; o < conv.cout; ++o) {
        const T* row = grad_y.data.data() + static_cast<std::size_t>(o) * hw;
        T acc = T(0);
        for (Eigen::Index i = 0; i < hw; ++i) acc += row[i];
        grad.bias[o] += acc;
    }
    if (!want_input_grad) return {};
    ConstMatrixMap<T> w(conv.weight.data(), conv.cout, kk);
    scratch.noalias() = w.transpose() * gy;
    Tensor<T> dx(conv.cin, x.height, x.width);
    col2im_add(scratch, conv.k, dx);
    return dx;
}

template <class T>
void relu_inplace(Tensor<T>& x) {
    for (auto& v : x.data) v = v > T(0) ? v : T(0);
}

/// Masks the gradient by the post-activation (relu output > 0).
template <class T>
void relu_backward_inplace(const Tensor<T>& activated, Tensor<T>& grad) {
    for (std::size_t i = 0; i < grad.size(); ++i)
        if (!(activated.data[i] > T(0))) grad.data[i] = T(0);
}

}  // namespace icfsr::layers

namespace icfsr {

/// Sub-pixel rearrangement: out(c, s*y+dy, s*x+dx) = in(c*s*s + dy*s + dx, y, x).
template <class T>
Tensor<T> pixel_shuffle(const Tensor<T>& in, int s) {
    detail::require(s >= 1, "shuffle factor must be positive");
    detail::require(in.channels % (s * s) == 0,
                    "pixel_shuffle: " + std::to_string(in.channels) + " channels not divisible by " +
                        std::to_string(s * s));
    const int c_out = in.channels / (s * s);
    Tensor<T> out(c_out, in.height * s, in.width * s);
    for (int c = 0; c < c_out; ++c)
        for (int dy = 0; dy < s; ++dy)
            for (int dx = 0; dx < s; ++dx) {
                const int ic = c * s * s + dy * s + dx;
                for (int y = 0; y < in.height; ++y) {
                    const T* src = &in(ic, y, 0);
                    T* dst = &out(c, s * y + dy, dx);
                    for (int x = 0; x < in.width; ++x) dst[s * x] = src[x];
                }
            }
    return out;
}

/// Exact inverse of pixel_shuffle.
template <class T>
Tensor<T> pixel_unshuffle(const Tensor<T>& in, int s) {
    detail::require(s >= 1, "shuffle factor must be positive");
    detail::require(in.height % s == 0 && in.width % s == 0,
                    "pixel_unshuffle: dims " + dims_string(in.height, in.width) +
                        " not divisible by " + std::to_string(s));
    Tensor<T> out(in.channels * s * s, in.height / s, in.width / s);
    for (int c = 0; c < in.channels; ++c)
        for (int dy = 0; dy < s; ++dy)
            for (int dx = 0; dx < s; ++dx) {
                const int oc = c * s * s + dy * s + dx;
                for (int y = 0; y < out.height; ++y) {
                    const T* src = &in(c, s * y + dy, dx);
                    T* dst = &out(oc, y, 0);
                    for (int x = 0; x < out.width; ++x) dst[x] = src[s * x];
                }
            }
    return out;
}

}  // namespace icfsr
