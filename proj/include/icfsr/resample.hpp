#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "icfsr/error.hpp"
#include "icfsr/tensor.hpp"

namespace icfsr {

/// Keys cubic-convolution kernel; a = -0.5 gives the Catmull-Rom spline.
inline double cubic_kernel(double x, double a = -0.5) {
    const double ax = std::abs(x);
    if (ax <= 1.0) return ((a + 2.0) * ax - (a + 3.0)) * ax * ax + 1.0;
    if (ax < 2.0) return (((ax - 5.0) * ax + 8.0) * ax - 4.0) * a;
    return 0.0;
}

/// Interpolation weights for samples at distances 1+t, t, 1-t, 2-t from a
/// point lying a fraction t past the second sample.
inline std::array<double, 4> bicubic_tap_weights(double t) {
    return {cubic_kernel(1.0 + t), cubic_kernel(t), cubic_kernel(1.0 - t), cubic_kernel(2.0 - t)};
}

/// Sparse linear map from n_in samples to n_out samples along one axis.
/// Output i reads src[begin[i] .. begin[i+1]) with the matching weights.
struct AxisTable {
    int n_in = 0;
    int n_out = 0;
    std::vector<int> begin;
    std::vector<int> src;
    std::vector<double> weight;
};

namespace detail {

inline int clamp_index(int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

inline double source_coord(int dst, double scale) { return (dst + 0.5) / scale - 0.5; }

inline int scaled_dim(int n, double scale, bool require_integral) {
    const double exact = n * scale;
    const double r = std::round(exact);
    if (require_integral && std::abs(exact - r) > 1e-9)
        throw InvalidArgument("scale " + std::to_string(scale) + " does not map dimension " +
                              std::to_string(n) + " to an integer");
    return static_cast<int>(r);
}

}  // namespace detail

/// Cubic resampling table. When shrinking, the kernel is stretched by
/// 1/scale (anti-aliased, as in MATLAB imresize); weights are normalized.
inline AxisTable cubic_table(int n_in, int n_out) {
    detail::require(n_in > 0 && n_out > 0, "resample dimensions must be positive");
    const double scale = static_cast<double>(n_out) / n_in;
    const double kscale = scale < 1.0 ? scale : 1.0;
    const double support = 2.0 / kscale;
    AxisTable t;
    t.n_in = n_in;
    t.n_out = n_out;
    t.begin.reserve(n_out + 1);
    t.begin.push_back(0);
    for (int i = 0; i < n_out; ++i) {
        const double center = detail::source_coord(i, scale);
        const int first = static_cast<int>(std::floor(center - support)) + 1;
        const int last = static_cast<int>(std::ceil(center + support)) - 1;
        double sum = 0.0;
        const std::size_t start = t.weight.size();
        for (int j = first; j <= last; ++j) {
            const double w = cubic_kernel((center - j) * kscale);
            if (w == 0.0) continue;
            t.src.push_back(detail::clamp_index(j, n_in));
            t.weight.push_back(w);
            sum += w;
        }
        for (std::size_t k = start; k < t.weight.size(); ++k) t.weight[k] /= sum;
        t.begin.push_back(static_cast<int>(t.src.size()));
    }
    return t;
}

inline AxisTable nearest_table(int n_in, int n_out) {
    detail::require(n_in > 0 && n_out > 0, "resample dimensions must be positive");
    const double scale = static_cast<double>(n_out) / n_in;
    AxisTable t;
    t.n_in = n_in;
    t.n_out = n_out;
    t.begin.push_back(0);
    for (int i = 0; i < n_out; ++i) {
        const int j = static_cast<int>(std::floor(detail::source_coord(i, scale) + 0.5));
        t.src.push_back(detail::clamp_index(j, n_in));
        t.weight.push_back(1.0);
        t.begin.push_back(static_cast<int>(t.src.size()));
    }
    return t;
}

/// Applies `cols` along width, then `rows` along height, to every channel.
template <class T>
Tensor<T> apply_separable(const Tensor<T>& img, const AxisTable& rows, const AxisTable& cols) {
    detail::require(rows.n_in == img.height && cols.n_in == img.width,
                    "resample table does not match image dims");
    Tensor<T> tmp(img.channels, img.height, cols.n_out);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y) {
            const T* in = &img(c, y, 0);
            T* out = &tmp(c, y, 0);
            for (int x = 0; x < cols.n_out; ++x) {
                T acc = 0;
                for (int k = cols.begin[x]; k < cols.begin[x + 1]; ++k)
                    acc += static_cast<T>(cols.weight[k]) * in[cols.src[k]];
                out[x] = acc;
            }
        }
    Tensor<T> out(img.channels, rows.n_out, cols.n_out);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < rows.n_out; ++y) {
            T* dst = &out(c, y, 0);
            for (int k = rows.begin[y]; k < rows.begin[y + 1]; ++k) {
                const T w = static_cast<T>(rows.weight[k]);
                const T* src = &tmp(c, rows.src[k], 0);
                for (int x = 0; x < cols.n_out; ++x) dst[x] += w * src[x];
            }
        }
    return out;
}

/// Transpose of apply_separable: maps an output-space gradient back.
template <class T>
Tensor<T> apply_separable_adjoint(const Tensor<T>& grad, const AxisTable& rows,
                                  const AxisTable& cols) {
    detail::require(rows.n_out == grad.height && cols.n_out == grad.width,
                    "resample table does not match gradient dims");
    Tensor<T> tmp(grad.channels, rows.n_in, cols.n_out);
    for (int c = 0; c < grad.channels; ++c)
        for (int y = 0; y < rows.n_out; ++y) {
            const T* g = &grad(c, y, 0);
            for (int k = rows.begin[y]; k < rows.begin[y + 1]; ++k) {
                const T w = static_cast<T>(rows.weight[k]);
                T* dst = &tmp(c, rows.src[k], 0);
                for (int x = 0; x < cols.n_out; ++x) dst[x] += w * g[x];
            }
        }
    Tensor<T> out(grad.channels, rows.n_in, cols.n_in);
    for (int c = 0; c < grad.channels; ++c)
        for (int y = 0; y < rows.n_in; ++y) {
            const T* g = &tmp(c, y, 0);
            T* dst = &out(c, y, 0);
            for (int x = 0; x < cols.n_out; ++x)
                for (int k = cols.begin[x]; k < cols.begin[x + 1]; ++k)
                    dst[cols.src[k]] += static_cast<T>(cols.weight[k]) * g[x];
        }
    return out;
}

/// Cubic-convolution resize (a = -0.5, pixel-center alignment, clamped
/// borders). Output dims are round(H*scale) x round(W*scale); shrinking
/// requires them to be exact.
template <class T>
Tensor<T> bicubic_resize(const Tensor<T>& img, double scale) {
    detail::require(scale > 0.0 && std::isfinite(scale), "scale must be positive");
    const int h = detail::scaled_dim(img.height, scale, scale < 1.0);
    const int w = detail::scaled_dim(img.width, scale, scale < 1.0);
    detail::require(h > 0 && w > 0, "resize produces an empty image");
    return apply_separable(img, cubic_table(img.height, h), cubic_table(img.width, w));
}

template <class T>
Tensor<T> nearest_resize(const Tensor<T>& img, double scale) {
    detail::require(scale > 0.0 && std::isfinite(scale), "scale must be positive");
    const int h = detail::scaled_dim(img.height, scale, scale < 1.0);
    const int w = detail::scaled_dim(img.width, scale, scale < 1.0);
    detail::require(h > 0 && w > 0, "resize produces an empty image");
    return apply_separable(img, nearest_table(img.height, h), nearest_table(img.width, w));
}

/// Normalized 1-D Gaussian taps for offsets -r..r, r = ceil(3 sigma).
inline std::vector<double> gaussian_kernel(double sigma) {
    detail::require(sigma > 0.0 && std::isfinite(sigma), "sigma must be positive");
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * r + 1);
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) {
        k[i + r] = std::exp(-(i * i) / (2.0 * sigma * sigma));
        sum += k[i + r];
    }
    for (auto& v : k) v /= sum;
    return k;
}

namespace detail {

// Mirror without repeating the edge sample: -1 -> 1, n -> n-2.
inline int reflect101(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

}  // namespace detail

/// Separable Gaussian blur with reflect-101 borders.
template <class T>
Tensor<T> gaussian_blur(const Tensor<T>& img, double sigma) {
    const auto k = gaussian_kernel(sigma);
    const int r = static_cast<int>(k.size() / 2);
    Tensor<T> tmp(img.channels, img.height, img.width);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                double acc = 0.0;
                for (int d = -r; d <= r; ++d)
                    acc += k[d + r] * img(c, y, detail::reflect101(x + d, img.width));
                tmp(c, y, x) = static_cast<T>(acc);
            }
    Tensor<T> out(img.channels, img.height, img.width);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                double acc = 0.0;
                for (int d = -r; d <= r; ++d)
                    acc += k[d + r] * tmp(c, detail::reflect101(y + d, img.height), x);
                out(c, y, x) = static_cast<T>(acc);
            }
    return out;
}

/// Non-overlapping box average; window must equal stride. Floor mode:
/// trailing rows/columns that do not fill a window are dropped.
template <class T>
Tensor<T> avg_pool(const Tensor<T>& img, int window, int stride) {
    detail::require(window == stride, "avg_pool supports window == stride only");
    detail::require(stride > 0, "stride must be positive");
    detail::require(img.height >= stride && img.width >= stride,
                    "avg_pool: dims " + dims_string(img.height, img.width) +
                        " smaller than window " + std::to_string(stride));
    const int oh = img.height / stride, ow = img.width / stride;
    const double inv = 1.0 / (static_cast<double>(stride) * stride);
    Tensor<T> out(img.channels, oh, ow);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
                double acc = 0.0;
                for (int dy = 0; dy < stride; ++dy) {
                    const T* row = &img(c, y * stride + dy, x * stride);
                    for (int dx = 0; dx < stride; ++dx) acc += row[dx];
                }
                out(c, y, x) = static_cast<T>(acc * inv);
            }
    return out;
}

}  // namespace icfsr
