#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "icfsr/error.hpp"
#include "icfsr/imageio.hpp"
#include "icfsr/tensor.hpp"

namespace icfsr {

enum class ColorMode { y, rgb };

inline ColorMode parse_color_mode(const std::string& s) {
    if (s == "y" || s == "Y") return ColorMode::y;
    if (s == "rgb" || s == "RGB") return ColorMode::rgb;
    throw InvalidArgument("unknown color mode '" + s + "' (expected y or rgb)");
}

namespace detail {

inline void require_same_dims(const Image& a, const Image& b) {
    require(a.same_shape(b), "image dims differ: " + shape_string(a) + " vs " + shape_string(b));
}

/// Shaves the border, clamps to [0,1], optionally converts to Y, then
/// rescales to 0..255.
inline Image metric_view(const Image& img, ColorMode mode, int shave) {
    require(shave >= 0 && 2 * shave < std::min(img.height, img.width),
            "shave " + std::to_string(shave) + " too large for " + dims_string(img.height, img.width));
    Image v = clamp01(crop(img, shave, shave, img.height - 2 * shave, img.width - 2 * shave));
    if (mode == ColorMode::y && v.channels == 3) v = to_luminance(v);
    for (auto& x : v.data) x *= 255.0;
    return v;
}

}  // namespace detail

/// PSNR in dB on the 0..255 scale; +infinity for identical inputs.
inline double psnr(const Image& a, const Image& b, ColorMode mode = ColorMode::y, int shave = 0) {
    detail::require_same_dims(a, b);
    const Image va = detail::metric_view(a, mode, shave);
    const Image vb = detail::metric_view(b, mode, shave);
    double se = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) {
        const double d = va.data[i] - vb.data[i];
        se += d * d;
    }
    const double mse = se / static_cast<double>(va.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

/// Normalized 1-D Gaussian of length 11, sigma 1.5; the SSIM window is
/// its outer product with itself.
inline std::array<double, 11> ssim_window_1d() {
    std::array<double, 11> g{};
    double sum = 0.0;
    for (int i = 0; i < 11; ++i) {
        g[i] = std::exp(-((i - 5) * (i - 5)) / (2.0 * 1.5 * 1.5));
        sum += g[i];
    }
    for (auto& v : g) v /= sum;
    return g;
}

/// Mean SSIM over all fully-contained 11x11 windows (and channels in RGB
/// mode); K1 = 0.01, K2 = 0.03, dynamic range 255.
inline double ssim(const Image& a, const Image& b, ColorMode mode = ColorMode::y, int shave = 0) {
    detail::require_same_dims(a, b);
    const Image va = detail::metric_view(a, mode, shave);
    const Image vb = detail::metric_view(b, mode, shave);
    detail::require(va.height >= 11 && va.width >= 11, "image smaller than the 11x11 SSIM window");
    const auto g = ssim_window_1d();
    const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
    const double c2 = (0.03 * 255.0) * (0.03 * 255.0);
    const int oh = va.height - 10, ow = va.width - 10;

    // Separable filtering of a, b, a^2, b^2 and ab.
    double total = 0.0;
    for (int c = 0; c < va.channels; ++c) {
        std::vector<double> rows(5 * static_cast<std::size_t>(va.height) * ow);
        auto R = [&](int k, int y, int x) -> double& {
            return rows[(static_cast<std::size_t>(k) * va.height + y) * ow + x];
        };
        for (int y = 0; y < va.height; ++y)
            for (int x = 0; x < ow; ++x) {
                double s[5] = {};
                for (int d = 0; d < 11; ++d) {
                    const double p = va(c, y, x + d), q = vb(c, y, x + d);
                    s[0] += g[d] * p;
                    s[1] += g[d] * q;
                    s[2] += g[d] * p * p;
                    s[3] += g[d] * q * q;
                    s[4] += g[d] * p * q;
                }
                for (int k = 0; k < 5; ++k) R(k, y, x) = s[k];
            }
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
                double s[5] = {};
                for (int d = 0; d < 11; ++d)
                    for (int k = 0; k < 5; ++k) s[k] += g[d] * R(k, y + d, x);
                const double mu_a = s[0], mu_b = s[1];
                const double var_a = s[2] - mu_a * mu_a;
                const double var_b = s[3] - mu_b * mu_b;
                const double cov = s[4] - mu_a * mu_b;
                total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                         ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            }
    }
    return total / (static_cast<double>(oh) * ow * va.channels);
}

/// Mean absolute error on the 0..255 scale (no clamping).
inline double mae(const Image& a, const Image& b) {
    detail::require_same_dims(a, b);
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a.data[i] - b.data[i]);
    return a.empty() ? 0.0 : sum / static_cast<double>(a.size()) * 255.0;
}

/// 256-entry "jet" palette: dark blue -> blue -> cyan -> yellow -> red ->
/// dark red, each channel a clamped piecewise-linear ramp of t = i/255.
inline std::array<std::array<double, 3>, 256> jet_colormap() {
    std::array<std::array<double, 3>, 256> map{};
    auto ramp = [](double v) { return std::clamp(v, 0.0, 1.0); };
    for (int i = 0; i < 256; ++i) {
        const double t = i / 255.0;
        map[i] = {ramp(1.5 - std::abs(4.0 * t - 3.0)), ramp(1.5 - std::abs(4.0 * t - 2.0)),
                  ramp(1.5 - std::abs(4.0 * t - 1.0))};
    }
    return map;
}

/// Colormap index of every pixel: round(255 * d / max d), where d is the
/// channel-mean absolute difference. All zero when the images match.
inline std::vector<int> error_indices(const Image& a, const Image& b) {
    detail::require_same_dims(a, b);
    std::vector<double> d(a.plane_size(), 0.0);
    for (int c = 0; c < a.channels; ++c) {
        const auto pa = a.plane(c), pb = b.plane(c);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += std::abs(pa[i] - pb[i]) / a.channels;
    }
    double dmax = 0.0;
    for (double v : d) dmax = std::max(dmax, v);
    std::vector<int> idx(d.size(), 0);
    if (dmax > 0.0)
        for (std::size_t i = 0; i < d.size(); ++i)
            idx[i] = static_cast<int>(std::lround(255.0 * d[i] / dmax));
    return idx;
}

inline Image error_map(const Image& a, const Image& b) {
    const auto idx = error_indices(a, b);
    const auto cmap = jet_colormap();
    Image out(3, a.height, a.width);
    for (int c = 0; c < 3; ++c) {
        auto p = out.plane(c);
        for (std::size_t i = 0; i < idx.size(); ++i) p[i] = cmap[idx[i]][c];
    }
    return out;
}

struct MetricRow {
    std::string image;
    std::string scale;
    std::string method;
    double psnr = 0.0;
    double ssim = 0.0;
    double mae = 0.0;
};

inline std::string format_metric(double v, int decimals) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

/// Tab-separated report: header, one row per entry, then a "mean" row.
inline void write_report(std::ostream& os, const std::vector<MetricRow>& rows) {
    os << "image\tscale\tmethod\tpsnr\tssim\tmae\n";
    double sp = 0.0, ss = 0.0, sm = 0.0;
    for (const auto& r : rows) {
        os << r.image << '\t' << r.scale << '\t' << r.method << '\t' << format_metric(r.psnr, 4)
           << '\t' << format_metric(r.ssim, 6) << '\t' << format_metric(r.mae, 4) << '\n';
        sp += r.psnr;
        ss += r.ssim;
        sm += r.mae;
    }
    if (!rows.empty()) {
        const double n = static_cast<double>(rows.size());
        os << "mean\t" << rows.front().scale << '\t' << rows.front().method << '\t'
           << format_metric(sp / n, 4) << '\t' << format_metric(ss / n, 6) << '\t'
           << format_metric(sm / n, 4) << '\n';
    }
}

}  // namespace icfsr
