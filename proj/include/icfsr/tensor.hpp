#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "icfsr/error.hpp"

namespace icfsr {

/// Planar channels x height x width array. Plane c occupies
/// data[c*H*W, (c+1)*H*W) and each plane is row-major.
template <class T>
struct Tensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(int c, int h, int w, T fill = T(0))
        : channels(c), height(h), width(w),
          data(static_cast<std::size_t>(c) * h * w, fill) {
        detail::require(c >= 0 && h >= 0 && w >= 0, "tensor dimensions must be non-negative");
    }

    [[nodiscard]] std::size_t size() const { return data.size(); }
    [[nodiscard]] std::size_t plane_size() const {
        return static_cast<std::size_t>(height) * width;
    }
    [[nodiscard]] bool empty() const { return data.empty(); }

    T& operator()(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    const T& operator()(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }

    std::span<T> plane(int c) { return {data.data() + c * plane_size(), plane_size()}; }
    std::span<const T> plane(int c) const {
        return {data.data() + c * plane_size(), plane_size()};
    }

    template <class U>
    [[nodiscard]] bool same_shape(const Tensor<U>& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }

    bool operator==(const Tensor&) const = default;
};

/// H x W x {1,3} intensities, nominally in [0,1].
using Image = Tensor<double>;

template <class U, class T>
Tensor<U> tensor_cast(const Tensor<T>& t) {
    Tensor<U> out;
    out.channels = t.channels;
    out.height = t.height;
    out.width = t.width;
    out.data.assign(t.data.begin(), t.data.end());
    return out;
}

inline std::string dims_string(int h, int w) {
    return std::to_string(h) + "x" + std::to_string(w);
}

template <class T>
std::string shape_string(const Tensor<T>& t) {
    return std::to_string(t.channels) + "x" + dims_string(t.height, t.width);
}

inline void check_image(const Image& img) {
    detail::require(img.channels == 1 || img.channels == 3,
                    "image must have 1 or 3 channels, got " + std::to_string(img.channels));
    detail::require(img.height > 0 && img.width > 0, "image has a zero dimension");
    detail::require(img.data.size() == static_cast<std::size_t>(img.channels) * img.height * img.width,
                    "image data length does not match its dimensions");
}

/// Copies the h x w window whose top-left corner is (top, left).
template <class T>
Tensor<T> crop(const Tensor<T>& img, int top, int left, int h, int w) {
    detail::require(top >= 0 && left >= 0 && h >= 0 && w >= 0 && top + h <= img.height &&
                        left + w <= img.width,
                    "crop window outside image");
    Tensor<T> out(img.channels, h, w);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < h; ++y) {
            const T* src = &img(c, top + y, left);
            std::copy(src, src + w, &out(c, y, 0));
        }
    return out;
}

/// Center crop to the largest dims divisible by `divisor`.
template <class T>
Tensor<T> center_crop_divisible(const Tensor<T>& img, int divisor) {
    detail::require(divisor >= 1, "divisor must be positive");
    const int h = img.height / divisor * divisor;
    const int w = img.width / divisor * divisor;
    detail::require(h > 0 && w > 0, "image smaller than divisor " + std::to_string(divisor));
    return crop(img, (img.height - h) / 2, (img.width - w) / 2, h, w);
}

template <class T>
Tensor<T> clamp01(Tensor<T> img) {
    for (auto& v : img.data) v = std::clamp(v, T(0), T(1));
    return img;
}

template <class T>
bool all_finite(const Tensor<T>& t) {
    return std::all_of(t.data.begin(), t.data.end(), [](T v) { return std::isfinite(v); });
}

}  // namespace icfsr
