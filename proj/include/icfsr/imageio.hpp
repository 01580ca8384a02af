#pragma once

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "icfsr/error.hpp"
#include "icfsr/rng.hpp"
#include "icfsr/tensor.hpp"

namespace icfsr {

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngPixels {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    int bit_depth = 0;
    int channels = 0;
    std::vector<unsigned char> bytes;
};

// No C++ objects with destructors live between setjmp and the libpng calls.
inline bool read_png_raw(std::FILE* fp, PngPixels* out, const char** err) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) {
        *err = "png_create_read_struct failed";
        return false;
    }
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        *err = "png_create_info_struct failed";
        return false;
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        *err = "malformed PNG data";
        return false;
    }
    png_init_io(png, fp);
    png_read_png(png, info, PNG_TRANSFORM_EXPAND | PNG_TRANSFORM_STRIP_ALPHA, nullptr);
    out->width = png_get_image_width(png, info);
    out->height = png_get_image_height(png, info);
    out->bit_depth = png_get_bit_depth(png, info);
    out->channels = png_get_channels(png, info);
    png_bytepp rows = png_get_rows(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    out->bytes.resize(rowbytes * out->height);
    for (std::uint32_t y = 0; y < out->height; ++y)
        std::copy(rows[y], rows[y] + rowbytes, out->bytes.data() + y * rowbytes);
    png_destroy_read_struct(&png, &info, nullptr);
    return true;
}

inline bool write_png_raw(std::FILE* fp, const unsigned char* bytes, std::uint32_t w,
                          std::uint32_t h, int channels, const char** err) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) {
        *err = "png_create_write_struct failed";
        return false;
    }
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        *err = "png_create_info_struct failed";
        return false;
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        *err = "PNG encoding failed";
        return false;
    }
    png_init_io(png, fp);
    png_set_compression_level(png, 6);
    png_set_IHDR(png, info, w, h, 8, channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::uint32_t y = 0; y < h; ++y)
        png_write_row(png, const_cast<png_bytep>(bytes + static_cast<std::size_t>(y) * w * channels));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return true;
}

}  // namespace detail

/// Reads an 8- or 16-bit PNG. Values are divided by the bit-depth maximum;
/// grayscale is replicated to three channels and alpha is dropped.
inline Image load_image(const std::filesystem::path& path) {
    detail::FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw DataError("cannot open image: " + path.string());
    unsigned char sig[8] = {};
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw DataError("not a PNG file: " + path.string());
    std::rewind(fp.get());

    detail::PngPixels px;
    const char* err = nullptr;
    if (!detail::read_png_raw(fp.get(), &px, &err))
        throw DataError(std::string(err) + ": " + path.string());
    if (px.width == 0 || px.height == 0) throw DataError("zero-dimension image: " + path.string());
    if (px.bit_depth != 8 && px.bit_depth != 16)
        throw DataError("unsupported PNG bit depth: " + path.string());
    if (px.channels != 1 && px.channels != 3)
        throw DataError("unsupported PNG channel layout: " + path.string());

    const int h = static_cast<int>(px.height);
    const int w = static_cast<int>(px.width);
    const double maxv = px.bit_depth == 16 ? 65535.0 : 255.0;
    Image img(3, h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                const int src_c = px.channels == 1 ? 0 : c;
                const std::size_t idx = (static_cast<std::size_t>(y) * w + x) * px.channels + src_c;
                double v;
                if (px.bit_depth == 16)
                    v = (px.bytes[2 * idx] << 8) | px.bytes[2 * idx + 1];
                else
                    v = px.bytes[idx];
                img(c, y, x) = v / maxv;
            }
    return img;
}

/// Clamp to [0,1] and quantize with round-half-away-from-zero.
inline unsigned char quantize8(double v) {
    if (!(v > 0.0)) return 0;  // also maps NaN to 0
    if (v >= 1.0) return 255;
    return static_cast<unsigned char>(std::round(v * 255.0));
}

/// Writes an 8-bit RGB (3 channels) or grayscale (1 channel) PNG.
inline void save_image(const Image& img, const std::filesystem::path& path) {
    check_image(img);
    std::vector<unsigned char> bytes(img.size());
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                bytes[(static_cast<std::size_t>(y) * img.width + x) * img.channels + c] =
                    quantize8(img(c, y, x));
    detail::FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw DataError("cannot write image: " + path.string());
    const char* err = nullptr;
    if (!detail::write_png_raw(fp.get(), bytes.data(), img.width, img.height, img.channels, &err))
        throw DataError(std::string(err) + ": " + path.string());
    if (std::fflush(fp.get()) != 0) throw DataError("write failed: " + path.string());
}

/// BT.601 studio-swing luma, returned on the unit scale (16/255 .. 235/255).
inline Image to_luminance(const Image& img) {
    detail::require(img.channels == 3, "to_luminance needs a 3-channel image");
    Image y(1, img.height, img.width);
    const auto r = img.plane(0), g = img.plane(1), b = img.plane(2);
    auto out = y.plane(0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double luma =
            (65.738 * r[i] * 255.0 + 129.057 * g[i] * 255.0 + 25.064 * b[i] * 255.0) / 256.0 + 16.0;
        out[i] = luma / 255.0;
    }
    return y;
}

/// Uniformly placed size x size crop.
template <class T>
Tensor<T> random_patch(const Tensor<T>& img, int size, Rng& rng) {
    detail::require(size > 0, "patch size must be positive");
    if (img.height < size || img.width < size)
        throw DataError("image " + dims_string(img.height, img.width) + " smaller than patch " +
                        std::to_string(size));
    const int top = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(img.height - size + 1)));
    const int left = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(img.width - size + 1)));
    return crop(img, top, left, size, size);
}

/// Element k of the dihedral group of the square: optional horizontal flip
/// (k >= 4) followed by k mod 4 counter-clockwise quarter turns.
template <class T>
Tensor<T> dihedral(const Tensor<T>& img, int k) {
    detail::require(k >= 0 && k <= 7, "dihedral index must be in [0,7]");
    Tensor<T> cur = img;
    if (k >= 4) {
        for (int c = 0; c < cur.channels; ++c)
            for (int y = 0; y < cur.height; ++y) {
                T* row = &cur(c, y, 0);
                std::reverse(row, row + cur.width);
            }
    }
    for (int turn = 0; turn < k % 4; ++turn) {
        Tensor<T> rot(cur.channels, cur.width, cur.height);
        for (int c = 0; c < cur.channels; ++c)
            for (int y = 0; y < rot.height; ++y)
                for (int x = 0; x < rot.width; ++x) rot(c, y, x) = cur(c, x, cur.width - 1 - y);
        cur = std::move(rot);
    }
    return cur;
}

}  // namespace icfsr
