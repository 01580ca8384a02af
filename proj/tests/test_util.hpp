#pragma once

#include <png.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "icfsr/rng.hpp"
#include "icfsr/tensor.hpp"

namespace testutil {

/// Unique scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        static int counter = 0;
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("icfsr_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

inline std::string read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

template <class T = double>
icfsr::Tensor<T> random_tensor(int c, int h, int w, std::uint64_t seed, double lo = 0.0,
                               double hi = 1.0) {
    icfsr::Rng rng(seed);
    icfsr::Tensor<T> t(c, h, w);
    for (auto& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

inline icfsr::Image random_image(int h, int w, std::uint64_t seed) {
    return random_tensor<double>(3, h, w, seed);
}

inline void write_png16_gray(const std::filesystem::path& path, int w, int h,
                             const std::vector<unsigned>& values) {
    std::FILE* fp = std::fopen(path.string().c_str(), "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    png_init_io(png, fp);
    png_set_IHDR(png, info, w, h, 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<unsigned char> row(2 * w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            row[2 * x] = static_cast<unsigned char>(values[y * w + x] >> 8);
            row[2 * x + 1] = static_cast<unsigned char>(values[y * w + x] & 0xff);
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

}  // namespace testutil
