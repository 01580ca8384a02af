#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "icfsr/error.hpp"
#include "icfsr/imageio.hpp"
#include "icfsr/model.hpp"
#include "icfsr/tensor.hpp"

namespace icfsr {

/// (low-resolution, high-resolution) training pair.
struct ImagePair {
    Image lr;
    Image hr;
};

using WarningSink = std::function<void(const std::string&)>;

/// Crops to dims divisible by s, reporting any crop through `warn`.
inline Image crop_for_scale(const Image& img, int s, const WarningSink& warn = {}) {
    if (img.height % s == 0 && img.width % s == 0) return img;
    Image out = center_crop_divisible(img, s);
    if (warn)
        warn("center-cropped " + dims_string(img.height, img.width) + " to " +
             dims_string(out.height, out.width) + " for scale " + std::to_string(s));
    return out;
}

/// Downsamples every input with f(. | 1/s) and pairs it with its source.
template <class T>
std::vector<ImagePair> generate_pairs(const ParameterSet<T>& params, const std::vector<Image>& images,
                                      int s, const WarningSink& warn = {}) {
    detail::require(params.config().has_scale(s),
                    "scale " + std::to_string(s) + " is not in the model's scale set");
    std::vector<ImagePair> pairs;
    pairs.reserve(images.size());
    for (const auto& img : images) {
        check_image(img);
        detail::require(img.channels == 3, "pair generation needs RGB images");
        Image src = crop_for_scale(img, s, warn);
        Image down = forward(params, src, ScaleCondition::down(s));
        pairs.push_back({std::move(down), std::move(src)});
    }
    return pairs;
}

/// (LLR, LR) pairs from an LR set: data for training a conventional
/// SR network one scale below the available resolution.
template <class T>
std::vector<ImagePair> generate_llr_lr(const ParameterSet<T>& params,
                                       const std::vector<Image>& lr_images, int s,
                                       const WarningSink& warn = {}) {
    return generate_pairs(params, lr_images, s, warn);
}

/// (generated LR, HR) pairs from an HR set.
template <class T>
std::vector<ImagePair> generate_lr_hr(const ParameterSet<T>& params,
                                      const std::vector<Image>& hr_images, int s,
                                      const WarningSink& warn = {}) {
    return generate_pairs(params, hr_images, s, warn);
}

/// Replaces the first run of '#' in `pattern` with the zero-padded index
/// (run length = minimum width); a pattern without '#' yields the same
/// name for every index.
inline std::string expand_name(const std::string& pattern, std::size_t index) {
    const auto start = pattern.find('#');
    if (start == std::string::npos) return pattern;
    auto end = pattern.find_first_not_of('#', start);
    if (end == std::string::npos) end = pattern.size();
    std::string digits = std::to_string(index);
    if (digits.size() < end - start) digits.insert(0, end - start - digits.size(), '0');
    return pattern.substr(0, start) + digits + pattern.substr(end);
}

/*
 * Writes dir/LR/<stem>.png, dir/HR/<stem>.png and dir/manifest.tsv with one
 * line per pair:  stem <TAB> lr HxW <TAB> hr HxW <TAB> scale
 * Returns the manifest path.
 */
inline std::filesystem::path export_dataset(const std::vector<ImagePair>& pairs,
                                            const std::filesystem::path& dir,
                                            const std::string& naming = "####") {
    std::vector<std::string> stems;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        std::string stem = expand_name(naming, i);
        detail::require(!stem.empty() && stem.find('/') == std::string::npos,
                        "invalid file stem '" + stem + "'");
        if (!seen.insert(stem).second)
            throw InvalidArgument("naming pattern '" + naming + "' maps two pairs to '" + stem + "'");
        const auto& p = pairs[i];
        detail::require(p.lr.height > 0 && p.lr.width > 0 && p.hr.height % p.lr.height == 0 &&
                            p.hr.width % p.lr.width == 0 &&
                            p.hr.height / p.lr.height == p.hr.width / p.lr.width,
                        "pair " + stem + " does not have an integer scale ratio");
        stems.push_back(std::move(stem));
    }
    std::error_code ec;
    std::filesystem::create_directories(dir / "LR", ec);
    std::filesystem::create_directories(dir / "HR", ec);
    if (ec) throw DataError("cannot create dataset directory " + dir.string() + ": " + ec.message());

    std::string manifest;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& p = pairs[i];
        save_image(p.lr, dir / "LR" / (stems[i] + ".png"));
        save_image(p.hr, dir / "HR" / (stems[i] + ".png"));
        manifest += stems[i] + "\t" + dims_string(p.lr.height, p.lr.width) + "\t" +
                    dims_string(p.hr.height, p.hr.width) + "\t" +
                    std::to_string(p.hr.height / p.lr.height) + "\n";
    }
    const auto path = dir / "manifest.tsv";
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << manifest;
    if (!out) throw DataError("write failed: " + path.string());
    return path;
}

}  // namespace icfsr
