#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "icfsr/adam.hpp"
#include "icfsr/error.hpp"
#include "icfsr/model.hpp"

namespace icfsr {

struct TrainConfig {
    int patch_size = 48;
    int batch_size = 16;
    double lambda_color = 0.2;
    double lr_init = 1e-4;
    double lr_decay_factor = 0.5;
    int lr_decay_every = 200;  // epochs
    AdamConfig adam;
    int epochs = 1;
    std::uint64_t seed = 0;
    std::vector<int> scale_set{2};
    /// 0 selects ceil(non-overlapping patches in the dataset / batch_size).
    int steps_per_epoch = 100;
    int precision = 32;
    bool augment = true;
    /// Worker threads for per-sample passes; results do not depend on it.
    int threads = 1;

    void validate() const {
        detail::require(patch_size > 0, "patch_size must be positive");
        detail::require(batch_size > 0, "batch_size must be positive");
        detail::require(lambda_color >= 0.0 && std::isfinite(lambda_color),
                        "lambda_color must be finite and non-negative");
        detail::require(lr_init > 0.0 && std::isfinite(lr_init), "lr_init must be positive");
        detail::require(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0,
                        "lr_decay_factor must lie in (0,1]");
        detail::require(lr_decay_every > 0, "lr_decay_every must be positive");
        detail::require(adam.beta1 >= 0.0 && adam.beta1 < 1.0, "adam beta1 must lie in [0,1)");
        detail::require(adam.beta2 >= 0.0 && adam.beta2 < 1.0, "adam beta2 must lie in [0,1)");
        detail::require(adam.epsilon > 0.0, "adam epsilon must be positive");
        detail::require(epochs >= 0, "epochs must be non-negative");
        detail::require(steps_per_epoch >= 0, "steps_per_epoch must be non-negative");
        detail::require(precision == 32 || precision == 64, "precision must be 32 or 64");
        detail::require(threads >= 1, "threads must be positive");
        detail::require(!scale_set.empty(), "scale_set must not be empty");
        for (std::size_t i = 0; i < scale_set.size(); ++i) {
            detail::require(scale_set[i] >= 2, "scales must be integers >= 2");
            if (i > 0) detail::require(scale_set[i] > scale_set[i - 1], "scale_set must be increasing");
        }
        for (int s : scale_set)
            detail::require(patch_size % s == 0 && patch_size >= 4 * s,
                            "patch_size " + std::to_string(patch_size) +
                                " must be divisible by " + std::to_string(s) + " and at least " +
                                std::to_string(4 * s));
    }

    bool operator==(const TrainConfig&) const = default;
};

/// Learning rate in effect during (0-based) `epoch`.
inline double lr_at_epoch(const TrainConfig& cfg, int epoch) {
    return cfg.lr_init * std::pow(cfg.lr_decay_factor, epoch / cfg.lr_decay_every);
}

namespace detail {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string join_ints(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline long long parse_int(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    long long out = 0;
    try {
        out = std::stoll(v, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != v.size()) throw InvalidArgument(key + ": expected an integer, got '" + v + "'");
    return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double out = 0;
    try {
        out = std::stod(v, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != v.size()) throw InvalidArgument(key + ": expected a number, got '" + v + "'");
    return out;
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(static_cast<int>(parse_int(key, trim(item))));
    if (out.empty()) throw InvalidArgument(key + ": empty list");
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw InvalidArgument(key + ": expected true/false, got '" + v + "'");
}

}  // namespace detail

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// Canonical key=value form; `threads` is excluded since it never changes results.
inline KeyValues to_key_values(const TrainConfig& c) {
    using detail::format_double;
    return {{"patch_size", std::to_string(c.patch_size)},
            {"batch_size", std::to_string(c.batch_size)},
            {"lambda_color", format_double(c.lambda_color)},
            {"lr_init", format_double(c.lr_init)},
            {"lr_decay_factor", format_double(c.lr_decay_factor)},
            {"lr_decay_every", std::to_string(c.lr_decay_every)},
            {"adam_beta1", format_double(c.adam.beta1)},
            {"adam_beta2", format_double(c.adam.beta2)},
            {"adam_epsilon", format_double(c.adam.epsilon)},
            {"epochs", std::to_string(c.epochs)},
            {"seed", std::to_string(c.seed)},
            {"scale_set", detail::join_ints(c.scale_set)},
            {"steps_per_epoch", std::to_string(c.steps_per_epoch)},
            {"precision", std::to_string(c.precision)},
            {"augment", c.augment ? "true" : "false"}};
}

inline KeyValues to_key_values(const ModelConfig& c) {
    return {{"n_resblocks", std::to_string(c.n_resblocks)},
            {"n_channels", std::to_string(c.n_channels)},
            {"scale_set", detail::join_ints(c.scale_set)},
            {"conv_kernel", std::to_string(c.conv_kernel)},
            {"residual_scaling", detail::format_double(c.residual_scaling)}};
}

/// Returns false when `key` is not a TrainConfig field.
inline bool apply_key_value(TrainConfig& c, const std::string& key, const std::string& v) {
    using namespace detail;
    if (key == "patch_size") c.patch_size = static_cast<int>(parse_int(key, v));
    else if (key == "batch_size") c.batch_size = static_cast<int>(parse_int(key, v));
    else if (key == "lambda_color") c.lambda_color = parse_double(key, v);
    else if (key == "lr_init") c.lr_init = parse_double(key, v);
    else if (key == "lr_decay_factor") c.lr_decay_factor = parse_double(key, v);
    else if (key == "lr_decay_every") c.lr_decay_every = static_cast<int>(parse_int(key, v));
    else if (key == "adam_beta1") c.adam.beta1 = parse_double(key, v);
    else if (key == "adam_beta2") c.adam.beta2 = parse_double(key, v);
    else if (key == "adam_epsilon") c.adam.epsilon = parse_double(key, v);
    else if (key == "epochs") c.epochs = static_cast<int>(parse_int(key, v));
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_int(key, v));
    else if (key == "scale_set") c.scale_set = parse_int_list(key, v);
    else if (key == "steps_per_epoch") c.steps_per_epoch = static_cast<int>(parse_int(key, v));
    else if (key == "precision") c.precision = static_cast<int>(parse_int(key, v));
    else if (key == "augment") c.augment = parse_bool(key, v);
    else if (key == "threads") c.threads = static_cast<int>(parse_int(key, v));
    else return false;
    return true;
}

inline bool apply_key_value(ModelConfig& c, const std::string& key, const std::string& v) {
    using namespace detail;
    if (key == "n_resblocks") c.n_resblocks = static_cast<int>(parse_int(key, v));
    else if (key == "n_channels") c.n_channels = static_cast<int>(parse_int(key, v));
    else if (key == "scale_set") c.scale_set = parse_int_list(key, v);
    else if (key == "conv_kernel") c.conv_kernel = static_cast<int>(parse_int(key, v));
    else if (key == "residual_scaling") c.residual_scaling = parse_double(key, v);
    else return false;
    return true;
}

/// Parses flat `key = value` lines; '#' starts a comment. Duplicate keys
/// are rejected.
inline KeyValues parse_key_values(const std::string& text) {
    KeyValues out;
    std::map<std::string, int> seen;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw InvalidArgument("config line " + std::to_string(lineno) + ": expected key=value");
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw InvalidArgument("config line " + std::to_string(lineno) + ": empty key");
        if (seen[key]++) throw InvalidArgument("config: duplicate key '" + key + "'");
        out.emplace_back(std::move(key), std::move(value));
    }
    return out;
}

inline std::string render_key_values(const KeyValues& kv, const std::string& prefix = "") {
    std::string s;
    for (const auto& [k, v] : kv) s += prefix + k + "=" + v + "\n";
    return s;
}

inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Fingerprint of everything that shapes a run except its length
/// (`epochs`), so a run can be resumed with a larger epoch budget.
inline std::uint64_t config_digest(const TrainConfig& c) {
    TrainConfig copy = c;
    copy.epochs = 0;
    const std::string text = render_key_values(to_key_values(copy));
    return fnv1a64(text.data(), text.size());
}

}  // namespace icfsr
