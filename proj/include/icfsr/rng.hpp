#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "icfsr/error.hpp"

namespace icfsr {

/// Deterministic random source: std::mt19937_64 (whose output sequence the
/// standard fixes bit-for-bit) with hand-written range reductions, since the
/// standard distributions are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
    std::uint64_t uniform_int(std::uint64_t n) {
        detail::require(n > 0, "uniform_int range must be positive");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v;
        do {
            v = engine_();
        } while (v >= limit);
        return v % n;
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Full engine state as portable decimal text.
    [[nodiscard]] std::string state() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }

    void set_state(const std::string& text) {
        std::istringstream is(text);
        std::mt19937_64 e;
        is >> e;
        if (is.fail()) throw DataError("malformed rng state");
        engine_ = e;
    }

    bool operator==(const Rng&) const = default;

private:
    std::mt19937_64 engine_;
};

}  // namespace icfsr
