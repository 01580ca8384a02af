#pragma once

#include <stdexcept>
#include <string>

namespace icfsr {

/// A caller-supplied argument violates an operation's precondition
/// (bad shape, scale outside the configured set, malformed config).
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Input data is missing, unreadable, corrupt or unusable for the request.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The optimizer produced a non-finite loss; the step was not applied.
class NonFiniteLoss : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
    if (!cond) throw InvalidArgument(what);
}

}  // namespace detail
}  // namespace icfsr
